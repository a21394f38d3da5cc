"""Recursive-descent parser for the ASCII expression grammar.

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := INT | IDENT | IDENT '(' expr ')' | '(' expr ')'

Exponents must reduce to integer constants.  Rationals are written ``p/q``.
"""
from __future__ import annotations

import re
from fractions import Fraction

from .expr import Expr, Num, Sym, SymbolTable, add, div, mul, neg, power

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset


class UndeclaredIdentifier(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"undeclared identifier {name!r}", offset)
        self.name = name


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            off = pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, table: SymbolTable | None, syntax_only: bool = False):
        self.toks = _tokenize(text)
        self.i = 0
        self.table = table
        self.syntax_only = syntax_only

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        kind, v, off = self.peek()
        if v != value or kind == "eof":
            what = "end of input" if kind == "eof" else repr(v)
            raise ParseError(f"expected {value!r}, found {what}", off)
        return self.take()

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            r = self.term()
            e = add(e, r) if op == "+" else add(e, neg(r))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op, off = self.take()[1:]
            r = self.unary()
            if op == "*":
                e = mul(e, r)
            else:
                if isinstance(r, Num) and r.value == 0:
                    raise ParseError("division by constant zero", off)
                e = div(e, r)
        return e

    def unary(self) -> Expr:
        kind, v, _ = self.peek()
        if kind == "op" and v in ("+", "-"):
            self.take()
            e = self.unary()
            return neg(e) if v == "-" else e
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            off = self.take()[2]
            ex = self.unary()
            if not isinstance(ex, Num) or ex.value.denominator != 1:
                raise ParseError("exponent must be an integer constant", off)
            try:
                return power(base, int(ex.value))
            except ZeroDivisionError:
                raise ParseError("zero raised to a negative power", off) from None
        return base

    def atom(self) -> Expr:
        kind, v, off = self.take()
        if kind == "int":
            return Num(Fraction(int(v)))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                fn = self._function(v, off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return fn(arg)
            if self.table is not None and not self.table.has_variable(v):
                raise UndeclaredIdentifier(v, off)
            return Sym(v)
        if kind == "op" and v == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "eof" else repr(v)
        raise ParseError(f"unexpected {what}", off)

    def _function(self, name: str, off: int):
        from .expr import lookup_function, declare_function

        if self.syntax_only:
            return lambda arg: arg
        if self.table is None:
            return lookup_function(name) or declare_function(name)
        fn = self.table.resolve_function(name)
        if fn is None:
            raise UndeclaredIdentifier(name, off)
        return fn


def _check_syntax(text: str) -> None:
    p = _Parser(text, None, syntax_only=True)
    p.expr()
    kind, v, off = p.peek()
    if kind != "eof":
        raise ParseError(f"unexpected {v!r}", off)


def parse(text: str, symbols: SymbolTable | None = None) -> Expr:
    """Parse ``text``; with a symbol table every identifier must be declared.

    Syntax errors are reported before undeclared identifiers.
    """
    if symbols is not None:
        _check_syntax(text)
    p = _Parser(text, symbols)
    e = p.expr()
    kind, v, off = p.peek()
    if kind != "eof":
        raise ParseError(f"unexpected {v!r}", off)
    return e
