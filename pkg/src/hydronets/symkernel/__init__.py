"""Exact symbolic kernel: expressions, rational functions, formal functions."""
from .calculus import bind_functions, diff, substitute
from .expr import (
    Add, Apply, Div, Expr, Function, Lambda, Mul, Num, ONE, Pow, Sym, SymbolTable, ZERO,
    as_expr, declare_function, lookup_function, symbols,
)
from .parser import ParseError, UndeclaredIdentifier, parse
from .poly import Poly, poly_gcd
from .printer import pretty, to_str
from .rational import (
    ONE_RF, SEED, ZERO_RF, RationalFn, UnboundSymbolError, ZeroDenominatorError, ZeroVerdict,
    as_rf, atom, atom_info, bind_rf, compile_rf, derivation, eval_num, eval_rf, is_atom_key,
    is_zero, lambdify, normalize, partial, rf_to_expr, substitute_rf, to_rf, zero_test,
)

__all__ = [
    "Add", "Apply", "Div", "Expr", "Function", "Lambda", "Mul", "Num", "ONE", "Pow", "Sym",
    "SymbolTable", "ZERO", "as_expr", "declare_function", "lookup_function", "symbols",
    "bind_functions", "diff", "substitute", "ParseError", "UndeclaredIdentifier", "parse",
    "Poly", "poly_gcd", "pretty", "to_str", "ONE_RF", "SEED", "ZERO_RF", "RationalFn",
    "UnboundSymbolError", "ZeroDenominatorError", "ZeroVerdict", "as_rf", "atom", "atom_info",
    "bind_rf", "compile_rf", "derivation", "eval_num", "eval_rf", "is_atom_key", "is_zero",
    "lambdify", "normalize", "partial", "rf_to_expr", "substitute_rf", "to_rf", "zero_test",
]
