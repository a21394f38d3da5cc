"""Spec files: a sectioned text format (INI-like) and its JSON mirror.

Sections
--------
[problem]     name
[symbols]     independent, coordinates, functions, derivatives.<f> = names of f', f'', ...
[bindings]    f(s) = expression in s          (optional concrete formal functions)
one system:   [raw]     A_<t> = row; row; ...  (entries separated by commas)
              [type-g]  potentials, constraints = expr; expr
              [type-h]  F = expression in p11, p12, ...
              [type-i]  coordinates, Q = row; row; ...
[family]      main, aux                        (one-parameter characteristic family)
[diagonal]    kappa<a> = ..., lift<a> = ..., seed = ... | reduction = N
[net]         parameters, map = expr; expr | csv = path, samples, grid, conjugacy
[demo]        tau, box, resolutions, two_component_resolutions, simple_wave_resolutions
[settings]    base_point, box, resolution, samples, seed, threads, csv_dir, report, timing, refine
[tolerances]  <name> = value                   (see config.Tolerances)
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import DEFAULT, Tolerances
from .gibbons_tsarev import ParamCharFamily
from .qls import QlsSpec, build_raw, build_type_g, build_type_h, build_type_i, hessian_coords
from .symkernel import Lambda, SymbolTable, lambdify, parse, to_rf
from .tsarev import AffineLift, DiagonalSystem, r_names

SYSTEM_SECTIONS = ("raw", "type-g", "type-h", "type-i")
KNOWN_SECTIONS = {"problem", "symbols", "bindings", "family", "diagonal", "net", "demo",
                  "settings", "tolerances", *SYSTEM_SECTIONS}
DEFAULT_SEED = 0x48594452


class SpecFileError(ValueError):
    pass


def _list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _rows(text: str) -> list[list[str]]:
    return [_list(r) for r in text.split(";") if r.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in _list(text)]


def _box(text: str) -> list[tuple[float, float]]:
    """'0:0.2, 0:0.2' -> [(0, 0.2), (0, 0.2)]."""
    out = []
    for part in _list(text):
        lo, _, hi = part.partition(":")
        if not hi:
            raise SpecFileError(f"box interval {part!r} must read lo:hi")
        out.append((float(lo), float(hi)))
    return out


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise SpecFileError(f"expected yes/no, got {text!r}")


@dataclass
class Settings:
    base_point: list[float] | None = None
    box: list[tuple[float, float]] | None = None
    resolution: int = 16
    samples: int | None = None
    seed: int = DEFAULT_SEED
    threads: int | None = None
    csv_dir: str | None = None
    report: str | None = None
    timing: bool = False
    refine: bool = True
    tol_overrides: dict = field(default_factory=dict)

    @property
    def tol(self) -> Tolerances:
        return DEFAULT.with_overrides(self.tol_overrides)

    def as_dict(self) -> dict:
        return {"base_point": self.base_point, "box": [list(b) for b in self.box] if self.box else None,
                "resolution": self.resolution, "samples": self.samples, "seed": hex(self.seed),
                "refine": self.refine}


@dataclass
class DiagonalBlock:
    system: DiagonalSystem | None = None
    lift: AffineLift | None = None
    seed: list[float] | None = None
    reduction: int | None = None     # N: use the family's N-component reduction


@dataclass
class NetBlock:
    parameters: list[str]
    exprs: list[str] | None = None
    csv: str | None = None
    samples: list[list[float]] | None = None
    grid: int | None = None
    conjugacy: str = "auto"          # auto | yes | no


@dataclass
class SpecFile:
    name: str
    path: str
    digest: str
    sections: dict
    table: SymbolTable
    bindings: dict[str, Lambda]
    system: QlsSpec
    family: ParamCharFamily | None
    diagonal: DiagonalBlock | None
    net: NetBlock | None
    demo: dict
    settings: Settings


# reading

def read_sections(path: str) -> tuple[dict, bytes]:
    """Raw sections {name: {key: value}} from a .spec or .json file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".json"):
        raw = json.loads(data.decode())
        sections = {}
        for name, body in raw.items():
            if not isinstance(body, Mapping):
                raise SpecFileError(f"section {name!r} must be an object")
            sections[name] = {k: _json_value(v) for k, v in body.items()}
        return sections, data
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(data.decode(), source=path)
    except configparser.Error as exc:
        raise SpecFileError(str(exc)) from exc
    return {s: dict(cp[s]) for s in cp.sections()}, data


def _json_value(v) -> str:
    """JSON mirror: lists become comma lists, lists of lists become row lists."""
    if isinstance(v, list):
        if v and all(isinstance(r, list) for r in v):
            return "; ".join(", ".join(str(e) for e in r) for r in v)
        return ", ".join(str(e) for e in v)
    if isinstance(v, bool):
        return "yes" if v else "no"
    return str(v)


def load_spec(path: str, overrides: Mapping | None = None) -> SpecFile:
    sections, data = read_sections(path)
    unknown = set(sections) - KNOWN_SECTIONS
    if unknown:
        raise SpecFileError(f"unknown sections {sorted(unknown)}")
    return build_spec(sections, path, hashlib.sha256(data).hexdigest(), overrides)


def build_spec(sections: dict, path: str = "<memory>", digest: str = "",
               overrides: Mapping | None = None) -> SpecFile:
    sec = lambda name: sections.get(name, {})  # noqa: E731
    name = sec("problem").get("name", os.path.splitext(os.path.basename(path))[0])
    sym = sec("symbols")
    indep = _list(sym.get("independent", "t, x, y"))
    functions = _list(sym.get("functions", ""))
    dnames = {k.split(".", 1)[1]: _list(v) for k, v in sym.items() if k.startswith("derivatives.")}

    def table(variables) -> SymbolTable:
        t = SymbolTable()
        t.declare_variables(*variables)
        if functions:
            t.declare_functions(*functions, derivative_names=dnames)
        return t

    bindings = {}
    for key, body in sec("bindings").items():
        fname, _, rest = key.partition("(")
        var = rest.rstrip(")").strip() or "s"
        if fname not in functions:
            raise SpecFileError(f"binding for undeclared function {fname!r}")
        bindings[fname] = lambdify(var, parse(body, table([var])))

    present = [s for s in SYSTEM_SECTIONS if s in sections]
    if len(present) != 1:
        raise SpecFileError(f"exactly one system block is required, found {present or 'none'}")
    settings = _settings(sec("settings"), sec("tolerances"), overrides or {})
    system, tab = _system(present[0], sections[present[0]], name, indep, sym, table, functions,
                          bindings, settings.base_point)

    family = None
    if "family" in sections:
        f = sec("family")
        family = ParamCharFamily(system, f.get("main"), f.get("aux"))

    diagonal = _diagonal(sec("diagonal"), table) if "diagonal" in sections else None
    net = _net(sec("net"), path) if "net" in sections else None
    return SpecFile(name, path, digest, sections, tab, bindings, system, family, diagonal, net,
                    dict(sec("demo")), settings)


def _settings(s: dict, tols: dict, overrides: Mapping) -> Settings:
    out = Settings()
    if "base_point" in s:
        out.base_point = _floats(s["base_point"])
    if "box" in s:
        out.box = _box(s["box"])
    for key in ("resolution", "samples", "threads"):
        if key in s:
            setattr(out, key, int(s[key]))
    if "seed" in s:
        out.seed = int(s["seed"], 0)
    for key in ("csv_dir", "report"):
        if key in s:
            setattr(out, key, s[key])
    for key in ("timing", "refine"):
        if key in s:
            setattr(out, key, _bool(s[key]))
    out.tol_overrides = dict(tols)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "tol":
            out.tol_overrides.update(value)
        else:
            setattr(out, key, value)
    try:
        out.tol
    except KeyError as exc:
        raise SpecFileError(str(exc.args[0])) from exc
    return out


def _system(kind: str, body: dict, name: str, indep, sym: dict, table, functions, bindings,
            base_point):
    if kind == "raw":
        coords = _list(sym.get("coordinates", ""))
        if not coords:
            raise SpecFileError("[symbols] coordinates are required for a raw system")
        tab = table(coords)
        mats = []
        for t in indep:
            key = f"A_{t}"
            if key not in body:
                raise SpecFileError(f"[raw] is missing {key}")
            mats.append([[to_rf(parse(e, tab)) for e in row] for row in _rows(body[key])])
        return build_raw(name, indep, coords, mats, functions, bindings), tab
    if kind == "type-g":
        pots = _list(body.get("potentials", ""))
        coords = [f"{w}_{t}" for w in pots for t in indep]
        tab = table(coords)
        F = [to_rf(parse(e, tab)) for e in body.get("constraints", "").split(";") if e.strip()]
        return build_type_g(indep, pots, F, base_point, name, functions, bindings), tab
    if kind == "type-h":
        tab = table(hessian_coords(len(indep)))
        return build_type_h(indep, to_rf(parse(body["F"], tab)), base_point, name, functions,
                            bindings), tab
    coords = _list(body.get("coordinates", sym.get("coordinates", "")))
    tab = table(coords)
    Q = [[to_rf(parse(e, tab)) for e in row] for row in _rows(body["Q"])]
    return build_type_i(indep, coords, Q, base_point, name, functions, bindings), tab


def _diagonal(d: dict, table) -> DiagonalBlock:
    if "reduction" in d:
        return DiagonalBlock(reduction=int(d["reduction"]))
    rows = sorted((k for k in d if k.startswith("kappa")), key=lambda k: int(k[5:]))
    if not rows:
        raise SpecFileError("[diagonal] needs kappa1, kappa2, ... or reduction = N")
    N = len(rows)
    tab = table(r_names(N))
    kappa = [[to_rf(parse(e, tab)) for e in _list(d[k])] for k in rows]
    sys = DiagonalSystem(kappa, name=d.get("name", "diagonal"))
    lift = None
    if any(f"lift{a + 1}" in d for a in range(N)):
        lift = AffineLift([to_rf(parse(d.get(f"lift{a + 1}", "0"), tab)) for a in range(N)])
    seed = _floats(d["seed"]) if "seed" in d else [0.0] * N
    return DiagonalBlock(sys, lift, seed)


def _net(d: dict, path: str) -> NetBlock:
    params = _list(d.get("parameters", ""))
    exprs = [e.strip() for e in d["map"].split(";") if e.strip()] if "map" in d else None
    csv = None
    if "csv" in d:
        csv = d["csv"] if os.path.isabs(d["csv"]) else os.path.join(os.path.dirname(path), d["csv"])
    if (exprs is None) == (csv is None):
        raise SpecFileError("[net] needs exactly one of map or csv")
    samples = [[float(v) for v in _list(r)] for r in d["samples"].split(";") if r.strip()] \
        if "samples" in d else None
    conj = d.get("conjugacy", "auto").strip().lower()
    if conj not in ("auto", "yes", "no"):
        raise SpecFileError("[net] conjugacy must be auto, yes or no")
    return NetBlock(params, exprs, csv, samples, int(d["grid"]) if "grid" in d else None, conj)


def load_net_csv(path: str, N: int):
    """Grid CSV with columns r1..rN then U components -> (axes, values (*grid, m))."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    r, vals = data[:, :N], data[:, N:]
    axes = [np.unique(r[:, a]) for a in range(N)]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise SpecFileError(f"{path}: samples do not form a full tensor grid")
    order = np.lexsort(tuple(r[:, a] for a in reversed(range(N))))
    return axes, vals[order].reshape(shape + (vals.shape[1],))
