"""Numeric tolerances and iteration limits shared by the numeric probes and solvers."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    rank_rel: float = 1e-9          # nullspace cut-off, relative to the largest singular value
    dedupe: float = 1e-6            # projective identification of unit vectors
    newton_tol: float = 1e-12       # pencil / hodograph Newton residual
    newton_maxit: int = 50
    pencil_retries: int = 40
    probe: float = 1e-8             # compliancy probe rank decisions
    conjugacy: float = 1e-8         # sigma_3/sigma_1 for symbolic nets
    prenet: float = 1e-8
    membership: float = 1e-8
    hodograph_accept: float = 1e-10
    collision: float = 1e-6         # |lambda_a - lambda_b| below this halts integration
    picard_tol: float = 1e-14
    picard_maxit: int = 200
    cfl: float = 0.5

    def with_overrides(self, overrides: dict[str, str | float]) -> "Tolerances":
        known = {f.name: f.type for f in fields(self)}
        vals = {}
        for k, v in overrides.items():
            if k not in known:
                raise KeyError(f"unknown tolerance {k!r}; known: {', '.join(sorted(known))}")
            cur = getattr(self, k)
            vals[k] = int(v) if isinstance(cur, int) else float(v)
        return replace(self, **vals)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT = Tolerances()
