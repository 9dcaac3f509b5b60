"""Model container: dimension, period, right-hand sides, parameters, model files.

A model file is JSON with fields ``n``, ``period``, ``equations`` (n infix
expression strings), ``params`` (name -> number), ``cyclic`` (bool, default
true) and optionally ``domain`` ({"lo": [...], "hi": [...]}, the sampling box
for structural checks) and ``name``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr
from .errors import ModelFormatError

__all__ = ["Box", "ModelSpec", "parse_model_file", "serialize_model", "load_model", "save_model"]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used both as a state domain hint and a sampling region."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ModelFormatError("box lo/hi lengths differ")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ModelFormatError("box must have positive volume (lo < hi componentwise)")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def sample(self, rng, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


def _cyclic_neighbourhood(i: int, n: int) -> set[int]:
    # 1-based indices of x_{i-1}, x_i, x_{i+1} with cyclic wrap-around
    return {(i - 2) % n + 1, i, i % n + 1}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An n-dimensional time-periodic ODE system given by expression ASTs.

    Immutable after construction; compiled evaluators are cached lazily.
    """

    n: int
    period: float
    rhs: tuple
    params: dict = field(default_factory=dict)
    cyclic: bool = True
    domain: Box | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rhs", tuple(self.rhs))
        object.__setattr__(self, "params", dict(self.params))
        if self.n < 3:
            raise ModelFormatError(f"model dimension must be >= 3, got {self.n}")
        if not self.period > 0:
            raise ModelFormatError(f"period must be positive, got {self.period}")
        if len(self.rhs) != self.n:
            raise ModelFormatError(f"expected {self.n} equations, got {len(self.rhs)}")
        if self.domain is not None and self.domain.dim != self.n:
            raise ModelFormatError("domain box dimension does not match model dimension")
        for i, e in enumerate(self.rhs, start=1):
            indices = expr.state_indices(e)
            if any(j > self.n for j in indices):
                bad = max(indices)
                raise ModelFormatError(f"equation {i} references x{bad}, but n = {self.n}")
            unbound = expr.param_names(e) - set(self.params)
            if unbound:
                raise ModelFormatError(
                    f"equation {i} has unbound parameters: {', '.join(sorted(unbound))}"
                )
            if self.cyclic:
                off = indices - _cyclic_neighbourhood(i, self.n)
                if off:
                    raise ModelFormatError(
                        f"model declared cyclic but equation {i} references "
                        f"x{min(off)} outside the cyclic neighbourhood"
                    )

    # -- symbolic structure ------------------------------------------------

    @cached_property
    def jacobian(self) -> tuple:
        """n x n matrix of expressions, entry (i, j) = d rhs_i / d x_j."""
        return tuple(
            tuple(expr.differentiate(e, j) for j in range(1, self.n + 1)) for e in self.rhs
        )

    # -- compiled evaluators -------------------------------------------------

    @cached_property
    def _rhs_fn(self):
        return expr.compile_exprs(self.rhs, self.params)

    @cached_property
    def _jac_fn(self):
        flat = [entry for row in self.jacobian for entry in row]
        return expr.compile_exprs(flat, self.params)

    def f(self, t: float, x) -> tuple:
        """Right-hand side value at (t, x); returns a length-n tuple."""
        return self._rhs_fn(t, x)

    def jac(self, t: float, x) -> np.ndarray:
        """Jacobian value at (t, x) as an (n, n) array."""
        return np.array(self._jac_fn(t, x), dtype=float).reshape(self.n, self.n)

    # -- identity ------------------------------------------------------------

    @cached_property
    def model_hash(self) -> str:
        return hashlib.sha256(serialize_model(self, indent=None).encode()).hexdigest()[:12]


def serialize_model(m: ModelSpec, indent: int | None = 2) -> str:
    doc = {
        "n": m.n,
        "period": m.period,
        "equations": [expr.unparse(e) for e in m.rhs],
        "params": {k: m.params[k] for k in sorted(m.params)},
        "cyclic": m.cyclic,
    }
    if m.domain is not None:
        doc["domain"] = {"lo": list(m.domain.lo), "hi": list(m.domain.hi)}
    if m.name:
        doc["name"] = m.name
    return json.dumps(doc, indent=indent)


def parse_model_file(text: str) -> ModelSpec:
    """Parse model-file JSON text into a fully bound ModelSpec."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must be a JSON object")
    missing = {"n", "period", "equations"} - set(doc)
    if missing:
        raise ModelFormatError(f"model file missing fields: {', '.join(sorted(missing))}")
    n = doc["n"]
    if not isinstance(n, int):
        raise ModelFormatError(f"field 'n' must be an integer, got {n!r}")
    equations = doc["equations"]
    if not isinstance(equations, list) or not all(isinstance(s, str) for s in equations):
        raise ModelFormatError("field 'equations' must be a list of strings")
    if len(equations) != n:
        raise ModelFormatError(f"dimension mismatch: n = {n} but {len(equations)} equations")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ModelFormatError("field 'params' must be an object")
    try:
        params = {k: float(v) for k, v in params.items()}
    except (TypeError, ValueError):
        raise ModelFormatError("parameter values must be numbers") from None
    domain = None
    if "domain" in doc and doc["domain"] is not None:
        d = doc["domain"]
        if not isinstance(d, dict) or "lo" not in d or "hi" not in d:
            raise ModelFormatError("field 'domain' must be an object with 'lo' and 'hi'")
        domain = Box(tuple(d["lo"]), tuple(d["hi"]))
    rhs = tuple(expr.parse_expression(s) for s in equations)
    return ModelSpec(
        n=n,
        period=float(doc["period"]),
        rhs=rhs,
        params=params,
        cyclic=bool(doc.get("cyclic", True)),
        domain=domain,
        name=str(doc.get("name", "")),
    )


def load_model(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model_file(fh.read())


def save_model(m: ModelSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(m))
        fh.write("\n")
