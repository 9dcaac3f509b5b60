"""Built-in model factories: the four-species antithetic control loop, the
time-periodic Lotka-Volterra food chain with a closing interaction, a
three-species repressor ring, and a seeded generator of linear systems with
the cyclic two-positive sign pattern.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .expr import evaluate, parse_expression, state_indices
from .modelspec import Box, ModelSpec

__all__ = [
    "antithetic_controller", "periodic_lotka_volterra", "lv_default_coefficients",
    "repressor_ring", "random_two_positive_linear", "builtin_model", "BUILTIN_NAMES",
]

TWO_PI = 2.0 * math.pi


def antithetic_controller(a=(1.0,) * 8) -> ModelSpec:
    """Closed-loop antithetic integral controller: two annihilating controller
    species x1, x4 wrapped around a linear x2 -> x3 chain.

    All eight rates must be positive; the natural state domain is the open
    positive orthant (the declared box is a representative sampling window).
    The system is autonomous, represented with period 1.
    """
    a = tuple(float(v) for v in a)
    if len(a) != 8 or any(v <= 0 for v in a):
        raise DomainError("antithetic controller needs 8 positive rates")
    params = {f"a{i}": v for i, v in enumerate(a, start=1)}
    equations = (
        "a1 - a2*x1*x4",
        "a3*x1 - a4*x2",
        "a5*x2 - a6*x3",
        "a7*x3 - a8*x1*x4",
    )
    return ModelSpec(
        n=4, period=1.0,
        rhs=tuple(parse_expression(s) for s in equations),
        params=params, cyclic=True,
        domain=Box((0.0,) * 4, (10.0,) * 4),
        name="antithetic",
    )


def lv_default_coefficients() -> dict:
    """Coefficient expressions for the bounded reference parameter set.

    Seasonal growth rates 1 + 0.2 sin(2 pi t), unit self-limitation and weak
    (0.2) interactions, chosen so the inward boundary condition holds with
    C about 2 (self-limitation strictly dominates the incoming interaction
    strengths), which the dissipativity probe confirms.
    """
    coeffs = {f"gamma{i}": "1 + 0.2*sin(two_pi*t)" for i in range(1, 5)}
    for name in ("a11", "a22", "a33", "a44"):
        coeffs[name] = "1"
    for name in ("a14", "a21", "a23", "a32", "a34", "a43"):
        coeffs[name] = "0.2"
    return coeffs


_LV_TEMPLATES = (
    "x1*(({gamma1}) - ({a11})*x1 - ({a14})*x4)",
    "x2*(({gamma2}) + ({a21})*x1 - ({a22})*x2 + ({a23})*x3)",
    "x3*(({gamma3}) + ({a32})*x2 - ({a33})*x3 + ({a34})*x4)",
    "x4*(({gamma4}) + ({a43})*x3 - ({a44})*x4)",
)

_LV_NAMES = ("gamma1", "gamma2", "gamma3", "gamma4",
             "a11", "a14", "a21", "a22", "a23", "a32", "a33", "a34", "a43", "a44")


def periodic_lotka_volterra(coeffs: dict | None = None, period: float = 1.0,
                            params: dict | None = None, samples: int = 64) -> ModelSpec:
    """Four-species Lotka-Volterra chain with periodic coefficients and a
    closing x4 -> x1 inhibition.

    ``coeffs`` maps the coefficient names (gamma1..gamma4, a11, a14, a21,
    a22, a23, a32, a33, a34, a43, a44) to expression strings in t (and any
    names bound in ``params``).  Every coefficient except a14 must sample
    strictly positive on [0, period]; a14 may vanish identically, which
    degenerates the ring to an open cooperative chain.  The state domain is
    the open positive orthant.
    """
    coeffs = dict(lv_default_coefficients() if coeffs is None else coeffs)
    missing = set(_LV_NAMES) - set(coeffs)
    if missing:
        raise DomainError(f"missing Lotka-Volterra coefficients: {', '.join(sorted(missing))}")
    params = {"two_pi": TWO_PI} if params is None else dict(params)
    ts = np.linspace(0.0, period, samples)
    for name in _LV_NAMES:
        e = parse_expression(coeffs[name])
        if state_indices(e):
            raise DomainError(f"coefficient {name} must depend on t only, not on the state")
        values = [evaluate(e, t, (), params) for t in ts]
        low = min(values)
        if name == "a14":
            if low < 0:
                raise DomainError(f"coefficient a14 sampled negative ({low!r})")
        elif low <= 0:
            raise DomainError(f"coefficient {name} sampled non-positive ({low!r})")
    equations = tuple(tpl.format(**coeffs) for tpl in _LV_TEMPLATES)
    return ModelSpec(
        n=4, period=float(period),
        rhs=tuple(parse_expression(s) for s in equations),
        params=params, cyclic=True,
        domain=Box((0.0,) * 4, (5.0,) * 4),
        name="lotka_volterra",
    )


def repressor_ring(production: float = 8.0, hill: int = 4) -> ModelSpec:
    """Symmetric three-gene repression ring (each species represses the next).

    With production 8 and Hill exponent 4 the symmetric equilibrium is
    unstable and the ring settles on a limit cycle, which makes the period
    map's limit set an invariant circle: a convenient non-trivial target for
    the omega-net and embedding checks.  Autonomous, represented with
    period 1; all three loop signs are -1, so the loop sign is -1 but the
    sign vector is non-canonical until transformed.
    """
    if production <= 0 or hill < 1:
        raise DomainError("need positive production and hill >= 1")
    params = {"beta": float(production)}
    equations = tuple(
        f"beta/(1 + x{(i - 2) % 3 + 1}^{int(hill)}) - x{i}" for i in (1, 2, 3)
    )
    return ModelSpec(
        n=3, period=1.0,
        rhs=tuple(parse_expression(s) for s in equations),
        params=params, cyclic=True,
        domain=Box((0.0,) * 3, (10.0,) * 3),
        name="repressor_ring",
    )


def random_two_positive_linear(n: int, periodic: bool, seed: int,
                               period: float = 1.0) -> ModelSpec:
    """Seeded random linear system with the cyclic two-positive sign pattern.

    Sub-diagonal entries are strictly positive, the (1, n) corner strictly
    negative (so the cyclic sub-diagonal product is strictly negative and the
    pattern's product condition holds by construction), the (n, 1) corner
    non-positive and super-diagonal entries non-negative with occasional
    exact zeros.  With ``periodic`` every off-diagonal entry is modulated by
    1 + 0.5 sin(2 pi t / T + phase), which keeps all entry signs.

    Diagonal entries are constant and shifted below minus the peak
    off-diagonal row sum, which bounds the matrix measure by a small constant
    and keeps every solution of the 20-period verification span well inside
    floating-point range; diagonal shifts do not affect the sign pattern and
    only rescale solutions, leaving sign traces unchanged.  Deterministic per
    seed.
    """
    if n < 3:
        raise DomainError(f"dimension must be >= 3, got {n}")
    rng = np.random.default_rng(seed)
    sub = rng.uniform(0.5, 1.5, n - 1)              # entries (i+1, i)
    corner_1n = -rng.uniform(0.5, 1.5)
    corner_n1 = 0.0 if rng.random() < 0.5 else -rng.uniform(0.1, 1.0)
    sup = rng.uniform(0.2, 1.0, n - 1)              # entries (i, i+1)
    sup[rng.random(n - 1) < 0.3] = 0.0
    phases = rng.uniform(0.0, TWO_PI, (n, n))

    A0 = np.zeros((n, n))
    for i in range(1, n):
        A0[i, i - 1] = sub[i - 1]
    for i in range(n - 1):
        A0[i, i + 1] = sup[i]
    A0[0, n - 1] = corner_1n
    A0[n - 1, 0] = corner_n1

    peak = 1.5 if periodic else 1.0
    row_sum = np.abs(A0).sum(axis=1)
    diag = -peak * row_sum + rng.uniform(-0.4, 0.1, n)

    w = TWO_PI / period

    def coeff_text(i, j):
        c = float(A0[i, j])
        if c == 0.0:
            return None
        base = repr(c)
        if periodic:
            return f"{base}*(1 + 0.5*sin({w!r}*t + {float(phases[i, j])!r}))"
        return base

    equations = []
    for i in range(n):
        terms = [f"{float(diag[i])!r}*x{i + 1}"]
        for j in range(n):
            if i == j:
                continue
            text = coeff_text(i, j)
            if text is not None:
                terms.append(f"({text})*x{j + 1}")
        equations.append(" + ".join(terms))
    return ModelSpec(
        n=n, period=float(period),
        rhs=tuple(parse_expression(s) for s in equations),
        params={}, cyclic=True, domain=Box((-2.0,) * n, (2.0,) * n),
        name=f"random_two_positive_linear(n={n},seed={seed},periodic={periodic})",
    )


BUILTIN_NAMES = ("antithetic", "lotka_volterra", "repressor_ring")


def builtin_model(name: str) -> ModelSpec:
    """Construct a built-in model by name; raises DomainError for unknown names."""
    factories = {
        "antithetic": antithetic_controller,
        "lotka_volterra": periodic_lotka_volterra,
        "repressor_ring": repressor_ring,
    }
    try:
        return factories[name]()
    except KeyError:
        raise DomainError(
            f"unknown built-in model {name!r}; available: {', '.join(BUILTIN_NAMES)}"
        ) from None
