"""Integer-valued sign-change machinery for cyclic state vectors.

The central quantity ``sigma(x)`` counts the cyclically adjacent coordinate
pairs of x whose delta-weighted product is non-positive.  With the standard
negative-feedback sign vector (delta_1 = -1, all others +1) it takes odd
values in {1, 3, ..., ntilde(n)}, is continuous on the set of vectors with no
zero coordinate, and extends continuously to the admissible set Lambda.  Off
Lambda the neighbourhood extrema (sigma_m, sigma_M) bracket it with a strict
gap.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import DimensionError, DomainError

#: Relative threshold below which a coordinate is treated as exactly zero.
#: A coordinate x_i counts as zero iff |x_i| <= TAU_ZERO * max(1, ||x||_inf).
TAU_ZERO = 1e-9


def ntilde(n: int) -> int:
    """Largest odd integer <= n; the top of sigma's range."""
    if n < 3:
        raise DimensionError(f"dimension must be >= 3, got {n}")
    return n if n % 2 == 1 else n - 1


def canonical_delta(n: int) -> np.ndarray:
    """The negative-feedback sign vector (-1, +1, ..., +1) of length n."""
    if n < 3:
        raise DimensionError(f"dimension must be >= 3, got {n}")
    delta = np.ones(n, dtype=int)
    delta[0] = -1
    return delta


def delta_product(delta) -> int:
    """The loop sign Delta = delta_1 * ... * delta_n."""
    return int(np.prod(np.asarray(delta, dtype=int)))


def is_canonical_delta(delta) -> bool:
    delta = np.asarray(delta, dtype=int)
    return delta[0] == -1 and (delta[1:] == 1).all()


def _as_delta(delta, n: int) -> np.ndarray:
    if delta is None:
        return canonical_delta(n)
    delta = np.asarray(delta, dtype=int)
    if delta.shape != (n,):
        raise DimensionError(f"delta has length {delta.size}, expected {n}")
    if not (np.abs(delta) == 1).all():
        raise DomainError("delta entries must be -1 or +1")
    return delta


def _as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DimensionError(f"state vector must be 1-d with length >= 3, got shape {x.shape}")
    return x


def zero_mask(x, tau_zero: float = TAU_ZERO) -> np.ndarray:
    """Boolean mask of coordinates treated as numerically zero."""
    x = np.asarray(x, dtype=float)
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    return np.abs(x) <= tau_zero * scale


def sigma_of_sign_pattern(signs, delta=None) -> int:
    """sigma for a vector given only by its (nonzero) coordinate signs.

    ``signs`` must contain only -1/+1 entries; sigma depends on x through
    these signs alone.
    """
    s = np.asarray(signs, dtype=int)
    d = _as_delta(delta, s.size)
    return int(np.count_nonzero(d * s * np.roll(s, 1) < 0))


def sigma(x, delta=None, tau_zero: float = TAU_ZERO) -> int:
    """Count of indices i with delta_i * x_i * x_{i-1} <= 0 (cyclic, x_0 = x_n).

    Defined only for vectors with no (numerically) zero coordinate; for
    vectors with zeros use :func:`sigma_extended` (on Lambda) or
    :func:`sigma_min_max`.
    """
    x = _as_state(x)
    d = _as_delta(delta, x.size)
    mask = zero_mask(x, tau_zero)
    if mask.any():
        where = ", ".join(f"x{i + 1}" for i in np.flatnonzero(mask))
        raise DomainError(
            f"sigma is undefined at zero coordinates ({where}); "
            "use sigma_extended on Lambda or sigma_min_max"
        )
    return sigma_of_sign_pattern(np.sign(x).astype(int), d)


def in_lambda(x, delta=None, tau_zero: float = TAU_ZERO) -> bool:
    """Membership in the admissible set Lambda.

    True iff every zero coordinate x_i has delta_i * delta_{i+1} * x_{i+1} *
    x_{i-1} < 0 strictly (cyclic indices).  Vectors without zero coordinates
    are always admissible.
    """
    x = _as_state(x)
    n = x.size
    d = _as_delta(delta, n)
    mask = zero_mask(x, tau_zero)
    s = np.sign(x).astype(int)
    s[mask] = 0
    for i in np.flatnonzero(mask):
        j = (i + 1) % n
        if d[i] * d[j] * s[j] * s[i - 1] >= 0:
            return False
    return True


def sigma_min_max(
    x,
    delta=None,
    tau_zero: float = TAU_ZERO,
    zero_vector_full_range: bool = False,
) -> tuple[int, int]:
    """Neighbourhood extrema (sigma_m(x), sigma_M(x)).

    Computed exactly by enumerating all 2**z sign resolutions of the z zero
    coordinates (nonzero coordinates keep their signs) and taking the min and
    max of sigma over the resolutions.  For the zero vector the extrema
    degenerate to the full range (1, ntilde(n)); that value is only reported
    when ``zero_vector_full_range`` is set, otherwise a DomainError is raised.
    """
    x = _as_state(x)
    n = x.size
    d = _as_delta(delta, n)
    mask = zero_mask(x, tau_zero)
    if mask.all():
        if zero_vector_full_range:
            return 1, ntilde(n)
        raise DomainError(
            "sigma_m/sigma_M of the zero vector degenerate to the full range; "
            "pass zero_vector_full_range=True to report (1, ntilde)"
        )
    zeros = np.flatnonzero(mask)
    s0 = np.sign(x).astype(int)
    s0[mask] = 0
    if zeros.size == 0:
        v = sigma_of_sign_pattern(s0, d)
        return v, v
    values = []
    for combo in itertools.product((-1, 1), repeat=zeros.size):
        s = s0.copy()
        s[zeros] = combo
        values.append(sigma_of_sign_pattern(s, d))
    return min(values), max(values)


def sigma_extended(x, delta=None, tau_zero: float = TAU_ZERO) -> int:
    """The continuous extension of sigma to Lambda.

    Equals the common value sigma_m(x) = sigma_M(x); raises DomainError off
    Lambda, where no continuous value exists.
    """
    x = _as_state(x)
    d = _as_delta(delta, x.size)
    if not in_lambda(x, d, tau_zero):
        raise DomainError("vector is not in Lambda; sigma has no continuous extension there")
    lo, hi = sigma_min_max(x, d, tau_zero)
    if lo != hi:
        raise AssertionError(f"sigma_m != sigma_M on Lambda ({lo} != {hi}); this is a bug")
    return lo
