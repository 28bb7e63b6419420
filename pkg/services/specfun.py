"""
Special-function kernels used by every other service.

- Lambert W on the principal (0) and lower (-1) real branches
- Complete elliptic integral of the first kind, modulus convention
- Jacobi elliptic functions sn, cn, dn (and cs) by the AGM / descending Landen scheme
- Fresnel integrals with C(x) + iS(x) = int_0^x exp(i pi t^2 / 2) dt

The modulus p is used throughout (p**2 is the parameter), so cn(u, p) with
p in [0, 1] and K(p) the quarter period of cn.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
from scipy import special

from Utils import constants
from Utils.errors import DivergenceError, DomainError, PoleError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class JacobiTriple:
    """Values (sn, cn, dn) of the Jacobi elliptic functions at one point."""

    sn: float
    cn: float
    dn: float


# ---------------------------------------------------------------------------
# Lambert W
# ---------------------------------------------------------------------------

def _halley(x: float, w: float) -> float:
    """Refine w so that w*exp(w) = x."""
    for _ in range(constants.LAMBERT_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        w1 = w + 1.0
        if w1 == 0.0:
            # exactly at the branch point
            return w
        dw = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w -= dw
        if abs(dw) < 0.7e-16 * (2.0 + abs(w)):
            break
    return w


def _check_lambert_domain(x: float) -> None:
    if not math.isfinite(x):
        raise DomainError(f"Lambert W needs a finite argument, got {x}")
    if x < -constants.INV_E:
        raise DomainError(f"Lambert W is real only for x >= -1/e, got {x}")


def lambert_w0(x: float) -> float:
    """
    Principal branch W0 of the Lambert function.

    Args:
        x: Argument, x >= -1/e

    Returns:
        w >= -1 with w*exp(w) = x
    """
    x = float(x)
    _check_lambert_domain(x)
    if x == 0.0:
        return 0.0
    if x == -constants.INV_E:
        return -1.0

    if abs(x + constants.INV_E) <= 1.5:
        # branch-point series
        seed = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0)) - 1.0
    else:
        log_x = math.log(x)
        seed = log_x - math.log(log_x)
    return max(_halley(x, seed), -1.0)


def lambert_wm1(x: float) -> float:
    """
    Lower real branch W_{-1} of the Lambert function.

    Args:
        x: Argument, -1/e <= x < 0

    Returns:
        w <= -1 with w*exp(w) = x
    """
    x = float(x)
    _check_lambert_domain(x)
    if x >= 0.0:
        raise DomainError(f"W_-1 is real only for -1/e <= x < 0, got {x}")
    if x == -constants.INV_E:
        return -1.0

    if x < -0.25:
        seed = -1.0 - math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
    else:
        log_mx = math.log(-x)
        seed = log_mx - math.log(-log_mx)
    return min(_halley(x, seed), -1.0)


# ---------------------------------------------------------------------------
# Elliptic integral and Jacobi functions
# ---------------------------------------------------------------------------

def _check_modulus(p: float) -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise DomainError(f"Elliptic modulus must lie in [0, 1], got {p}")
    return p


def _agm_sequence(p: float) -> Tuple[List[float], List[float]]:
    """Arithmetic-geometric mean ladder (a_n, c_n) started from (1, p', p)."""
    a_seq = [1.0]
    c_seq = [p]
    b = math.sqrt((1.0 - p) * (1.0 + p))
    for _ in range(constants.LANDEN_MAX_ITER):
        a = a_seq[-1]
        if abs(c_seq[-1]) <= 1e-16 * a:
            break
        a_seq.append(0.5 * (a + b))
        c_seq.append(0.5 * (a - b))
        b = math.sqrt(a * b)
    return a_seq, c_seq


def elliptic_K(p: float) -> float:
    """
    Complete elliptic integral of the first kind K(p) in the modulus convention.

    Args:
        p: Modulus, 0 <= p < 1

    Returns:
        The quarter period of cn(., p)
    """
    p = _check_modulus(p)
    if p == 1.0:
        raise DivergenceError("K(p) diverges at p = 1")
    a_seq, _ = _agm_sequence(p)
    return math.pi / (2.0 * a_seq[-1])


def jacobi_array(u: ArrayLike, p: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized sn, cn, dn for an array of arguments at one modulus.

    Args:
        u: Arguments (scalar or array)
        p: Modulus in [0, 1]

    Returns:
        Tuple of arrays (sn, cn, dn) shaped like u
    """
    p = _check_modulus(p)
    u = np.asarray(u, dtype=float)

    if p == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    if p > 1.0 - constants.HYPERBOLIC_SWITCH:
        sech = 1.0 / np.cosh(u)
        return np.tanh(u), sech, sech.copy()

    a_seq, c_seq = _agm_sequence(p)
    n = len(a_seq) - 1
    phi = (2.0 ** n) * a_seq[n] * u
    for m in range(n, 0, -1):
        ratio = np.clip(c_seq[m] / a_seq[m] * np.sin(phi), -1.0, 1.0)
        phi = 0.5 * (phi + np.arcsin(ratio))

    sn = np.sin(phi)
    cn = np.cos(phi)
    p_prime_sq = (1.0 - p) * (1.0 + p)
    dn = np.sqrt(p_prime_sq + (p * cn) ** 2)
    return sn, cn, dn


def jacobi(u: float, p: float) -> JacobiTriple:
    """
    Jacobi elliptic functions at a single point.

    Args:
        u: Argument
        p: Modulus in [0, 1]

    Returns:
        JacobiTriple (sn, cn, dn)
    """
    if not math.isfinite(float(u)):
        raise DomainError(f"Jacobi functions need a finite argument, got {u}")
    sn, cn, dn = jacobi_array(float(u), p)
    return JacobiTriple(float(sn), float(cn), float(dn))


def jacobi_cs(u: float, p: float) -> float:
    """cs(u, p) = cn/sn; reduces to cosech(u) at p = 1."""
    triple = jacobi(u, p)
    if abs(triple.sn) <= 1e-14:
        raise PoleError(f"cs(u, p) has a pole at u={u}, p={p}")
    return triple.cn / triple.sn


# ---------------------------------------------------------------------------
# Fresnel integrals
# ---------------------------------------------------------------------------

def fresnel(x: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """
    Fresnel integrals C(x), S(x) with kernel exp(i pi t^2 / 2).

    Args:
        x: Real argument (scalar or array)

    Returns:
        Tuple (C, S); both are odd and tend to 1/2 as x -> infinity
    """
    s_val, c_val = special.fresnel(x)
    if np.ndim(s_val) == 0:
        return float(c_val), float(s_val)
    return c_val, s_val
