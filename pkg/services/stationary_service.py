"""
Real stationary states of the cubic NLS with a δ-shell.

Profiles are C·cn(λ(x - x₀), p) (focusing) or C·cs(λ(x - x₀), p) (defocusing)
on (0, a) glued to C′·sech or C′·cosech of λ′(x - x₀′) beyond a. The matching
conditions reduce to one scalar equation H_ℓ(p, λ′) = 0 per branch index ℓ.

With λx₀ = 𝒦(p), the shift identities
    cn(v - 𝒦) = p′ sd(v),  sn(v - 𝒦) = -cd(v),  dn(v - 𝒦) = p′ nd(v)
give every quantity in terms of v = λa without evaluating 𝒦. Root finding
uses the reduced function Ĥ = H/p′, which has the same zeros for p < 1 and a
finite, non-trivial limit at p = 1.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, special
from scipy.spatial import cKDTree

from Utils import constants
from Utils.config import worker_count
from Utils.errors import (
    DomainError,
    InsufficientDataError,
    InternalConsistencyError,
    InvalidProfileError,
    PoleError,
)
from services import specfun
from services.linear_service import ModelParams

logger = logging.getLogger(__name__)

REGIMES = ("focusing", "defocusing")
P_FOCUSING_MIN = 1.0 / math.sqrt(2.0)


@dataclass
class StationaryState:
    """One stationary profile φ and its parameters."""

    regime: str
    ell: int
    p: float
    lam: float
    lam_prime: float
    x0: float
    x0_prime: float
    C: float
    C_prime: float
    Omega: float
    a: float
    alpha: float
    mu_sq: float = float("nan")
    eta: float = float("nan")

    @property
    def g(self) -> int:
        return -1 if self.regime == "focusing" else 1

    @property
    def p_prime(self) -> float:
        return math.sqrt((1.0 - self.p) * (1.0 + self.p))

    @property
    def s_prime(self) -> float:
        """λ′(a - x₀′)."""
        return self.lam_prime * (self.a - self.x0_prime)

    def _inner(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        sn, cn, dn = specfun.jacobi_array(self.lam * x, self.p)
        scale = self.C * self.p_prime
        if self.regime == "focusing":
            return scale * sn / dn, scale * self.lam * cn / dn ** 2
        return -scale * sn / cn, -scale * self.lam * dn / cn ** 2

    def _outer(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        arg = self.lam_prime * (x - self.x0_prime)
        if self.regime == "focusing":
            sech = 1.0 / np.cosh(arg)
            return self.C_prime * sech, -self.C_prime * self.lam_prime * sech * np.tanh(arg)
        cosech = 1.0 / np.sinh(arg)
        return self.C_prime * cosech, -self.C_prime * self.lam_prime * cosech / np.tanh(arg)

    def _piecewise(self, x: Any, part: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        inside = flat <= self.a
        out = np.zeros_like(flat)
        if np.any(inside):
            out[inside] = self._inner(flat[inside])[part]
        if np.any(~inside):
            out[~inside] = self._outer(flat[~inside])[part]
        return out.reshape(x.shape)

    def profile(self, x: Any) -> np.ndarray:
        """φ(x) on [0, ∞); the inner formula is used at x = a."""
        return self._piecewise(x, 0)

    def derivative(self, x: Any) -> np.ndarray:
        """φ′(x); the left derivative is used at x = a."""
        return self._piecewise(x, 1)

    def one_sided_at_shell(self) -> Tuple[float, float, float]:
        """(φ(a), φ′(a-), φ′(a+))."""
        at = np.array([self.a])
        value, left = self._inner(at)
        _, right = self._outer(at)
        return float(value[0]), float(left[0]), float(right[0])

    def to_row(self) -> Dict[str, Any]:
        return {
            "regime": self.regime,
            "ell": self.ell,
            "p": self.p,
            "lambda_prime": self.lam_prime,
            "Omega": self.Omega,
            "mu_sq": self.mu_sq,
            "eta": self.eta,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class BifurcationPoint:
    """Simultaneous zero of H and ∂H/∂p."""

    n: int
    eta_n: float
    Omega_n: float
    p: float
    lambda_prime: float
    ell: int
    regime: str = "focusing"
    h_residual: float = 0.0
    dh_dp_residual: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SearchBox:
    p_min: float
    p_max: float
    lambda_min: float
    lambda_max: float

    @classmethod
    def default(cls, regime: str, params: ModelParams) -> "SearchBox":
        margin = constants.FOLD_P_MARGIN
        p_min = P_FOCUSING_MIN + constants.P_EDGE_GAP if regime == "focusing" else margin
        return cls(p_min=p_min, p_max=1.0 - margin,
                   lambda_min=1e-3 / params.a,
                   lambda_max=constants.LAMBDA_MAX_FACTOR / params.a)

    def contains(self, p: float, lam: float) -> bool:
        return self.p_min <= p <= self.p_max and self.lambda_min <= lam <= self.lambda_max


@dataclass
class ResidualReport:
    """Invariant checks of one reconstructed state."""

    h_residual: float
    continuity: float
    jump: float
    ode: float
    ell_consistent: bool

    def passes(self) -> bool:
        return (self.h_residual <= constants.ROOT_RESIDUAL_REL
                and self.jump <= constants.JUMP_RESIDUAL_TOL
                and self.ode <= constants.ODE_RESIDUAL_TOL
                and self.ell_consistent)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class FoldCounts:
    """Root counts of H(·, λ′* ∓ δ) near a bifurcation point."""

    below: int
    above: int
    delta: float

    @property
    def changes_by_two(self) -> bool:
        return abs(self.below - self.above) == 2


@dataclass
class Branch:
    label: str
    states: List[StationaryState] = field(default_factory=list)


@dataclass
class RealReductionReport:
    max_wronskian: float
    phase: float
    residual_imag: float
    dirichlet_ok: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_regime(regime: str) -> None:
    if regime not in REGIMES:
        raise DomainError(f"regime must be one of {REGIMES}, got '{regime}'")


def _check_ell(ell: int) -> None:
    if ell not in (1, 2):
        raise DomainError(f"ell must be 1 or 2, got {ell}")


class StationaryStateService:
    """Effective equations, branch continuation and bifurcation search."""

    # ------------------------------------------------------------------
    # Effective equations
    # ------------------------------------------------------------------

    def H_focusing(self, p: float, lambda_prime: float, ell: int, params: ModelParams) -> Optional[float]:
        """
        H_ℓ^f(p, λ′) = cn(u*){λ′(-1)^ℓ √(1 - p²w²cn²(u*)) + α} - λ′w sn(u*) dn(u*).

        Here w = 1/√(2p² - 1) and u* = λ′wa - 𝒦(p). At p = 1 both cn(u*) and
        dn(u*) vanish and H = 0; reduced_H carries the limit.

        Returns:
            H, or None when the square-root argument is negative
        """
        _check_ell(ell)
        if not (P_FOCUSING_MIN < p <= 1.0):
            raise DomainError(f"Focusing modulus must lie in (1/√2, 1], got {p}")
        if not lambda_prime > 0:
            raise DomainError(f"λ′ must be positive, got {lambda_prime}")
        if p == 1.0:
            return 0.0
        w = 1.0 / math.sqrt(2.0 * p * p - 1.0)
        u_star = lambda_prime * w * params.a - specfun.elliptic_K(p)
        t = specfun.jacobi(u_star, p)
        arg = 1.0 - p * p * w * w * t.cn ** 2
        if arg < 0.0:
            return None
        sign = (-1.0) ** ell
        return t.cn * (lambda_prime * sign * math.sqrt(arg) + params.alpha) - lambda_prime * w * t.sn * t.dn

    def H_defocusing(self, p: float, lambda_prime: float, ell: int, params: ModelParams) -> float:
        """
        H_ℓ^d(p, λ′) = cn(u*){λ′(-1)^ℓ √(1 + u²cs²(u*)) + α} - uλ′ dn(u*)/sn(u*).

        Here u = 1/√(2 - p²) and u* = uλ′a - 𝒦(p).
        """
        _check_ell(ell)
        if not (0.0 <= p < 1.0):
            raise DomainError(f"Defocusing modulus must lie in [0, 1), got {p}")
        if not lambda_prime > 0:
            raise DomainError(f"λ′ must be positive, got {lambda_prime}")
        u = 1.0 / math.sqrt(2.0 - p * p)
        u_star = u * lambda_prime * params.a - specfun.elliptic_K(p)
        t = specfun.jacobi(u_star, p)
        if abs(t.sn) <= 1e-14:
            raise PoleError(f"sn(u*) = 0 at p={p}, λ′={lambda_prime}")
        cs = t.cn / t.sn
        sign = (-1.0) ** ell
        return (t.cn * (lambda_prime * sign * math.sqrt(1.0 + u * u * cs * cs) + params.alpha)
                - u * lambda_prime * t.dn / t.sn)

    def reduced_H(self, regime: str, p: float, lambda_prime: Any, ell: int,
                  params: ModelParams) -> Any:
        """
        Ĥ = H/p′ evaluated through v = λa (vectorized over λ′).

        Not-admissible points (negative square-root argument, or a cs pole in
        (0, a] for the defocusing profile) are NaN.
        """
        values, _ = self._reduced_with_scale(regime, p, lambda_prime, ell, params)
        return values

    def _reduced_with_scale(self, regime: str, p: float, lambda_prime: Any, ell: int,
                            params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
        lp = np.asarray(lambda_prime, dtype=float)
        sign = (-1.0) ** ell
        alpha = params.alpha
        p_prime = math.sqrt((1.0 - p) * (1.0 + p))

        if regime == "focusing":
            w = 1.0 / math.sqrt(2.0 * p * p - 1.0)
            sn, cn, dn = specfun.jacobi_array(lp * w * params.a, p)
            sd, cd, nd = sn / dn, cn / dn, 1.0 / dn
            arg = 1.0 - (p * w * p_prime * sd) ** 2
            with np.errstate(invalid="ignore"):
                root = np.sqrt(np.where(arg >= 0.0, arg, np.nan))
            values = sd * (lp * sign * root + alpha) + lp * w * cd * nd
            scale = np.abs(sd) * (lp * root + abs(alpha)) + lp * w * np.abs(cd * nd)
            return values, scale

        u = 1.0 / math.sqrt(2.0 - p * p)
        v = lp * u * params.a
        sn, cn, dn = specfun.jacobi_array(v, p)
        inside = v < specfun.elliptic_K(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            sd = sn / dn
            sc = sn / cn
            root = np.sqrt(1.0 + (u * p_prime * sc) ** 2)
            values = sd * (lp * sign * root + alpha) + lp * u / cn
            scale = np.abs(sd) * (lp * root + abs(alpha)) + lp * u / np.abs(cn)
        return np.where(inside, values, np.nan), np.where(inside, scale, np.nan)

    def _reduced_scalar(self, regime: str, p: float, lam: float, ell: int, params: ModelParams) -> float:
        return float(self.reduced_H(regime, p, np.array([lam]), ell, params)[0])

    def relative_residual(self, regime: str, p: float, lam: float, ell: int, params: ModelParams) -> float:
        values, scale = self._reduced_with_scale(regime, p, np.array([lam]), ell, params)
        return float(abs(values[0]) / max(scale[0], 1e-300))

    # ------------------------------------------------------------------
    # Reconstruction
    # ------------------------------------------------------------------

    def reconstruct(self, regime: str, ell: int, p: float, lambda_prime: float,
                    params: ModelParams) -> StationaryState:
        """
        Build the full state at a root (p, λ′) of H_ℓ.

        sign(C) = +1; sign(C′) follows from continuity at a; λ′(a - x₀′)
        carries the sign (-1)^ℓ.
        """
        _check_regime(regime)
        _check_ell(ell)
        a = params.a
        p_prime = math.sqrt((1.0 - p) * (1.0 + p))
        if p_prime == 0.0:
            raise InvalidProfileError("p = 1 gives the zero profile on (0, a)")

        if regime == "focusing":
            w = 1.0 / math.sqrt(2.0 * p * p - 1.0)
            lam = lambda_prime * w
            C = math.sqrt(2.0) * p * lam
            sn, cn, dn = (float(v) for v in specfun.jacobi_array(lam * a, p))
            phi_a = C * p_prime * sn / dn
            s = abs(phi_a) / (math.sqrt(2.0) * lambda_prime)
            if s == 0.0:
                raise InvalidProfileError("φ(a) = 0 cannot be matched by a sech tail")
            if s > 1.0 + 1e-12:
                raise InvalidProfileError(f"|φ(a)| exceeds the sech amplitude (s = {s:.6g})")
            s = min(s, 1.0)
            t = math.sqrt((1.0 - s) * (1.0 + s))
            magnitude = math.atanh(t) if t < 0.9 else math.acosh(1.0 / s)
            s_prime = (-1.0) ** ell * magnitude
            C_prime = math.copysign(math.sqrt(2.0) * lambda_prime, phi_a)
            Omega = (1.0 - 2.0 * p * p) * lam * lam
        else:
            if ell == 1:
                raise InvalidProfileError("ℓ = 1 puts the cosech pole at x₀′ > a")
            u = 1.0 / math.sqrt(2.0 - p * p)
            lam = lambda_prime * u
            if lam * a >= specfun.elliptic_K(p):
                raise InvalidProfileError("cs profile has a pole in (0, a]")
            C = math.sqrt(2.0) * lam
            sn, cn, dn = (float(v) for v in specfun.jacobi_array(lam * a, p))
            phi_a = -C * p_prime * sn / cn
            r = abs(phi_a) / (math.sqrt(2.0) * lambda_prime)
            if r == 0.0:
                raise InvalidProfileError("φ(a) = 0 cannot be matched by a cosech tail")
            s_prime = math.asinh(1.0 / r)
            C_prime = math.copysign(math.sqrt(2.0) * lambda_prime, phi_a)
            Omega = -(2.0 - p * p) * lam * lam

        x0 = specfun.elliptic_K(p) / lam
        state = StationaryState(
            regime=regime, ell=ell, p=p, lam=lam, lam_prime=lambda_prime,
            x0=x0, x0_prime=a - s_prime / lambda_prime, C=C, C_prime=C_prime,
            Omega=Omega, a=a, alpha=params.alpha,
        )
        state.mu_sq = self.norm_mu_sq(state)
        state.eta = -state.mu_sq if regime == "focusing" else state.mu_sq
        return state

    def norm_mu_sq(self, state: StationaryState) -> float:
        """
        μ² = ‖φ‖²: adaptive quadrature on (0, a), closed-form tail beyond a.

        Tails: 2λ′(1 - tanh s′) for sech², 2λ′(coth s′ - 1) for cosech², with
        s′ = λ′(a - x₀′).
        """
        p, lam = state.p, state.lam
        v_a = lam * state.a
        if state.regime == "focusing":
            def integrand(v: float) -> float:
                sn, _, dn = specfun.jacobi_array(v, p)
                return float(sn / dn) ** 2
        else:
            if v_a >= specfun.elliptic_K(p):
                raise InvalidProfileError("Interior integral of cs² diverges")

            def integrand(v: float) -> float:
                sn, cn, _ = specfun.jacobi_array(v, p)
                return float(sn / cn) ** 2

        interior, _ = integrate.quad(integrand, 0.0, v_a, epsabs=0.0, epsrel=1e-12, limit=200)
        interior *= (state.C * state.p_prime) ** 2 / lam

        s_prime = state.s_prime
        if state.regime == "focusing":
            tail = 4.0 * state.lam_prime * special.expit(-2.0 * s_prime)
        else:
            if s_prime <= 0:
                raise InvalidProfileError("cosech tail is not integrable for x₀′ >= a")
            tail = 4.0 * state.lam_prime / math.expm1(2.0 * s_prime)

        mu_sq = interior + tail
        if not mu_sq > 0:
            raise InvalidProfileError(f"Non-positive mass μ² = {mu_sq}")
        return float(mu_sq)

    def stationary_residuals(self, state: StationaryState) -> ResidualReport:
        """
        Matching and ODE residuals of a reconstructed state.

        The ODE residual -φ″ + gφ³ - Ωφ uses a five-point second difference with
        step 0.05/max(λ, λ′), relative to max(|Ωφ| + |φ|³).
        """
        params = ModelParams(a=state.a, alpha=state.alpha)
        h_res = self.relative_residual(state.regime, state.p, state.lam_prime, state.ell, params)

        value_a, left, right = state.one_sided_at_shell()
        outer_a = float(state._outer(np.array([state.a]))[0][0])
        continuity = abs(value_a - outer_a) / max(abs(value_a), abs(outer_a), 1e-300)
        jump_scale = max(abs(left), abs(right), abs(state.alpha * value_a), 1e-300)
        jump = abs(right - left - state.alpha * value_a) / jump_scale

        h = 0.05 / max(state.lam, state.lam_prime)
        pieces = []
        if state.a > 6.0 * h:
            pieces.append(np.linspace(2.0 * h, state.a - 2.0 * h, 241))
        far = max(state.a, state.x0_prime) + 12.0 / state.lam_prime
        pieces.append(np.linspace(state.a + 2.0 * h, far, 481))
        residual = 0.0
        scale = 0.0
        for xs in pieces:
            if state.regime == "defocusing":
                xs = xs[np.abs(xs - state.x0_prime) > 4.0 * h]
            f = [state.profile(xs + k * h) for k in (-2, -1, 0, 1, 2)]
            second = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h)
            phi = f[2]
            residual = max(residual, float(np.max(np.abs(-second + state.g * phi ** 3 - state.Omega * phi))))
            scale = max(scale, float(np.max(np.abs(state.Omega * phi) + np.abs(phi) ** 3)))
        ode = residual / max(scale, 1e-300)

        tanh_sign = math.copysign(1.0, state.s_prime) if state.s_prime != 0 else 0.0
        ell_ok = tanh_sign == (-1.0) ** state.ell or state.s_prime == 0.0
        return ResidualReport(h_residual=h_res, continuity=continuity, jump=jump, ode=ode,
                              ell_consistent=ell_ok)

    # ------------------------------------------------------------------
    # Branch scan
    # ------------------------------------------------------------------

    @staticmethod
    def default_p_grid(regime: str, points: int = constants.P_POINTS) -> np.ndarray:
        """Uniform p-grid plus points 1 - 10^-d clustered at the linear limit."""
        _check_regime(regime)
        lo = P_FOCUSING_MIN + constants.P_EDGE_GAP if regime == "focusing" else 0.0
        uniform = np.linspace(lo, 1.0 - 10.0 ** -constants.P_NEAR_ONE_DECADES[0], points)
        decades = np.linspace(*constants.P_NEAR_ONE_DECADES, constants.P_NEAR_ONE_POINTS)
        return np.unique(np.concatenate([uniform, 1.0 - 10.0 ** -decades]))

    def _period(self, regime: str, p: float, a: float) -> float:
        """λ′-period of the Jacobi functions in Ĥ."""
        K = specfun.elliptic_K(p)
        factor = 1.0 / math.sqrt(2.0 * p * p - 1.0) if regime == "focusing" else 1.0 / math.sqrt(2.0 - p * p)
        return 4.0 * K / (factor * a)

    def _roots_between(self, regime: str, ell: int, p: float, params: ModelParams,
                       lo: float, hi: float) -> List[float]:
        period = self._period(regime, p, params.a)
        n = max(constants.LAMBDA_SCAN_MIN_POINTS, int(math.ceil(30.0 * (hi - lo) / period)))
        grid = np.linspace(lo, hi, n + 1)
        if lo == 0.0:
            grid = grid[1:]
        values = self.reduced_H(regime, p, grid, ell, params)

        def f(lam: float) -> float:
            return self._reduced_scalar(regime, p, lam, ell, params)

        roots = [float(g) for g, val in zip(grid, values) if val == 0.0]
        finite = np.isfinite(values)
        flips = np.nonzero(finite[:-1] & finite[1:] & (np.sign(values[:-1]) * np.sign(values[1:]) < 0))[0]
        for i in flips:
            try:
                root = optimize.brentq(f, grid[i], grid[i + 1], xtol=constants.ROOT_TOL,
                                       rtol=4.0 * np.finfo(float).eps, maxiter=200)
            except (ValueError, RuntimeError) as e:
                logger.debug(f"⚠️ brentq failed on [{grid[i]:.6g}, {grid[i + 1]:.6g}] at p={p}: {e}")
                continue
            roots.append(float(root))
        return sorted(roots)

    def _states_at_p(self, regime: str, ell: int, p: float, params: ModelParams,
                     lambda_max: float) -> List[StationaryState]:
        if regime == "defocusing" and ell == 1:
            # ℓ = 1 puts the cosech pole at x₀′ > a
            return []
        ceiling = math.inf
        if regime == "defocusing":
            # the cs profile stays regular on (0, a] only for λa < 𝒦(p)
            ceiling = specfun.elliptic_K(p) * math.sqrt(2.0 - p * p) / params.a * (1.0 - 1e-9)

        roots: List[float] = []
        lo, hi = 0.0, min(lambda_max, ceiling)
        for _ in range(constants.LAMBDA_MAX_DOUBLINGS + 1):
            found = self._roots_between(regime, ell, p, params, lo, hi)
            roots.extend(found)
            if hi >= ceiling or not any(r > 0.5 * hi for r in found):
                break
            lo, hi = hi, min(2.0 * hi, ceiling)

        states = []
        for lam_prime in roots:
            residual = self.relative_residual(regime, p, lam_prime, ell, params)
            if residual > constants.ROOT_RESIDUAL_REL:
                logger.warning(f"⚠️ Root at p={p:.8g}, λ′={lam_prime:.8g} not polished (|Ĥ| rel {residual:.2e})")
                continue
            try:
                state = self.reconstruct(regime, ell, p, lam_prime, params)
            except InvalidProfileError as e:
                logger.debug(f"Skipping p={p:.8g}, λ′={lam_prime:.8g}: {e}")
                continue
            report = self.stationary_residuals(state)
            if report.jump > constants.JUMP_RESIDUAL_TOL or report.continuity > constants.JUMP_RESIDUAL_TOL:
                raise InternalConsistencyError(
                    f"Matching at a fails for p={p}, λ′={lam_prime}: jump {report.jump:.2e}")
            if not report.ell_consistent:
                raise InternalConsistencyError(f"tanh sign contradicts ℓ={ell} at p={p}, λ′={lam_prime}")
            if report.ode > constants.ODE_RESIDUAL_TOL:
                logger.warning(f"⚠️ Dropping p={p:.8g}, λ′={lam_prime:.8g}: ODE residual {report.ode:.2e}")
                continue
            states.append(state)
        return states

    def solve_branch(self, regime: str, ell: int, params: ModelParams,
                     p_grid: Optional[Sequence[float]] = None,
                     lambda_max: Optional[float] = None) -> List[StationaryState]:
        """
        All roots of H_ℓ on a p-grid, reconstructed and checked.

        Args:
            regime: "focusing" or "defocusing"
            ell: Branch index 1 or 2
            params: Model parameters
            p_grid: Moduli to scan (default: default_p_grid)
            lambda_max: Initial λ′ ceiling (default 20/a, doubled while roots keep appearing near it)

        Returns:
            States sorted by Ω (possibly empty)
        """
        _check_regime(regime)
        _check_ell(ell)
        grid = np.asarray(p_grid if p_grid is not None else self.default_p_grid(regime), dtype=float)
        if regime == "focusing" and np.any((grid <= P_FOCUSING_MIN) | (grid >= 1.0)):
            raise DomainError("Focusing p-grid must lie in (1/√2, 1)")
        if regime == "defocusing" and np.any((grid < 0.0) | (grid >= 1.0)):
            raise DomainError("Defocusing p-grid must lie in [0, 1)")
        lam_max = lambda_max if lambda_max is not None else constants.LAMBDA_MAX_FACTOR / params.a

        logger.info(f"🔍 Scanning {grid.size} moduli ({regime}, ℓ={ell}, λ′ ≤ {lam_max:g})")
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            chunks = list(pool.map(lambda p: self._states_at_p(regime, ell, float(p), params, lam_max), grid))
        states = [state for chunk in chunks for state in chunk]
        states.sort(key=lambda s: (s.Omega, s.p))
        logger.info(f"✅ {len(states)} stationary states ({regime}, ℓ={ell})")
        return states

    # ------------------------------------------------------------------
    # Bifurcations
    # ------------------------------------------------------------------

    def _p_step(self, regime: str, p: float) -> float:
        h = constants.FD_STEP_P * max(1.0, abs(p))
        upper = 1.0 - p
        lower = p - (P_FOCUSING_MIN if regime == "focusing" else 0.0)
        h = min(h, 0.45 * upper, 0.45 * lower)
        if h <= 0:
            raise DomainError(f"p={p} is on the edge of the modulus domain")
        return h

    @staticmethod
    def _rounding_floor(scale: float, h: float) -> float:
        """Size of the cancellation error in a centered difference with step h."""
        return constants.FD_ROUNDING_FACTOR * np.finfo(float).eps * max(1.0, scale) / h

    def dH_dp(self, regime: str, p: float, lam: float, ell: int, params: ModelParams) -> float:
        """
        ∂Ĥ/∂p from centered differences at steps h and h/2, Richardson-combined.

        A disagreement between the two steps above the rounding floor is logged.
        """
        h = self._p_step(regime, p)

        def central(step: float) -> float:
            return (self._reduced_scalar(regime, p + step, lam, ell, params)
                    - self._reduced_scalar(regime, p - step, lam, ell, params)) / (2.0 * step)

        coarse, fine = central(h), central(0.5 * h)
        _, scale = self._reduced_with_scale(regime, p, np.array([lam]), ell, params)
        allowed = max(constants.FD_AGREEMENT_TOL * max(1.0, abs(fine)),
                      self._rounding_floor(float(scale[0]), 0.5 * h))
        if abs(coarse - fine) > allowed:
            logger.warning(f"⚠️ ∂Ĥ/∂p at p={p:.8g}, λ′={lam:.8g}: steps {h:.1e} and {0.5 * h:.1e} "
                           f"disagree by {abs(coarse - fine):.2e}")
        return (4.0 * fine - coarse) / 3.0

    def _fold_system(self, regime: str, p: float, lam: float, ell: int,
                     params: ModelParams) -> np.ndarray:
        return np.array([self._reduced_scalar(regime, p, lam, ell, params),
                         self.dH_dp(regime, p, lam, ell, params)])

    def _newton_fold(self, regime: str, ell: int, p: float, lam: float, params: ModelParams,
                     box: SearchBox) -> Optional[Tuple[float, float, float, float]]:
        """2D Newton on (Ĥ, ∂Ĥ/∂p) with a finite-difference Jacobian."""
        x = np.array([p, lam])
        for _ in range(constants.NEWTON_MAX_ITER):
            F = self._fold_system(regime, x[0], x[1], ell, params)
            if not np.all(np.isfinite(F)):
                return None
            _, scale = self._reduced_with_scale(regime, x[0], np.array([x[1]]), ell, params)
            tol = constants.BIFURCATION_TOL * max(1.0, float(scale[0]))
            # ∂Ĥ/∂p cannot resolve below the cancellation error of its difference quotient
            slope_tol = max(tol, self._rounding_floor(float(scale[0]), 0.5 * self._p_step(regime, x[0])))
            if abs(F[0]) <= tol and abs(F[1]) <= slope_tol:
                return float(x[0]), float(x[1]), abs(float(F[0])), abs(float(F[1]))

            dp = 1e-5
            dl = 1e-6 * max(1.0, x[1])
            jac = np.column_stack([
                (self._fold_system(regime, x[0] + dp, x[1], ell, params)
                 - self._fold_system(regime, x[0] - dp, x[1], ell, params)) / (2.0 * dp),
                (self._fold_system(regime, x[0], x[1] + dl, ell, params)
                 - self._fold_system(regime, x[0], x[1] - dl, ell, params)) / (2.0 * dl),
            ])
            try:
                step = np.linalg.solve(jac, -F)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(step)):
                return None

            norm0 = float(np.linalg.norm(F))
            damping = 1.0
            for _ in range(12):
                trial = x + damping * step
                if box.contains(trial[0], trial[1]):
                    F_trial = self._fold_system(regime, trial[0], trial[1], ell, params)
                    if np.all(np.isfinite(F_trial)) and np.linalg.norm(F_trial) < norm0:
                        break
                damping *= 0.5
            else:
                return None
            x = trial
        return None

    @staticmethod
    def _roots_along(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
        finite = np.isfinite(values)
        flips = np.nonzero(finite[:-1] & finite[1:] & (np.sign(values[:-1]) * np.sign(values[1:]) < 0))[0]
        v0, v1 = values[flips], values[flips + 1]
        return coords[flips] + (coords[flips + 1] - coords[flips]) * v0 / (v0 - v1)

    def _fold_seeds(self, regime: str, ell: int, params: ModelParams,
                    box: SearchBox) -> List[Tuple[float, float]]:
        n_p, n_l = constants.BIFURCATION_GRID
        ps = np.linspace(box.p_min, box.p_max, n_p)
        lams = np.linspace(box.lambda_min, box.lambda_max, n_l)
        table = np.vstack([self.reduced_H(regime, float(p), lams, ell, params) for p in ps])

        seeds = []
        counts = [self._roots_along(table[:, j], ps) for j in range(n_l)]
        for j in range(n_l - 1):
            left, right = counts[j], counts[j + 1]
            if abs(left.size - right.size) != 2:
                continue
            more, fewer = (left, right) if left.size > right.size else (right, left)
            for k in range(more.size - 1):
                between = (fewer > more[k]) & (fewer < more[k + 1])
                if not np.any(between):
                    seeds.append((0.5 * (more[k] + more[k + 1]), 0.5 * (lams[j] + lams[j + 1])))
        return seeds

    def find_bifurcations(self, regime: str, ell: Optional[int], params: ModelParams,
                          search_box: Optional[SearchBox] = None) -> List[BifurcationPoint]:
        """
        Points where H = 0 and ∂H/∂p = 0.

        Seeds come from λ′-columns of a coarse grid across which the number
        of p-roots changes by two; each seed is refined by Newton and
        discarded (logged) if Newton fails.

        Args:
            regime: "focusing" or "defocusing"
            ell: Branch index, or None for both
            params: Model parameters
            search_box: (p, λ′) window (default: admissible p, λ′ <= 20/a)

        Returns:
            Points sorted by decreasing η, numbered from 1
        """
        _check_regime(regime)
        box = search_box or SearchBox.default(regime, params)
        ells = [ell] if ell is not None else [1, 2]

        found: List[BifurcationPoint] = []
        for branch_ell in ells:
            _check_ell(branch_ell)
            seeds = self._fold_seeds(regime, branch_ell, params, box)
            logger.info(f"🔍 {len(seeds)} fold seeds for ℓ={branch_ell}")
            for p0, l0 in seeds:
                result = self._newton_fold(regime, branch_ell, p0, l0, params, box)
                if result is None:
                    logger.warning(f"⚠️ Newton did not converge from seed p={p0:.6g}, λ′={l0:.6g}")
                    continue
                p, lam, res_h, res_d = result
                if any(b.ell == branch_ell and math.hypot(b.p - p, b.lambda_prime - lam) < constants.DEDUP_DISTANCE
                       for b in found):
                    continue
                try:
                    state = self.reconstruct(regime, branch_ell, p, lam, params)
                except InvalidProfileError as e:
                    logger.warning(f"⚠️ Fold point p={p:.6g}, λ′={lam:.6g} has no valid profile: {e}")
                    continue
                found.append(BifurcationPoint(n=0, eta_n=state.eta, Omega_n=state.Omega, p=p,
                                              lambda_prime=lam, ell=branch_ell, regime=regime,
                                              h_residual=res_h, dh_dp_residual=res_d))

        found.sort(key=lambda b: (-b.eta_n, b.Omega_n))
        for index, point in enumerate(found, start=1):
            point.n = index
        logger.info(f"✅ {len(found)} bifurcation points")
        return found

    def fold_root_counts(self, point: BifurcationPoint, params: ModelParams,
                         delta: Optional[float] = None, window: float = 0.02) -> FoldCounts:
        """Count p-roots of H(·, λ′* - δ) and H(·, λ′* + δ) in a window around p*."""
        delta = delta if delta is not None else 1e-3 * point.lambda_prime
        lo = max(point.p - window, (P_FOCUSING_MIN if point.regime == "focusing" else 0.0) + 1e-9)
        hi = min(point.p + window, 1.0 - 1e-9)
        ps = np.linspace(lo, hi, 4001)

        def count(lam: float) -> int:
            values = np.array([self._reduced_scalar(point.regime, float(p), lam, point.ell, params) for p in ps])
            return int(self._roots_along(values, ps).size)

        return FoldCounts(below=count(point.lambda_prime - delta),
                          above=count(point.lambda_prime + delta), delta=delta)

    # ------------------------------------------------------------------
    # Branch assembly and stability
    # ------------------------------------------------------------------

    def assemble_branches(self, states: Sequence[StationaryState]) -> List[Branch]:
        """
        Split states into connected curves in the (η, Ω) plane and label them.

        The component holding the smallest μ² is Omega0; every other component
        with an interior η-maximum is split there into OmegaN+ (upper Ω) and
        OmegaN- (lower Ω), N counting from the fold closest to η = 0;
        components without a fold are branchK.
        """
        if not states:
            return []
        points = np.array([[s.eta, s.Omega] for s in states])
        span = np.ptp(points, axis=0)
        span[span == 0] = 1.0
        scaled = points / span

        if len(states) == 1:
            return [Branch(label="Omega0", states=list(states))]

        tree = cKDTree(scaled)
        k = min(3, len(states))
        distances, neighbours = tree.query(scaled, k=k)
        gap = constants.BRANCH_GAP_FACTOR * float(np.median(distances[:, 1]))

        parent = list(range(len(states)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(states)):
            for dist, j in zip(distances[i, 1:], neighbours[i, 1:]):
                if dist <= gap:
                    parent[find(i)] = find(int(j))

        groups: Dict[int, List[int]] = {}
        for i in range(len(states)):
            groups.setdefault(find(i), []).append(i)

        ordered = [self._walk(scaled, members) for members in groups.values()]
        ground = min(range(len(ordered)), key=lambda g: min(states[i].mu_sq for i in ordered[g]))

        branches = [Branch(label="Omega0", states=[states[i] for i in ordered[ground]])]
        others = [g for g in range(len(ordered)) if g != ground]
        others.sort(key=lambda g: -max(states[i].eta for i in ordered[g]))
        fold_index = 0
        plain_index = 0
        for g in others:
            path = [states[i] for i in ordered[g]]
            etas = [s.eta for s in path]
            tip = int(np.argmax(etas))
            if 0 < tip < len(path) - 1:
                fold_index += 1
                first, second = path[:tip + 1], path[tip:]
                upper, lower = ((first, second) if np.mean([s.Omega for s in first]) >= np.mean([s.Omega for s in second])
                                else (second, first))
                branches.append(Branch(label=f"Omega{fold_index}+", states=upper))
                branches.append(Branch(label=f"Omega{fold_index}-", states=lower))
            else:
                plain_index += 1
                branches.append(Branch(label=f"branch{plain_index}", states=path))
        return branches

    @staticmethod
    def _walk(points: np.ndarray, members: List[int]) -> List[int]:
        """Order a component by a greedy nearest-neighbour walk from one end."""
        if len(members) <= 2:
            return list(members)
        sub = points[members]
        centroid = sub.mean(axis=0)
        start = int(np.argmax(np.linalg.norm(sub - centroid, axis=1)))
        start = int(np.argmax(np.linalg.norm(sub - sub[start], axis=1))) if len(members) > 2 else start
        remaining = set(range(len(members)))
        order = [start]
        remaining.discard(start)
        while remaining:
            last = sub[order[-1]]
            nxt = min(remaining, key=lambda i: float(np.linalg.norm(sub[i] - last)))
            order.append(nxt)
            remaining.discard(nxt)
        return [members[i] for i in order]

    @staticmethod
    def eta_turning_points(branches: Sequence[Branch]) -> List[Dict[str, Any]]:
        """Interior local extrema of η along each ordered branch."""
        points = []
        for branch in branches:
            etas = np.array([s.eta for s in branch.states])
            if etas.size < 3:
                continue
            diffs = np.sign(np.diff(etas))
            for i in range(1, diffs.size):
                if diffs[i] != 0 and diffs[i - 1] != 0 and diffs[i] != diffs[i - 1]:
                    state = branch.states[i]
                    points.append({"branch_label": branch.label, "eta": state.eta,
                                   "Omega": state.Omega, "p": state.p, "lambda_prime": state.lam_prime})
        return points

    @staticmethod
    def stability_slope(branch: Sequence[StationaryState]) -> List[Dict[str, Any]]:
        """
        dμ²/dω along a branch, ω = -Ω, by centered differences in ω.

        Returns:
            One entry per state in ω order: state, slope, classification, note
        """
        unique: Dict[float, StationaryState] = {}
        for state in branch:
            unique.setdefault(-state.Omega, state)
        omegas = np.array(sorted(unique))
        if omegas.size < 3:
            raise InsufficientDataError("Slope criterion needs at least three states with distinct ω")
        ordered = [unique[w] for w in omegas]
        mu = np.array([s.mu_sq for s in ordered])
        slopes = np.gradient(mu, omegas)

        rows = []
        for state, slope in zip(ordered, slopes):
            if abs(slope) < constants.SLOPE_MARGINAL_TOL:
                label = "marginal"
            elif slope > 0:
                label = "stable"
            else:
                label = "unstable"
            rows.append({"state": state, "slope": float(slope), "classification": label,
                         "note": constants.SLOPE_NOTE})
        return rows

    @staticmethod
    def check_real_reduction(psi: Sequence[complex], dx: float, tol: float = 1e-8) -> RealReductionReport:
        """
        Test whether ψ is a constant phase times a real function.

        W = ψ′ψ̄ - ψψ̄′ vanishes identically for such ψ; the phase θ is
        ½·arg Σψ², folded into (-π/2, π/2].
        """
        psi = np.asarray(psi, dtype=complex)
        if psi.size < 3:
            raise InsufficientDataError("Need at least three samples")
        derivative = np.gradient(psi, dx)
        wronskian = derivative * np.conj(psi) - psi * np.conj(derivative)

        total = np.sum(psi * psi)
        theta = 0.5 * float(np.angle(total)) if abs(total) > 0 else 0.0
        if theta <= -0.5 * math.pi:
            theta += math.pi
        peak = float(np.max(np.abs(psi)))
        residual = float(np.max(np.abs(np.imag(np.exp(-1j * theta) * psi)))) / peak if peak > 0 else 0.0
        return RealReductionReport(
            max_wronskian=float(np.max(np.abs(wronskian))),
            phase=theta,
            residual_imag=residual,
            dirichlet_ok=abs(psi[0]) <= tol * max(peak, 1.0),
        )


# Default service instance
stationary_service = StationaryStateService()
