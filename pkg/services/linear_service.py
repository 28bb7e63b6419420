"""
Linear Winter model service.

Handles the point spectrum, the resolvent and evolution kernels, the Fresnel
closed form of the oscillatory integral I_a, the bounds on the remainder Q(k)
and the continuous-spectrum propagation used by the dispersive check.
"""

import cmath
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from Utils import constants
from Utils.errors import (
    AccuracyError,
    DomainError,
    InsufficientDataError,
    PoleError,
    PreconditionError,
)
from services import specfun

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """δ-shell position a and strength α."""

    a: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise DomainError(f"a must be positive and finite, got {self.a}")
        if not math.isfinite(self.alpha):
            raise DomainError(f"alpha must be finite, got {self.alpha}")

    @property
    def coupling(self) -> float:
        """The dimensionless product a·α."""
        return self.a * self.alpha

    @property
    def is_threshold(self) -> bool:
        return abs(self.coupling + 1.0) <= constants.THRESHOLD_TOL


@dataclass(frozen=True)
class SpectralData:
    """Point spectrum of H: at most one negative eigenvalue E = -h**2.

    h, E and B are None when there is no bound state.
    """

    params: ModelParams
    has_bound_state: bool
    h: Optional[float] = None
    E: Optional[float] = None
    B: Optional[float] = None
    threshold: bool = False

    def eigenfunction(self, x: Any) -> np.ndarray:
        """
        Normalized eigenfunction ψ_E on the half-line.

        Args:
            x: Positions (scalar or array); ψ_E vanishes for x <= 0

        Returns:
            Array of ψ_E(x) values
        """
        if not self.has_bound_state:
            raise PreconditionError("No bound state for a·α >= -1")
        x = np.asarray(x, dtype=float)
        a, h = self.params.a, self.h
        inner = self.B * np.sinh(h * np.clip(x, 0.0, a))
        outer = self.B * math.sinh(h * a) * np.exp(-h * np.clip(x - a, 0.0, None))
        return np.where(x <= 0.0, 0.0, np.where(x <= a, inner, outer))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.params.a,
            "alpha": self.params.alpha,
            "has_bound_state": self.has_bound_state,
            "h": self.h,
            "E": self.E,
            "B": self.B,
            "threshold": self.threshold,
        }


@dataclass
class BranchAdmissibility:
    """Both real Lambert branches evaluated at the bound-state argument."""

    argument: float
    w0: float
    h0: float
    wm1: Optional[float]
    hm1: Optional[float]
    admissible_w0: bool
    admissible_wm1: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EigenfunctionBoundsReport:
    """Sup and L¹ norms of ψ_E against their closed-form bounds."""

    sup_norm: float
    sup_bound_sinh_ha: float
    sup_bound_sinh_a: float
    sup_holds_sinh_ha: bool
    sup_holds_sinh_a: bool
    l1_norm: float
    l1_bound: float
    l1_holds: bool
    l2_norm_sq: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class IaBoundReport:
    """Maximum of |I_a|·√t over a sampled (z, t) box."""

    a: float
    max_scaled: float
    argmax_z: float
    argmax_t: float
    reference_constant: float
    certified_constant: float
    reference_violations: int
    certified_violations: int
    samples: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class QBoundsReport:
    """Evaluation of Q(k) on a grid against the reference and certified bounds."""

    samples: int
    reference_violations: int
    max_reference_ratio: float
    certified_violations: int
    max_certified_ratio: float
    max_abs_dQ: float
    max_abs_d2Q: float
    max_tail_k2_dQ: float
    small_k_slope: complex
    expected_slope: Optional[complex]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ("small_k_slope", "expected_slope"):
            value = data[key]
            data[key] = None if value is None else {"re": value.real, "im": value.imag}
        return data


@dataclass
class DispersiveReport:
    """Sup-norm decay table of e^{-itH} P_c ψ₀."""

    backend: str
    times: List[float]
    sup_norms: List[float]
    l1_norm_projected: float
    empirical_constant: float
    loglog_slope: float
    threshold: bool
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _sinc(x: Any) -> Any:
    """sin(x)/x with the removable singularity filled."""
    return np.sinc(np.asarray(x) / np.pi)


class LinearWinterService:
    """Spectral and kernel computations for H = -d²/dx² + α δ(x - a) on (0, ∞)."""

    def __init__(self):
        self.accuracy_limit = constants.KERNEL_ACCURACY_LIMIT

    # ------------------------------------------------------------------
    # Point spectrum
    # ------------------------------------------------------------------

    def bound_state(self, params: ModelParams) -> SpectralData:
        """
        Negative eigenvalue of H, if any.

        h = (-aα + W₀(aα e^{aα})) / (2a), E = -h², and B normalizes ψ_E.

        Args:
            params: Model parameters

        Returns:
            SpectralData (has_bound_state is False for a·α >= -1)
        """
        a, alpha = params.a, params.alpha
        coupling = params.coupling
        if params.is_threshold:
            logger.info("⚠️ Threshold case a·α = -1: zero-energy resonance, no bound state")
            return SpectralData(params=params, has_bound_state=False, threshold=True)
        if coupling > -1.0:
            return SpectralData(params=params, has_bound_state=False)

        w0 = specfun.lambert_w0(coupling * math.exp(coupling))
        h = (-coupling + w0) / (2.0 * a)
        ha = h * a
        B = math.sqrt(2.0 * h / (math.exp(ha) * math.sinh(ha) - ha))
        spectral = SpectralData(params=params, has_bound_state=True, h=h, E=-h * h, B=B)

        residual = abs(self.calG(1j * h, params))
        if residual > 1e-10 * max(1.0, abs(alpha)):
            logger.warning(f"⚠️ Bound-state residual |𝒢(ih)| = {residual:.3e}")
        logger.debug(f"✅ Bound state h={h:.12g}, E={-h * h:.12g}, B={B:.12g}")
        return spectral

    def branch_admissibility(self, params: ModelParams) -> BranchAdmissibility:
        """
        Evaluate both real Lambert branches at aα e^{aα}.

        Only the principal branch gives a decaying eigenfunction; W₋₁ returns
        aα itself and therefore h = 0.
        """
        coupling = params.coupling
        argument = coupling * math.exp(coupling)
        w0 = specfun.lambert_w0(argument)
        h0 = (-coupling + w0) / (2.0 * params.a)

        wm1 = hm1 = None
        if -constants.INV_E <= argument < 0.0:
            wm1 = specfun.lambert_wm1(argument)
            hm1 = (-coupling + wm1) / (2.0 * params.a)

        tol = 1e-10 * max(1.0, abs(coupling))
        return BranchAdmissibility(
            argument=argument,
            w0=w0,
            h0=h0,
            wm1=wm1,
            hm1=hm1,
            admissible_w0=h0 > tol,
            admissible_wm1=hm1 is not None and hm1 > tol,
        )

    def eigenfunction_bounds_check(self, params: ModelParams) -> EigenfunctionBoundsReport:
        """
        Compare ‖ψ_E‖∞ and ‖ψ_E‖₁ with their closed-form bounds.

        Both sinh(ha) and sinh(a) are reported for the sup bound; sinh(ha) is
        attained exactly at x = a.

        Args:
            params: Model parameters with a·α < -1

        Returns:
            EigenfunctionBoundsReport
        """
        spectral = self.bound_state(params)
        if not spectral.has_bound_state:
            raise PreconditionError(f"No bound state for a·α = {params.coupling:g}")

        a, h, B = params.a, spectral.h, spectral.B
        grid = np.concatenate([
            np.linspace(0.0, a, 2001),
            a + np.linspace(0.0, 40.0 / h, 4001)[1:],
        ])
        sup_norm = float(np.max(np.abs(spectral.eigenfunction(grid))))

        def psi(x: float) -> float:
            return float(spectral.eigenfunction(x))

        inner_l1, _ = integrate.quad(psi, 0.0, a, epsabs=1e-13, epsrel=1e-12)
        outer_l1, _ = integrate.quad(psi, a, np.inf, epsabs=1e-13, epsrel=1e-12)
        inner_l2, _ = integrate.quad(lambda x: psi(x) ** 2, 0.0, a, epsabs=1e-14, epsrel=1e-12)
        outer_l2, _ = integrate.quad(lambda x: psi(x) ** 2, a, np.inf, epsabs=1e-14, epsrel=1e-12)
        l1_norm = inner_l1 + outer_l1

        sup_bound_ha = B * math.sinh(h * a)
        sup_bound_a = B * math.sinh(a)
        l1_bound = B * (math.exp(h * a) - 1.0) / h
        slack = 1e-9
        report = EigenfunctionBoundsReport(
            sup_norm=sup_norm,
            sup_bound_sinh_ha=sup_bound_ha,
            sup_bound_sinh_a=sup_bound_a,
            sup_holds_sinh_ha=sup_norm <= sup_bound_ha * (1.0 + slack),
            sup_holds_sinh_a=sup_norm <= sup_bound_a * (1.0 + slack),
            l1_norm=l1_norm,
            l1_bound=l1_bound,
            l1_holds=l1_norm <= l1_bound * (1.0 + slack),
            l2_norm_sq=inner_l2 + outer_l2,
        )
        if not report.sup_holds_sinh_a:
            logger.info(f"⚠️ ‖ψ_E‖∞ = {sup_norm:.6g} exceeds B·sinh(a) = {sup_bound_a:.6g} (h = {h:.6g} > 1)")
        return report

    # ------------------------------------------------------------------
    # Secular function and resolvent
    # ------------------------------------------------------------------

    def calG(self, k: complex, params: ModelParams) -> complex:
        """𝒢(k) = 2ik - α + α e^{2ika}."""
        k = complex(k)
        alpha = params.alpha
        return 2j * k - alpha + alpha * cmath.exp(2j * k * params.a)

    def resolvent_kernel(self, x: float, y: float, k: complex, params: ModelParams) -> complex:
        """
        Integral kernel of (H - k²)⁻¹ for Im k > 0.

        Args:
            x: First position, x >= 0
            y: Second position, y >= 0
            k: Spectral parameter with positive imaginary part
            params: Model parameters

        Returns:
            K(x, y, k)
        """
        k = complex(k)
        if not k.imag > 0:
            raise DomainError(f"Resolvent needs Im k > 0, got k={k}")
        if x < 0 or y < 0:
            raise DomainError("Resolvent kernel is defined on the half-line x, y >= 0")

        a, alpha = params.a, params.alpha
        g_val = self.calG(k, params)
        if abs(g_val) <= 1e-13 * max(1.0, abs(k), abs(alpha)):
            raise PoleError(f"𝒢(k) = 0 at k={k}: k² is an eigenvalue")

        ik2 = 2j * k
        ratio = ik2 * alpha / g_val
        k1 = ik2 * cmath.exp(1j * k * (x + y)) * (1.0 - alpha * cmath.exp(2j * k * a) / g_val)
        k2 = ratio * cmath.exp(1j * k * (x + abs(y - a) + a))
        k3 = ratio * cmath.exp(1j * k * (abs(x - a) + y + a))
        k4 = -ratio * cmath.exp(1j * k * (abs(x - a) + abs(y - a)))
        free = 1j / (2.0 * k) * cmath.exp(1j * k * abs(x - y))
        return free - (k1 + k2 + k3 + k4) / (4.0 * k * k)

    # ------------------------------------------------------------------
    # q-factor
    # ------------------------------------------------------------------

    def q_factor(self, k: float, x: float, y: float, params: ModelParams) -> complex:
        """
        Four-region closed form of q(k, x, y) for real k and x, y >= 0.

        Args:
            k: Real wavenumber
            x: Position >= 0
            y: Position >= 0
            params: Model parameters

        Returns:
            q(k, x, y); |q| <= 4
        """
        a = params.a
        k = float(k)
        if x <= a and y <= a:
            return 4.0 * cmath.exp(2j * k * a) * math.sin(k * x) * math.sin(k * y)
        if x <= a < y:
            return 2j * cmath.exp(1j * k * y) * math.sin(k * x) * (1.0 - cmath.exp(2j * k * a))
        if y <= a < x:
            return 2j * cmath.exp(1j * k * x) * math.sin(k * y) * (1.0 - cmath.exp(2j * k * a))
        return 2.0 * cmath.exp(1j * k * (x + y)) * (1.0 - math.cos(2.0 * k * a))

    def q_factor_exponential(self, k: float, x: float, y: float, params: ModelParams) -> complex:
        """q(k, x, y) from its defining sum of four exponentials."""
        a = params.a
        total = 0j
        for sign, phase in self._q_phases(x, y, a):
            total += sign * cmath.exp(1j * k * phase)
        return total

    @staticmethod
    def _q_phases(x: Any, y: Any, a: float) -> List[Tuple[float, Any]]:
        """(sign, phase) pairs of the exponentials that make up q."""
        return [
            (-1.0, x + y + 2.0 * a),
            (1.0, np.abs(x - a) + y + a),
            (1.0, x + np.abs(y - a) + a),
            (-1.0, np.abs(x - a) + np.abs(y - a)),
        ]

    def _q_over_2ik(self, k: float, x: Any, y: Any, a: float) -> Any:
        """q/(2ik) in the product form, regular at k = 0."""
        m_x = np.minimum(x, a)
        m_y = np.minimum(y, a)
        phase = np.maximum(x, a) + np.maximum(y, a)
        return -2j * np.exp(1j * k * phase) * m_x * _sinc(k * m_x) * np.sin(k * m_y)

    def _remainder(self, k: float, x: Any, y: Any, params: ModelParams) -> Any:
        """q/𝒢 minus its α-free part q/(2ik)."""
        a, alpha = params.a, params.alpha
        rho = alpha * a * np.exp(1j * k * a) * _sinc(k * a)
        return -self._q_over_2ik(k, x, y, a) * rho / (1.0 + rho)

    # ------------------------------------------------------------------
    # Evolution kernel
    # ------------------------------------------------------------------

    @staticmethod
    def _fresnel_part(phases: Any, t: float) -> Any:
        """PV ∫ e^{-ik²t} e^{ikc} / (ik) dk over ℝ, i.e. π(1-i)·Fr(c/√(2πt))."""
        c_val, s_val = specfun.fresnel(np.asarray(phases) / math.sqrt(2.0 * math.pi * t))
        return math.pi * (1.0 - 1j) * (np.asarray(c_val) + 1j * np.asarray(s_val))

    @staticmethod
    def _split_point(phase_max: float, t: float) -> float:
        """s beyond which the chirp e^{ik·phase} is slow against e^{-ist}."""
        return max(1.0, (constants.KERNEL_SPLIT_FACTOR * phase_max / t) ** 2)

    def _oscillatory_transform(self, f_re, f_im, t: float, split: float) -> Tuple[complex, float]:
        """
        ∫₀^∞ e^{-ist} (f_re + i f_im)(s) ds.

        [0, split] is integrated with a trigonometric weight on a finite
        interval; the tail [split, ∞) goes to QAWF after the shift s = split + u.

        Returns:
            Tuple (value, summed error estimate)
        """
        def transform(f) -> Tuple[complex, float]:
            cos_head, e1 = integrate.quad(f, 0.0, split, weight="cos", wvar=t, limit=2000,
                                          epsabs=1e-11, epsrel=1e-10)
            sin_head, e2 = integrate.quad(f, 0.0, split, weight="sin", wvar=t, limit=2000,
                                          epsabs=1e-11, epsrel=1e-10)

            def shifted(u: float) -> float:
                return f(split + u)

            cos_tail, e3 = integrate.quad(shifted, 0.0, np.inf, weight="cos", wvar=t, limlst=200)
            sin_tail, e4 = integrate.quad(shifted, 0.0, np.inf, weight="sin", wvar=t, limlst=200)
            tail = cmath.exp(-1j * split * t) * complex(cos_tail, -sin_tail)
            return complex(cos_head, -sin_head) + tail, e1 + e2 + e3 + e4

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            value, error = transform(f_re)
            if f_im is not None:
                im_value, im_error = transform(f_im)
                value += 1j * im_value
                error += im_error
        for item in caught:
            if issubclass(item.category, integrate.IntegrationWarning):
                logger.debug(f"⚠️ Oscillatory quadrature: {item.message}")
        return value, error

    def _check_accuracy(self, value: complex, error: float, where: str) -> None:
        if error > self.accuracy_limit * max(1.0, abs(value)):
            raise AccuracyError(
                f"Oscillatory quadrature error {error:.3e} exceeds the limit at {where}",
                estimate=error,
            )

    def correction_integral(self, x: float, y: float, t: float, params: ModelParams) -> complex:
        """
        J = ∫ e^{-ik²t} q(k,x,y)/𝒢(k) dk over the real line, t > 0.

        J is split into the α-free part q/(2ik), whose four exponentials give
        Fresnel integrals in closed form, and a remainder decaying like 1/k²
        that is integrated with the substitution s = k².
        """
        if not t > 0:
            raise DomainError(f"t must be positive, got {t}")
        a = params.a
        fresnel_part = 0.5 * sum(
            sign * complex(self._fresnel_part(phase, t)) for sign, phase in self._q_phases(x, y, a)
        )

        def integrand(s: float) -> float:
            if s <= 0.0:
                return 0.0
            k = math.sqrt(s)
            return float(np.real(self._remainder(k, x, y, params))) / k

        split = self._split_point(abs(x) + abs(y) + 2.0 * a, t)
        remainder, error = self._oscillatory_transform(integrand, None, t, split)
        self._check_accuracy(remainder, error, f"(x={x}, y={y}, t={t})")
        return fresnel_part + remainder

    def evolution_kernel(self, x: float, y: float, t: float, params: ModelParams) -> complex:
        """
        Kernel U(x, y, t) of e^{-itH} restricted to the continuous subspace.

        Args:
            x: Position
            y: Position
            t: Time, non-zero; U(x, y, -t) = conj U(x, y, t)
            params: Model parameters

        Returns:
            U(x, y, t); zero when x·y <= 0
        """
        if t == 0 or not math.isfinite(t):
            raise DomainError(f"t must be finite and non-zero, got {t}")
        if t < 0:
            return self.evolution_kernel(x, y, -t, params).conjugate()
        if x <= 0 or y <= 0:
            return 0j

        prefactor = 1.0 / cmath.sqrt(4j * math.pi * t)
        dirichlet = prefactor * (cmath.exp(1j * (x - y) ** 2 / (4.0 * t))
                                 - cmath.exp(1j * (x + y) ** 2 / (4.0 * t)))
        if params.alpha == 0.0:
            return dirichlet
        return dirichlet - params.alpha / (2.0 * math.pi) * self.correction_integral(x, y, t, params)

    # ------------------------------------------------------------------
    # I_a and Q(k)
    # ------------------------------------------------------------------

    def Ia_closed_form(self, z: Any, t: float, a: float) -> Any:
        """
        I_a(z) = ∫ e^{-ik²t + ikz} (1 - cos 2ka)/(ik) dk over ℝ.

        Closed form π(1-i)[Fr(ζ₀) - ½Fr(ζ₊) - ½Fr(ζ₋)] with
        ζ₀ = z/√(2πt), ζ± = (z ± 2a)/√(2πt) and Fr = C + iS.

        Args:
            z: Real argument (scalar or array)
            t: Time, t > 0
            a: Shell position

        Returns:
            Complex value(s) of I_a
        """
        if not t > 0:
            raise DomainError(f"t must be positive, got {t}")
        z = np.asarray(z, dtype=float)
        value = (self._fresnel_part(z, t)
                 - 0.5 * self._fresnel_part(z + 2.0 * a, t)
                 - 0.5 * self._fresnel_part(z - 2.0 * a, t))
        if value.ndim == 0:
            return complex(value)
        return value

    def ia_bound_report(self, a: float, z_values: Optional[Sequence[float]] = None,
                        t_values: Optional[Sequence[float]] = None) -> IaBoundReport:
        """
        Scan |I_a(z)|·√t against a/(4√π) and against 2√π·a.

        The second constant follows from |Fr(u) - Fr(v)| <= |u - v|.
        """
        z_grid = np.asarray(z_values if z_values is not None else np.linspace(-100.0, 100.0, 2001))
        t_grid = np.asarray(t_values if t_values is not None else np.geomspace(1.0, 100.0, 41))
        if z_grid.size == 0 or t_grid.size == 0:
            raise InsufficientDataError("I_a bound scan needs at least one (z, t) sample")

        zz, tt = np.meshgrid(z_grid, t_grid)
        scaled = np.array([np.abs(self.Ia_closed_form(z_grid, t, a)) * math.sqrt(t) for t in t_grid])
        index = np.unravel_index(int(np.argmax(scaled)), scaled.shape)

        reference = a / (4.0 * math.sqrt(math.pi))
        certified = 2.0 * math.sqrt(math.pi) * a
        report = IaBoundReport(
            a=a,
            max_scaled=float(scaled[index]),
            argmax_z=float(zz[index]),
            argmax_t=float(tt[index]),
            reference_constant=reference,
            certified_constant=certified,
            reference_violations=int(np.sum(scaled > reference * (1.0 + 1e-6))),
            certified_violations=int(np.sum(scaled > certified * (1.0 + 1e-12))),
            samples=int(scaled.size),
        )
        if report.reference_violations:
            logger.info(f"⚠️ |I_a|·√t reaches {report.max_scaled:.6g} > a/(4√π) = {reference:.6g}")
        return report

    def Q(self, k: Any, params: ModelParams) -> Any:
        """
        Q(k) = (1 - cos 2ka)/(ik) · (αw/2i)/(1 + αw/2i) with w(k) = (e^{2ika} - 1)/k.

        Written as -2iαa² sinc²(ka) sin(ka) / (e^{-ika} + αa sinc(ka)), which is
        regular at k = 0 except at the threshold, where Q(0) = -2a.
        """
        a, alpha = params.a, params.alpha
        k = np.asarray(k, dtype=float)
        denom = np.exp(-1j * k * a) + alpha * a * _sinc(k * a)
        numer = -2j * alpha * a * a * _sinc(k * a) ** 2 * np.sin(k * a)
        small = np.abs(k * a) < 1e-6
        with np.errstate(divide="ignore", invalid="ignore"):
            value = numer / denom
        if params.is_threshold:
            series = -2.0 * a - (2.0 / 3.0) * 1j * a * a * k
            value = np.where(small, series, value)
        else:
            slope = -2j * a ** 3 * alpha / (1.0 + params.coupling)
            value = np.where(small, slope * k, value)
        if value.ndim == 0:
            return complex(value)
        return value

    def q_bounds_check(self, params: ModelParams,
                            k_grid: Optional[Sequence[float]] = None) -> QBoundsReport:
        """
        Evaluate Q on a grid against min(|α|a², |α|/k²) and 2·min(a, 1/|k|).

        Args:
            params: Model parameters
            k_grid: Sorted real wavenumbers (default: 20001 points on [-50, 50])

        Returns:
            QBoundsReport with violation counts and finite-difference derivative sizes
        """
        k = np.asarray(k_grid if k_grid is not None else np.linspace(-50.0, 50.0, 20001), dtype=float)
        if k.size < 3:
            raise InsufficientDataError("Q bounds need at least three grid points")
        k = np.sort(k)
        a, alpha = params.a, params.alpha
        q_val = np.asarray(self.Q(k, params))
        abs_q = np.abs(q_val)

        with np.errstate(divide="ignore"):
            reference = np.minimum(abs(alpha) * a * a, abs(alpha) / k ** 2)
            certified = 2.0 * np.minimum(a, 1.0 / np.abs(k))
        tol = 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            ref_ratio = np.where(reference > 0, abs_q / reference, np.where(abs_q > tol, np.inf, 0.0))
            cert_ratio = abs_q / certified

        dq = np.gradient(q_val, k)
        d2q = np.gradient(dq, k)
        tail = np.abs(k) >= math.pi / a
        tail_k2 = float(np.max(k[tail] ** 2 * np.abs(dq[tail]))) if np.any(tail) else 0.0

        step = 1e-4 / a
        small_slope = complex((self.Q(step, params) - self.Q(-step, params)) / (2.0 * step))
        expected = None if params.is_threshold else -2j * a ** 3 * alpha / (1.0 + params.coupling)

        return QBoundsReport(
            samples=int(k.size),
            reference_violations=int(np.sum(abs_q > reference * (1.0 + 1e-9) + tol)),
            max_reference_ratio=float(np.max(ref_ratio)),
            certified_violations=int(np.sum(abs_q > certified * (1.0 + 1e-9) + tol)),
            max_certified_ratio=float(np.max(cert_ratio)),
            max_abs_dQ=float(np.max(np.abs(dq))),
            max_abs_d2Q=float(np.max(np.abs(d2q))),
            max_tail_k2_dQ=tail_k2,
            small_k_slope=small_slope,
            expected_slope=expected,
        )

    # ------------------------------------------------------------------
    # Continuous-spectrum propagation
    # ------------------------------------------------------------------

    def project_continuum(self, field, params: ModelParams, discrete: bool = True):
        """
        P_c ψ₀ = ψ₀ - ⟨ψ_E, ψ₀⟩ψ_E (identity when there is no bound state).

        Args:
            field: WaveField on a grid aligned with a
            params: Model parameters
            discrete: Use the eigenvector of the discretized operator instead of ψ_E

        Returns:
            New WaveField
        """
        from services import dynamics_service

        spectral = self.bound_state(params)
        if not spectral.has_bound_state:
            return field.copy()
        if discrete:
            found = dynamics_service.discrete_bound_state(field.x, params)
            if found is None:
                logger.warning("⚠️ Discrete operator has no negative eigenvalue; using ψ_E")
                eigvec = spectral.eigenfunction(field.x).astype(complex)
            else:
                eigvec = found[1].astype(complex)
        else:
            eigvec = spectral.eigenfunction(field.x).astype(complex)
        eigvec = eigvec / math.sqrt(field.inner_product_of(eigvec, eigvec).real)
        overlap = field.inner_product_of(eigvec, field.psi)
        return field.with_values(field.psi - overlap * eigvec)

    def propagate_continuum(self, psi0, t: float, params: ModelParams, backend: str = "pde",
                            dt: Optional[float] = None, kernel_dx: float = 0.5):
        """
        e^{-itH} P_c ψ₀.

        Args:
            psi0: Initial WaveField (zero at x = 0)
            t: Time, t > 0
            params: Model parameters
            backend: "pde" (Crank–Nicolson, η = 0) or "kernel" (quadrature of U)
            dt: Time step of the PDE backend
            kernel_dx: Output spacing of the kernel backend

        Returns:
            WaveField at time t (the kernel backend returns a coarser grid)
        """
        if not t > 0:
            raise DomainError(f"t must be positive, got {t}")
        if abs(psi0.psi[0]) > 1e-12:
            raise DomainError("Initial data must vanish at x = 0")

        if backend == "pde":
            from services.dynamics_service import dynamics_service

            projected = self.project_continuum(psi0, params, discrete=True)
            return dynamics_service.evolve_linear(projected, params, t, dt or constants.DEFAULT_DT)
        if backend == "kernel":
            projected = self.project_continuum(psi0, params, discrete=False)
            return self._propagate_by_kernel(projected, t, params, kernel_dx)
        raise DomainError(f"Unknown backend '{backend}'")

    def _propagate_by_kernel(self, field, t: float, params: ModelParams, kernel_dx: float):
        """Apply U by trapezoidal sums in y; the k-integral runs once per output x."""
        stride = max(1, int(round(kernel_dx / field.dx)))
        grid = field.x
        support = np.abs(field.psi) > 1e-15 * max(float(np.max(np.abs(field.psi))), 1e-300)
        y = grid[support]
        phi = field.psi[support]
        out_index = np.arange(0, grid.size, stride)
        out = np.zeros(out_index.size, dtype=complex)
        prefactor = 1.0 / cmath.sqrt(4j * math.pi * t)

        for n, j in enumerate(out_index):
            x = float(grid[j])
            if x <= 0.0:
                continue
            dirichlet = prefactor * (np.exp(1j * (x - y) ** 2 / (4.0 * t)) - np.exp(1j * (x + y) ** 2 / (4.0 * t)))
            value = integrate.trapezoid(dirichlet * phi, y)
            if params.alpha != 0.0:
                fresnel_part = 0.5 * sum(
                    sign * self._fresnel_part(phase, t) for sign, phase in self._q_phases(x, y, params.a)
                )
                correction = integrate.trapezoid(fresnel_part * phi, y)

                def weighted(s: float) -> complex:
                    if s <= 0.0:
                        return 0j
                    k = math.sqrt(s)
                    return integrate.trapezoid(np.real(self._remainder(k, x, y, params)) * phi, y) / k

                split = self._split_point(x + float(np.max(y)) + 2.0 * params.a, t)
                remainder, error = self._oscillatory_transform(
                    lambda s: weighted(s).real, lambda s: weighted(s).imag, t, split)
                self._check_accuracy(remainder, error, f"x={x}")
                value -= params.alpha / (2.0 * math.pi) * (correction + remainder)
            out[n] = value

        return field.__class__(x=grid[out_index].copy(), psi=out, a=field.a)

    def dispersive_check(self, params: ModelParams, psi0=None,
                         times: Sequence[float] = constants.DISPERSIVE_TIMES,
                         backend: str = "pde", include_threshold: bool = False,
                         dt: float = 0.005) -> DispersiveReport:
        """
        Sup-norm decay of e^{-itH} P_c ψ₀ over a list of times.

        Args:
            params: Model parameters
            psi0: Initial WaveField (default: Gaussian at x = 3, width 0.5, on a grid wide enough for max(times))
            times: Positive observation times
            backend: "pde" or "kernel"
            include_threshold: Run even when a·α = -1
            dt: Time step of the PDE backend

        Returns:
            DispersiveReport with the table √t·‖·‖∞, the empirical constant and the log-log slope
        """
        from services.dynamics_service import WaveField, dynamics_service

        times = sorted(float(t) for t in times)
        if not times or times[0] <= 0:
            raise DomainError("times must be positive")
        if params.is_threshold and not include_threshold:
            raise DomainError("Threshold case a·α = -1 is excluded from the dispersive check")
        if len(times) < 2:
            raise InsufficientDataError("Dispersive check needs at least two times for the slope")

        if psi0 is None:
            width = constants.DISPERSIVE_WIDTH
            L = params.a + 20.0 + 4.0 * times[-1] * (3.0 / width)
            psi0 = WaveField.from_function(
                lambda x: np.exp(-0.5 * ((x - constants.DISPERSIVE_CENTER) / width) ** 2),
                params.a, L, width / 25.0,
            ).normalized()

        sup_norms: List[float] = []
        if backend == "pde":
            current = self.project_continuum(psi0, params, discrete=True)
            l1 = current.l1_norm()
            elapsed = 0.0
            for t in times:
                current = dynamics_service.evolve_linear(current, params, t - elapsed, dt)
                elapsed = t
                sup_norms.append(current.sup_norm())
                logger.info(f"🔍 t={t:g}: sup = {sup_norms[-1]:.6g}")
        else:
            l1 = self.project_continuum(psi0, params, discrete=False).l1_norm()
            for t in times:
                sup_norms.append(self.propagate_continuum(psi0, t, params, backend="kernel").sup_norm())

        scaled = [math.sqrt(t) * s for t, s in zip(times, sup_norms)]
        slope = float(np.polyfit(np.log(times), np.log(scaled), 1)[0])
        constant = max(scaled) / l1 if l1 > 0 else 0.0
        rows = [{"t": t, "sup_norm": s, "sqrt_t_times_sup": c} for t, s, c in zip(times, sup_norms, scaled)]
        return DispersiveReport(
            backend=backend,
            times=times,
            sup_norms=sup_norms,
            l1_norm_projected=l1,
            empirical_constant=constant,
            loglog_slope=slope,
            threshold=params.is_threshold,
            rows=rows,
        )


# Default service instance
linear_service = LinearWinterService()
