"""
Time-dependent NLS on the half-line with a δ-shell.

    i ψ_t = -ψ_xx + α δ(x - a) ψ + η |ψ|^{2σ} ψ,   ψ(0) = 0

Strang splitting: exact phase rotation for the nonlinearity, Crank–Nicolson
for the linear part with the δ lumped as α/dx on the diagonal at x = a.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from Utils import constants
from Utils.errors import DomainError, InternalConsistencyError, NumericalFailureError, PreconditionError
from services.linear_service import ModelParams, linear_service

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Nonlinearity:
    """Coupling η and power σ of the |ψ|^{2σ}ψ term."""

    eta: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.eta):
            raise DomainError(f"eta must be finite, got {self.eta}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive, got {self.sigma}")


@dataclass
class WaveField:
    """Complex field on the uniform grid x_j = j·dx of [0, L]."""

    x: np.ndarray
    psi: np.ndarray
    a: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.x.shape != self.psi.shape or self.x.size < 3:
            raise DomainError("WaveField needs matching x and psi arrays with at least 3 nodes")

    @staticmethod
    def grid(a: float, L: float, dx: float) -> np.ndarray:
        """
        Uniform grid on [0, L'] with a on a node.

        dx is shrunk so that a/dx is an integer and L' >= L is the first node past L.
        """
        if not (dx > 0 and L > a > 0):
            raise DomainError(f"Need 0 < a < L and dx > 0, got a={a}, L={L}, dx={dx}")
        n_a = max(1, int(round(a / dx)))
        step = a / n_a
        n = int(math.ceil(L / step - 1e-9))
        return np.arange(n + 1) * step

    @classmethod
    def zeros(cls, a: float, L: float, dx: float) -> "WaveField":
        x = cls.grid(a, L, dx)
        return cls(x=x, psi=np.zeros_like(x, dtype=complex), a=a)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], a: float, L: float, dx: float) -> "WaveField":
        """Sample func on the aligned grid; both end values are forced to zero."""
        x = cls.grid(a, L, dx)
        psi = np.asarray(func(x), dtype=complex)
        psi[0] = 0.0
        psi[-1] = 0.0
        return cls(x=x, psi=psi, a=a)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def L(self) -> float:
        return float(self.x[-1])

    @property
    def j_a(self) -> int:
        return int(round(self.a / self.dx))

    def inner_product_of(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Discrete ⟨u, v⟩ = Σ conj(u_j) v_j dx."""
        return complex(np.vdot(u, v) * self.dx)

    def inner(self, other: "WaveField") -> complex:
        return self.inner_product_of(self.psi, other.psi)

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def l1_norm(self) -> float:
        return float(np.sum(np.abs(self.psi)) * self.dx)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.psi)))

    def with_values(self, psi: np.ndarray) -> "WaveField":
        return WaveField(x=self.x, psi=np.array(psi, dtype=complex), a=self.a)

    def copy(self) -> "WaveField":
        return self.with_values(self.psi.copy())

    def normalized(self) -> "WaveField":
        norm = math.sqrt(self.norm_sq())
        if norm == 0.0:
            raise PreconditionError("Cannot normalize a zero field")
        return self.with_values(self.psi / norm)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "re_psi": self.psi.real, "im_psi": self.psi.imag},
                            columns=constants.SNAPSHOT_COLUMNS)


def _interior_hamiltonian(x: np.ndarray, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the discrete H on the interior nodes 1..N-1."""
    dx = float(x[1] - x[0])
    n_interior = x.size - 2
    diag = np.full(n_interior, 2.0 / dx ** 2)
    j_a = int(round(params.a / dx))
    if not 1 <= j_a <= n_interior:
        raise DomainError(f"δ node x = {params.a} is not an interior grid node")
    diag[j_a - 1] += params.alpha / dx
    off = np.full(n_interior - 1, -1.0 / dx ** 2)
    return diag, off


def discrete_bound_state(x: np.ndarray, params: ModelParams) -> Optional[Tuple[float, np.ndarray]]:
    """
    Lowest eigenpair of the discrete Hamiltonian, if its eigenvalue is negative.

    Args:
        x: Aligned grid
        params: Model parameters

    Returns:
        (eigenvalue, eigenvector normalized in the discrete L² norm) or None
    """
    diag, off = _interior_hamiltonian(x, params)
    values, vectors = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    if values[0] >= 0.0:
        return None
    dx = float(x[1] - x[0])
    vec = np.zeros(x.size)
    vec[1:-1] = vectors[:, 0]
    vec /= math.sqrt(np.sum(vec ** 2) * dx)
    if vec[int(round(params.a / dx))] < 0:
        vec = -vec
    return float(values[0]), vec


class CrankNicolsonStepper:
    """(I + i dt/2 H) ψⁿ⁺¹ = (I - i dt/2 H) ψⁿ with Dirichlet ends."""

    def __init__(self, x: np.ndarray, params: ModelParams, dt: float):
        self.dt = dt
        self.diag, self.off = _interior_hamiltonian(x, params)
        half = 0.5j * dt
        n = self.diag.size
        self.banded = np.zeros((3, n), dtype=complex)
        self.banded[0, 1:] = half * self.off
        self.banded[1, :] = 1.0 + half * self.diag
        self.banded[2, :-1] = half * self.off

    def apply_hamiltonian(self, interior: np.ndarray) -> np.ndarray:
        out = self.diag * interior
        out[:-1] += self.off * interior[1:]
        out[1:] += self.off * interior[:-1]
        return out

    def step(self, psi: np.ndarray) -> np.ndarray:
        interior = psi[1:-1]
        rhs = interior - 0.5j * self.dt * self.apply_hamiltonian(interior)
        new = np.zeros_like(psi)
        new[1:-1] = linalg.solve_banded((1, 1), self.banded, rhs, check_finite=False)
        return new


@dataclass
class DiagnosticsRecord:
    t: float
    norm_sq: float
    energy: float
    I_q: float
    I_q_dot: float
    I_q_ddot: float
    sup_norm: float
    h1_norm: float
    boundary_term_T: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class Trajectory:
    """Diagnostics of one run plus its final field."""

    records: List[DiagnosticsRecord]
    final: WaveField
    t_reached: float
    halted: bool = False
    halt_rule: Optional[str] = None
    t_max_estimate: Optional[float] = None
    under_resolved_at: Optional[float] = None
    reflection_time: Optional[float] = None
    steps: int = 0
    rejected_steps: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.records], columns=constants.DIAGNOSTICS_COLUMNS)

    def summary(self) -> Dict[str, object]:
        return {
            "t_reached": self.t_reached,
            "halted": self.halted,
            "halt_rule": self.halt_rule,
            "t_max_estimate": self.t_max_estimate,
            "under_resolved_at": self.under_resolved_at,
            "reflection_time": self.reflection_time,
            "steps": self.steps,
            "rejected_steps": self.rejected_steps,
        }


@dataclass
class BlowupVerdict:
    """Outcome of the decidable global-existence / blow-up rules."""

    classification: str
    rule: str
    rules: List[str] = field(default_factory=list)
    rule_description: str = ""
    T_max_estimate: Optional[float] = None
    energy: Optional[float] = None
    virial_bound: Optional[float] = None
    numerical_blowup: bool = False
    # Thresholds of the existence theory that are not computable
    c1: Optional[float] = None
    c2: Optional[float] = None
    eta_c: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


class NLSDynamicsService:
    """Evolution, conserved quantities, virial identities and blow-up rules."""

    def __init__(self):
        self._stepper_cache: Dict[Tuple[int, float, float, float, float], CrankNicolsonStepper] = {}

    def _stepper(self, x: np.ndarray, params: ModelParams, dt: float) -> CrankNicolsonStepper:
        key = (x.size, float(x[1] - x[0]), params.a, params.alpha, dt)
        stepper = self._stepper_cache.get(key)
        if stepper is None:
            if len(self._stepper_cache) > 16:
                self._stepper_cache.clear()
            stepper = CrankNicolsonStepper(x, params, dt)
            self._stepper_cache[key] = stepper
        return stepper

    # ------------------------------------------------------------------
    # Initial data
    # ------------------------------------------------------------------

    def make_initial_field(self, kind: str, params: ModelParams, L: float, dx: float,
                           center: float = 5.0, width: float = 0.5, momentum: float = 0.0,
                           path: Optional[str] = None, renormalize: bool = True) -> WaveField:
        """
        Build ψ₀ on the aligned grid.

        Args:
            kind: "eigenstate", "gaussian" or "stationary-state-file"
            params: Model parameters
            L: Domain length
            dx: Requested spacing (shrunk so that a is a node)
            center: Gaussian center
            width: Gaussian width
            momentum: Gaussian carrier wavenumber
            path: Snapshot CSV (x, re_psi, im_psi) for stationary-state-file
            renormalize: Scale to unit discrete L² norm

        Returns:
            WaveField
        """
        if kind == "eigenstate":
            spectral = linear_service.bound_state(params)
            if not spectral.has_bound_state:
                raise PreconditionError(f"No bound state for a·α = {params.coupling:g}")
            field_ = WaveField.from_function(spectral.eigenfunction, params.a, L, dx)
        elif kind == "gaussian":
            if not width > 0:
                raise DomainError(f"Gaussian width must be positive, got {width}")
            field_ = WaveField.from_function(
                lambda x: np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * momentum * x),
                params.a, L, dx,
            )
        elif kind == "stationary-state-file":
            if not path:
                raise DomainError("stationary-state-file needs a path")
            field_ = self._load_profile(path, params, L, dx)
        else:
            raise DomainError(f"Unknown initial-data kind '{kind}'")

        return field_.normalized() if renormalize else field_

    @staticmethod
    def _load_profile(path: str, params: ModelParams, L: float, dx: float) -> WaveField:
        if not Path(path).is_file():
            raise DomainError(f"Profile file not found: {path}")
        frame = pd.read_csv(path, comment="#")
        missing = set(constants.SNAPSHOT_COLUMNS) - set(frame.columns)
        if missing:
            raise DomainError(f"Profile file {path} lacks columns {sorted(missing)}")
        frame = frame.sort_values("x")
        xs = frame["x"].to_numpy(dtype=float)
        re = frame["re_psi"].to_numpy(dtype=float)
        im = frame["im_psi"].to_numpy(dtype=float)
        return WaveField.from_function(
            lambda x: np.interp(x, xs, re, left=0.0, right=0.0) + 1j * np.interp(x, xs, im, left=0.0, right=0.0),
            params.a, L, dx,
        )

    # ------------------------------------------------------------------
    # Functionals
    # ------------------------------------------------------------------

    @staticmethod
    def _forward_differences(psi: WaveField) -> np.ndarray:
        return np.diff(psi.psi) / psi.dx

    def kinetic(self, psi: WaveField) -> float:
        """‖ψ′‖² from forward differences (exact quadratic form of the discrete H)."""
        return float(np.sum(np.abs(self._forward_differences(psi)) ** 2) * psi.dx)

    @staticmethod
    def nonlinear_norm(psi: WaveField, nl: Nonlinearity) -> float:
        """‖ψ‖_{2σ+2}^{2σ+2}."""
        return float(np.sum(np.abs(psi.psi) ** (2.0 * nl.sigma + 2.0)) * psi.dx)

    def energy(self, psi: WaveField, params: ModelParams, nl: Nonlinearity) -> float:
        """
        ℰ(ψ) = ‖ψ′‖² + α|ψ(a)|² + η/(σ+1)·‖ψ‖_{2σ+2}^{2σ+2}.

        The kinetic part uses forward differences, so the gradient never
        straddles the derivative jump at a.
        """
        value_a = abs(psi.psi[psi.j_a]) ** 2
        return (self.kinetic(psi) + params.alpha * value_a
                + nl.eta / (nl.sigma + 1.0) * self.nonlinear_norm(psi, nl))

    def h1_norm(self, psi: WaveField) -> float:
        return math.sqrt(psi.norm_sq() + self.kinetic(psi))

    @staticmethod
    def moment_of_inertia(psi: WaveField, q: float) -> float:
        """I_q = ∫ (x - q)² |ψ|² dx."""
        if q < 0:
            raise DomainError(f"q must be non-negative, got {q}")
        return float(np.sum((psi.x - q) ** 2 * np.abs(psi.psi) ** 2) * psi.dx)

    @staticmethod
    def virial_first(psi: WaveField, q: float) -> float:
        """
        İ_q = 4 Im⟨ψ, (x - q) ψ′⟩.

        Staggered form 4 Σ (x_{j+1/2} - q) Im(conj ψ_j ψ_{j+1}); it is the exact
        time derivative of the discrete I_q under the semi-discrete linear flow.
        """
        midpoints = psi.x[:-1] + 0.5 * psi.dx
        flux = np.imag(np.conj(psi.psi[:-1]) * psi.psi[1:])
        return float(4.0 * np.sum((midpoints - q) * flux))

    @staticmethod
    def virial_real_identity_check(psi: WaveField, q: float) -> float:
        """|4 Re⟨ψ, (x - q)ψ′⟩ + 2‖ψ‖²| with Re(conj ψ ψ′) = ½(|ψ|²)′."""
        density = np.abs(psi.psi) ** 2
        midpoints = psi.x[:-1] + 0.5 * psi.dx
        real_part = float(np.sum((midpoints - q) * 0.5 * np.diff(density)))
        return abs(4.0 * real_part + 2.0 * psi.norm_sq())

    @staticmethod
    def one_sided_derivatives(psi: WaveField) -> Tuple[complex, complex, complex]:
        """Second-order one-sided ψ′(0+), ψ′(a-), ψ′(a+)."""
        v, dx, j = psi.psi, psi.dx, psi.j_a
        if j < 2 or j + 2 >= v.size:
            raise DomainError("One-sided stencils need two nodes on each side of a")
        d0 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
        d_minus = (3.0 * v[j] - 4.0 * v[j - 1] + v[j - 2]) / (2.0 * dx)
        d_plus = (-3.0 * v[j] + 4.0 * v[j + 1] - v[j + 2]) / (2.0 * dx)
        return complex(d0), complex(d_minus), complex(d_plus)

    def boundary_term(self, psi: WaveField, q: float, params: ModelParams) -> float:
        """𝒯 = q|ψ′(0+)|² - (a - q)[|ψ′(a+)|² - |ψ′(a-)|²]."""
        d0, d_minus, d_plus = self.one_sided_derivatives(psi)
        return q * abs(d0) ** 2 - (params.a - q) * (abs(d_plus) ** 2 - abs(d_minus) ** 2)

    def virial_bound(self, psi: WaveField, params: ModelParams, nl: Nonlinearity) -> float:
        """8ℰ - 4α|ψ(a)|² + 4η(σ-2)/(σ+1)·‖ψ‖_{2σ+2}^{2σ+2}, the upper bound for Ï_a."""
        value_a = abs(psi.psi[psi.j_a]) ** 2
        return (8.0 * self.energy(psi, params, nl) - 4.0 * params.alpha * value_a
                + 4.0 * nl.eta * (nl.sigma - 2.0) / (nl.sigma + 1.0) * self.nonlinear_norm(psi, nl))

    def virial_second(self, psi: WaveField, q: float, params: ModelParams, nl: Nonlinearity) -> float:
        """
        Ï_q = 8ℰ - 4α|ψ(a)|² + 4η(σ-2)/(σ+1)·‖ψ‖_{2σ+2}^{2σ+2} - 4𝒯.

        At q = a, 𝒯 = a|ψ′(0+)|² >= 0 and Ï_a is checked against the bound.
        """
        bound = self.virial_bound(psi, params, nl)
        value = bound - 4.0 * self.boundary_term(psi, q, params)
        if q == params.a and value > bound + 1e-9 * max(1.0, abs(bound)):
            raise InternalConsistencyError(f"Ï_a = {value:.6g} exceeds its bound {bound:.6g}")
        return value

    @staticmethod
    def jump_condition_error(psi: WaveField, params: ModelParams) -> float:
        """|ψ′(a+) - ψ′(a-) - αψ(a)| with first-order one-sided differences (O(dx))."""
        v, dx, j = psi.psi, psi.dx, psi.j_a
        jump = (v[j + 1] - v[j]) / dx - (v[j] - v[j - 1]) / dx
        return float(abs(jump - params.alpha * v[j]))

    def diagnostics(self, t: float, psi: WaveField, params: ModelParams, nl: Nonlinearity,
                    q: float) -> DiagnosticsRecord:
        return DiagnosticsRecord(
            t=t,
            norm_sq=psi.norm_sq(),
            energy=self.energy(psi, params, nl),
            I_q=self.moment_of_inertia(psi, q),
            I_q_dot=self.virial_first(psi, q),
            I_q_ddot=self.virial_second(psi, q, params, nl),
            sup_norm=psi.sup_norm(),
            h1_norm=self.h1_norm(psi),
            boundary_term_T=self.boundary_term(psi, q, params),
        )

    # ------------------------------------------------------------------
    # Evolution
    # ------------------------------------------------------------------

    @staticmethod
    def _rotate(psi: np.ndarray, nl: Nonlinearity, tau: float) -> np.ndarray:
        """Exact solution of i ψ_t = η|ψ|^{2σ}ψ over time tau."""
        return psi * np.exp(-1j * nl.eta * np.abs(psi) ** (2.0 * nl.sigma) * tau)

    def _strang_step(self, psi: np.ndarray, x: np.ndarray, params: ModelParams,
                     nl: Nonlinearity, dt: float) -> np.ndarray:
        stepper = self._stepper(x, params, dt)
        if nl.eta == 0.0:
            return stepper.step(psi)
        half = self._rotate(psi, nl, 0.5 * dt)
        return self._rotate(stepper.step(half), nl, 0.5 * dt)

    def evolve_linear(self, psi0: WaveField, params: ModelParams, t: float, dt: float) -> WaveField:
        """e^{-itH} ψ₀ by Crank–Nicolson (η = 0); the last step is shortened to land on t."""
        if not t > 0:
            raise DomainError(f"t must be positive, got {t}")
        n_steps = max(1, int(math.ceil(t / dt - 1e-9)))
        step = t / n_steps
        stepper = self._stepper(psi0.x, params, step)
        psi = psi0.psi.copy()
        for _ in range(n_steps):
            psi = stepper.step(psi)
        if not np.all(np.isfinite(psi)):
            raise NumericalFailureError("Non-finite values in the linear evolution")
        return psi0.with_values(psi)

    def evolve(self, psi0: WaveField, params: ModelParams, nl: Nonlinearity, t_final: float,
               dt: float = constants.DEFAULT_DT, q: Optional[float] = None,
               observer_stride: int = constants.OBSERVER_STRIDE,
               observers: Optional[List[Callable[[float, WaveField], None]]] = None,
               renormalize: bool = True) -> Trajectory:
        """
        Strang-split evolution with blow-up detection.

        Args:
            psi0: Initial field (zero at both ends, a on a node)
            params: Model parameters
            nl: Nonlinearity (η, σ)
            t_final: Final time
            dt: Initial time step (halved when the sup-norm jumps by more than 10% in one step)
            q: Reference point of the moment of inertia (default a)
            observer_stride: Steps between diagnostics records
            observers: Read-only callbacks called with (t, field) at every record
            renormalize: Scale ψ₀ to unit norm first

        Returns:
            Trajectory; halted is True when a blow-up rule fired
        """
        if not t_final > 0 or not dt > 0:
            raise DomainError("t_final and dt must be positive")
        if abs(psi0.psi[0]) > 1e-12 or abs(psi0.psi[-1]) > 1e-12:
            raise DomainError("Initial field must vanish at x = 0 and x = L")
        q = params.a if q is None else q
        field_ = psi0.normalized() if renormalize else psi0.copy()
        observers = observers or []

        x = field_.x
        resolution_limit = constants.RESOLUTION_FACTOR / field_.dx
        focusing = nl.eta < 0
        far = x >= constants.REFLECTION_FRACTION * field_.L

        psi = field_.psi
        t = 0.0
        step_dt = dt
        sup_prev = field_.sup_norm()
        records = [self.diagnostics(0.0, field_, params, nl, q)]
        trajectory = Trajectory(records=records, final=field_, t_reached=0.0)
        # a focusing collapse counts only once H¹ has grown well past its initial value
        concentration_limit = max(resolution_limit, constants.CONCENTRATION_GROWTH * records[0].h1_norm)
        for observer in observers:
            observer(0.0, field_.copy())

        logger.info(f"🔍 Evolving to t={t_final:g} (η={nl.eta:g}, σ={nl.sigma:g}, dx={field_.dx:.4g}, dt={dt:g})")
        end_tol = 1e-12 * max(1.0, t_final)
        while t < t_final - end_tol:
            h = min(step_dt, t_final - t)
            candidate = self._strang_step(psi, x, params, nl, h)
            if not np.all(np.isfinite(candidate)):
                raise NumericalFailureError(f"Non-finite field at t={t + h:.6g}")

            sup_new = float(np.max(np.abs(candidate)))
            if sup_new > constants.SUP_GROWTH_LIMIT * sup_prev:
                step_dt *= 0.5
                trajectory.rejected_steps += 1
                if step_dt < constants.DT_MIN:
                    self._halt(trajectory, "dt-underflow", t)
                    break
                continue

            psi = candidate
            t += h
            sup_prev = sup_new
            trajectory.steps += 1
            current = field_.with_values(psi)

            h1 = self.h1_norm(current)
            if h1 > constants.H1_BLOWUP or (focusing and h1 > concentration_limit):
                records.append(self.diagnostics(t, current, params, nl, q))
                rule = "h1-divergence" if h1 > constants.H1_BLOWUP else "grid-concentration"
                self._halt(trajectory, rule, t)
                break
            if h1 > resolution_limit and trajectory.under_resolved_at is None:
                trajectory.under_resolved_at = t
                logger.warning(f"⚠️ H¹ norm {h1:.3g} exceeds what dx={field_.dx:g} resolves at t={t:.6g}")

            if trajectory.steps % observer_stride == 0 or t >= t_final - end_tol:
                records.append(self.diagnostics(t, current, params, nl, q))
                for observer in observers:
                    observer(t, current.copy())
                if trajectory.reflection_time is None and np.any(far):
                    if np.max(np.abs(psi[far])) > constants.REFLECTION_LEVEL * sup_new:
                        trajectory.reflection_time = t
                        logger.warning(f"⚠️ Field reached the far wall region at t={t:.6g}; reflections possible")

        trajectory.final = field_.with_values(psi)
        trajectory.t_reached = t
        if not trajectory.halted:
            logger.info(f"✅ Reached t={t:.6g} in {trajectory.steps} steps ({trajectory.rejected_steps} rejected)")
        return trajectory

    @staticmethod
    def _halt(trajectory: Trajectory, rule: str, t: float) -> None:
        trajectory.halted = True
        trajectory.halt_rule = rule
        trajectory.t_max_estimate = t
        logger.warning(f"❌ Numerical blow-up ({rule}) at t≈{t:.6g}")

    # ------------------------------------------------------------------
    # Blow-up rules
    # ------------------------------------------------------------------

    def classify_blowup(self, params: ModelParams, nl: Nonlinearity, psi0: WaveField,
                        probe: bool = True, probe_t: float = constants.PROBE_T_FINAL,
                        dt: float = constants.DEFAULT_DT) -> BlowupVerdict:
        """
        Apply the decidable existence rules and optionally a short probe run.

        Args:
            params: Model parameters
            nl: Nonlinearity
            psi0: Initial field (normalized before use)
            probe: Run the evolution up to probe_t and record numerical blow-up
            probe_t: Probe duration
            dt: Probe time step

        Returns:
            BlowupVerdict
        """
        field_ = psi0.normalized()
        energy = self.energy(field_, params, nl)
        bound = self.virial_bound(field_, params, nl)

        if nl.eta >= 0:
            classification, rule = "global-existence", "Thm2-i"
        elif nl.sigma < 2:
            classification, rule = "global-existence", "Thm2-ii"
        elif nl.sigma == 2:
            classification, rule = "indeterminate", "Thm2-iii-indeterminate"
        elif energy < 0:
            classification, rule = "blow-up-predicted", "Thm3-conditional"
        else:
            classification, rule = "indeterminate", "Thm2-iv-indeterminate"

        verdict = BlowupVerdict(classification=classification, rule=rule, rules=[rule],
                                rule_description=constants.BLOWUP_RULE_DESCRIPTIONS[rule],
                                energy=energy, virial_bound=bound)
        if not probe:
            return verdict

        trajectory = self.evolve(field_, params, nl, probe_t, dt=dt)
        if trajectory.halted:
            verdict.numerical_blowup = True
            verdict.T_max_estimate = trajectory.t_max_estimate
            verdict.rules.append("numerical-blowup-detected")
            if classification == "global-existence":
                logger.warning("⚠️ Probe halted although global existence holds; the grid is too coarse")
            elif classification == "indeterminate":
                verdict.classification = "blow-up-predicted"
                verdict.rule = "numerical-blowup-detected"
                verdict.rule_description = constants.BLOWUP_RULE_DESCRIPTIONS[verdict.rule]
        return verdict


# Default service instance
dynamics_service = NLSDynamicsService()
