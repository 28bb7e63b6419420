"""
Linear δ-shell operator: bound state, resolvent, evolution kernel, Q(k) and I_a.
"""

import cmath
import math

import numpy as np
import pytest
from scipy import integrate

from Utils import constants
from Utils.errors import DomainError, InsufficientDataError, PoleError, PreconditionError
from services.dynamics_service import WaveField, discrete_bound_state
from services.linear_service import ModelParams, linear_service


def params(a=1.0, alpha=-4.0):
    return ModelParams(a=a, alpha=alpha)


def gaussian_field(p, L=40.0, dx=0.01, center=5.0, width=0.5):
    return WaveField.from_function(lambda x: np.exp(-0.5 * ((x - center) / width) ** 2), p.a, L, dx).normalized()


def ia_by_contour_rotation(z, t, a):
    """∫ e^{-ik²t} sin(kz)(1 - cos 2ka)/k dk along k = e^{-iπ/4} r, one exponential at a time."""
    rot = cmath.exp(-0.25j * math.pi)
    terms = [(1.0, z), (-1.0, -z), (-0.5, z + 2 * a), (-0.5, z - 2 * a), (0.5, -z + 2 * a), (0.5, -z - 2 * a)]

    def g(r):
        if r == 0.0:
            return 0j
        k = rot * r
        return sum(c * cmath.exp(-r * r * t + 1j * k * b) for c, b in terms) / (2j * k)

    re, _ = integrate.quad(lambda r: g(r).real, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    im, _ = integrate.quad(lambda r: g(r).imag, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return 2.0 * rot * complex(re, im)



# ----------------------------------------------------------------------
# Bound state
# ----------------------------------------------------------------------

def test_bound_state_energy_for_attractive_shell():
    spectral = linear_service.bound_state(params())
    assert spectral.has_bound_state
    assert spectral.E == pytest.approx(-3.843, abs=5e-3)
    assert spectral.E == pytest.approx(-spectral.h ** 2, rel=1e-15)
    assert abs(linear_service.calG(1j * spectral.h, params())) < 1e-10


def test_no_bound_state_for_weak_or_repulsive_shell():
    assert not linear_service.bound_state(params(alpha=1.0)).has_bound_state
    assert not linear_service.bound_state(params(alpha=-0.5)).has_bound_state
    threshold = linear_service.bound_state(params(alpha=-1.0))
    assert not threshold.has_bound_state and threshold.threshold
    for alpha in (1.0, -0.5, -1.0):
        spectral = linear_service.bound_state(params(alpha=alpha))
        assert spectral.h is None and spectral.E is None and spectral.B is None
        assert spectral.to_dict()["E"] is None


def test_eigenfunction_without_bound_state_raises():
    with pytest.raises(PreconditionError):
        linear_service.bound_state(params(alpha=1.0)).eigenfunction(0.5)


def test_eigenfunction_is_normalized_and_bounded():
    report = linear_service.eigenfunction_bounds_check(params())
    assert report.l2_norm_sq == pytest.approx(1.0, abs=1e-9)
    assert report.sup_holds_sinh_ha
    assert report.sup_norm == pytest.approx(report.sup_bound_sinh_ha, rel=1e-12)
    assert report.l1_holds
    # h > 1 here, so B·sinh(a) is below the attained maximum
    assert not report.sup_holds_sinh_a


def test_eigenfunction_bounds_need_bound_state():
    with pytest.raises(PreconditionError):
        linear_service.eigenfunction_bounds_check(params(alpha=2.0))


def test_lower_lambert_branch_is_not_admissible():
    report = linear_service.branch_admissibility(params())
    assert report.admissible_w0
    assert report.wm1 == pytest.approx(-4.0, abs=1e-10)
    assert not report.admissible_wm1


def test_model_params_validation():
    with pytest.raises(DomainError):
        ModelParams(a=0.0, alpha=1.0)
    with pytest.raises(DomainError):
        ModelParams(a=1.0, alpha=float("inf"))


# ----------------------------------------------------------------------
# Resolvent
# ----------------------------------------------------------------------

def test_resolvent_is_symmetric_and_dirichlet():
    p, k = params(), 0.7 + 0.9j
    for x, y in [(0.3, 0.8), (0.4, 2.5), (1.7, 3.1)]:
        assert linear_service.resolvent_kernel(x, y, k, p) == pytest.approx(
            linear_service.resolvent_kernel(y, x, k, p), abs=1e-13)
    assert abs(linear_service.resolvent_kernel(0.0, 1.3, k, p)) < 1e-13


def test_resolvent_derivative_jumps_by_alpha_at_shell():
    p, k, y, h = params(), 1.1 + 0.5j, 2.2, 1e-6
    a = p.a
    right = (linear_service.resolvent_kernel(a + h, y, k, p) - linear_service.resolvent_kernel(a, y, k, p)) / h
    left = (linear_service.resolvent_kernel(a, y, k, p) - linear_service.resolvent_kernel(a - h, y, k, p)) / h
    expected = p.alpha * linear_service.resolvent_kernel(a, y, k, p)
    assert abs(right - left - expected) < 1e-4 * max(1.0, abs(expected))


def test_resolvent_reduces_to_dirichlet_kernel_without_shell():
    p, k = params(alpha=0.0), 0.3 + 1.2j
    x, y = 0.6, 1.9
    dirichlet = 1j / (2.0 * k) * (cmath.exp(1j * k * abs(x - y)) - cmath.exp(1j * k * (x + y)))
    assert linear_service.resolvent_kernel(x, y, k, p) == pytest.approx(dirichlet, abs=1e-14)


def test_resolvent_domain_and_pole():
    p = params()
    with pytest.raises(DomainError):
        linear_service.resolvent_kernel(0.5, 0.5, 1.0 - 0.1j, p)
    h = linear_service.bound_state(p).h
    with pytest.raises(PoleError):
        linear_service.resolvent_kernel(0.5, 0.5, 1j * h, p)


# ----------------------------------------------------------------------
# q-factor and evolution kernel
# ----------------------------------------------------------------------

@pytest.mark.parametrize("x, y", [(0.3, 0.7), (0.4, 2.0), (2.5, 0.2), (1.5, 3.5)])
def test_q_factor_closed_form_matches_exponentials(x, y):
    p = params()
    for k in (-3.1, -0.4, 0.9, 5.5):
        closed = linear_service.q_factor(k, x, y, p)
        assert closed == pytest.approx(linear_service.q_factor_exponential(k, x, y, p), abs=1e-13)
        assert abs(closed) <= 4.0 + 1e-12


def test_evolution_kernel_symmetries():
    p = params()
    u = linear_service.evolution_kernel(0.8, 2.4, 0.5, p)
    assert linear_service.evolution_kernel(0.8, 2.4, -0.5, p) == pytest.approx(u.conjugate(), abs=1e-14)
    assert linear_service.evolution_kernel(-0.1, 2.4, 0.5, p) == 0j
    with pytest.raises(DomainError):
        linear_service.evolution_kernel(0.8, 2.4, 0.0, p)


def remainder_by_direct_sum(x, y, t, p, k_max=150.0):
    """2∫₀^K e^{-ik²t} Re R(k) dk, summed over unit intervals in k."""
    total = 0j
    for lo in np.arange(0.0, k_max, 1.0):
        def f(k):
            return float(np.real(linear_service._remainder(k, x, y, p)))
        re, _ = integrate.quad(lambda k: math.cos(k * k * t) * f(k), lo, lo + 1.0, limit=200, epsabs=1e-13)
        im, _ = integrate.quad(lambda k: -math.sin(k * k * t) * f(k), lo, lo + 1.0, limit=200, epsabs=1e-13)
        total += complex(re, im)
    return 2.0 * total


@pytest.mark.parametrize("x, y, t", [(0.8, 2.4, 1.0), (3.0, 5.5, 0.5), (0.4, 0.7, 2.0)])
def test_correction_integral_remainder_is_accurate(x, y, t):
    p = params()
    fresnel_part = 0.5 * sum(sign * complex(linear_service._fresnel_part(phase, t))
                             for sign, phase in linear_service._q_phases(x, y, p.a))
    remainder = linear_service.correction_integral(x, y, t, p) - fresnel_part
    assert abs(remainder - remainder_by_direct_sum(x, y, t, p)) < 1e-5


def test_evolution_kernel_without_shell_is_dirichlet_heat_kernel():
    p, x, y, t = params(alpha=0.0), 0.9, 1.6, 0.3
    pref = 1.0 / cmath.sqrt(4j * math.pi * t)
    expected = pref * (cmath.exp(1j * (x - y) ** 2 / (4 * t)) - cmath.exp(1j * (x + y) ** 2 / (4 * t)))
    assert linear_service.evolution_kernel(x, y, t, p) == pytest.approx(expected, abs=1e-14)


@pytest.mark.slow
def test_kernel_propagation_matches_pde_backend():
    p = params(alpha=2.0)
    t = 0.5
    psi0 = gaussian_field(p, L=40.0, dx=0.01)
    pde = linear_service.propagate_continuum(psi0, t, p, backend="pde", dt=5e-4)

    ys = np.linspace(2.0, 8.0, 61)
    norm = math.sqrt(np.sum(np.exp(-((psi0.x - 5.0) / 0.5) ** 2)) * psi0.dx)
    weights = np.exp(-0.5 * ((ys - 5.0) / 0.5) ** 2) / norm
    peak = pde.sup_norm()
    for x in (3.0, 4.5, 6.0):
        values = np.array([linear_service.evolution_kernel(x, y, t, p) for y in ys])
        by_kernel = integrate.trapezoid(values * weights, ys)
        j = int(round(x / pde.dx))
        assert abs(by_kernel - pde.psi[j]) < 5e-3 * peak


# ----------------------------------------------------------------------
# I_a and Q(k)
# ----------------------------------------------------------------------

@pytest.mark.parametrize("z, t, a", [(3.0, 2.0, 1.0), (-1.5, 0.7, 1.0), (0.4, 1.3, 0.5)])
def test_ia_closed_form_matches_rotated_contour(z, t, a):
    assert linear_service.Ia_closed_form(z, t, a) == pytest.approx(ia_by_contour_rotation(z, t, a), abs=1e-7)


def test_ia_is_odd_in_z():
    z = np.linspace(0.1, 5.0, 25)
    assert np.allclose(linear_service.Ia_closed_form(-z, 1.5, 1.0), -linear_service.Ia_closed_form(z, 1.5, 1.0))


def test_ia_certified_bound_holds_on_default_box():
    report = linear_service.ia_bound_report(1.0)
    assert report.certified_violations == 0
    assert report.max_scaled <= report.certified_constant
    assert report.samples == 2001 * 41


def test_ia_bound_report_needs_samples():
    with pytest.raises(InsufficientDataError):
        linear_service.ia_bound_report(1.0, z_values=[])


def q_by_definition(k, a, alpha):
    w = (cmath.exp(2j * k * a) - 1.0) / k
    ratio = alpha * w / 2j
    return (1.0 - math.cos(2.0 * k * a)) / (1j * k) * ratio / (1.0 + ratio)


@pytest.mark.parametrize("alpha", [-4.0, -0.5, 2.0])
def test_q_matches_definition(alpha):
    p = params(alpha=alpha)
    for k in (-2.3, -0.05, 0.7, 9.1):
        assert linear_service.Q(k, p) == pytest.approx(q_by_definition(k, 1.0, alpha), rel=1e-11, abs=1e-14)


@pytest.mark.parametrize("alpha", [-4.0, -0.5, 2.0, 7.0])
def test_q_certified_bound_and_small_k_slope(alpha):
    report = linear_service.q_bounds_check(params(alpha=alpha))
    assert report.certified_violations == 0
    assert report.max_certified_ratio <= 1.0 + 1e-9
    assert report.small_k_slope == pytest.approx(report.expected_slope, rel=1e-6)


def test_q_at_threshold_tends_to_minus_two_a():
    p = params(a=1.0, alpha=-1.0)
    assert linear_service.Q(0.0, p) == pytest.approx(-2.0, abs=1e-14)
    assert linear_service.Q(1e-4, p) == pytest.approx(-2.0, abs=1e-3)


# ----------------------------------------------------------------------
# Continuum projection and dispersion
# ----------------------------------------------------------------------

def test_projection_removes_discrete_bound_state():
    p = params()
    field = WaveField.from_function(lambda x: x * np.exp(-x), p.a, 20.0, 0.01)
    projected = linear_service.project_continuum(field, p, discrete=True)
    _, vec = discrete_bound_state(field.x, p)
    assert abs(field.inner_product_of(vec.astype(complex), projected.psi)) < 1e-12


def test_projection_is_identity_without_bound_state():
    p = params(alpha=1.0)
    field = gaussian_field(p, L=20.0)
    assert np.array_equal(linear_service.project_continuum(field, p).psi, field.psi)


def test_propagate_continuum_checks_arguments():
    p = params(alpha=1.0)
    field = gaussian_field(p, L=20.0)
    with pytest.raises(DomainError):
        linear_service.propagate_continuum(field, 0.0, p)
    with pytest.raises(DomainError):
        linear_service.propagate_continuum(field, 1.0, p, backend="spectral")


def test_pde_propagation_preserves_norm_of_continuum_part():
    p = params(alpha=2.0)
    psi0 = gaussian_field(p, L=40.0, dx=0.02)
    evolved = linear_service.propagate_continuum(psi0, 1.0, p, backend="pde", dt=1e-3)
    assert evolved.norm_sq() == pytest.approx(psi0.norm_sq(), rel=1e-10)


def test_dispersive_check_rejects_threshold_and_single_time():
    with pytest.raises(DomainError):
        linear_service.dispersive_check(params(alpha=-1.0))
    with pytest.raises(InsufficientDataError):
        linear_service.dispersive_check(params(alpha=2.0), times=[1.0])


@pytest.mark.slow
def test_dispersive_decay_is_flat_in_sqrt_t():
    report = linear_service.dispersive_check(params(alpha=2.0))
    assert report.times[0] == 1.0 and report.times[-1] == 100.0
    assert abs(report.loglog_slope) <= 0.05
    assert report.empirical_constant > 0
    assert [row["t"] for row in report.rows] == list(constants.DISPERSIVE_TIMES)
