"""
Stationary states: effective equations, reconstruction, branches and bifurcations.
"""

import logging
import math

import numpy as np
import pytest
from scipy import integrate

from Utils import constants
from Utils.errors import DomainError, InsufficientDataError, InvalidProfileError, PoleError
from services import specfun
from services.linear_service import ModelParams, linear_service
from services.stationary_service import Branch, StationaryState, stationary_service

NEAR_ONE = [1.0 - 10.0 ** -d for d in np.linspace(2.0, 8.0, 20)]


def params(a=1.0, alpha=-4.0):
    return ModelParams(a=a, alpha=alpha)


def synthetic_state(eta, Omega, regime="focusing"):
    mu_sq = -eta if regime == "focusing" else eta
    return StationaryState(regime=regime, ell=2, p=0.9, lam=1.0, lam_prime=1.0, x0=1.0, x0_prime=1.0,
                           C=1.0, C_prime=1.0, Omega=Omega, a=1.0, alpha=-4.0, mu_sq=mu_sq, eta=eta)


def profile_mass(state):
    inner, _ = integrate.quad(lambda x: float(state.profile(x)) ** 2, 0.0, state.a,
                              epsabs=0.0, epsrel=1e-12, limit=400)
    end = max(state.a, state.x0_prime) + 60.0 / state.lam_prime
    breaks = [state.x0_prime] if state.a < state.x0_prime < end else None
    outer, _ = integrate.quad(lambda x: float(state.profile(x)) ** 2, state.a, end, points=breaks,
                              epsabs=0.0, epsrel=1e-12, limit=400)
    return inner + outer


# ----------------------------------------------------------------------
# Effective equations
# ----------------------------------------------------------------------

def test_focusing_H_at_zero_of_cn():
    p, a = 0.9, 1.0
    w = 1.0 / math.sqrt(2.0 * p * p - 1.0)
    lam_prime = 2.0 * specfun.elliptic_K(p) / (w * a)
    expected = -lam_prime * w * math.sqrt(1.0 - p * p)
    for ell in (1, 2):
        assert stationary_service.H_focusing(p, lam_prime, ell, params()) == pytest.approx(expected, rel=1e-10)


def test_literal_and_reduced_forms_agree():
    p_focus, p_defocus = 0.93, 0.6
    pf = math.sqrt(1.0 - p_focus ** 2)
    pd = math.sqrt(1.0 - p_defocus ** 2)
    u = 1.0 / math.sqrt(2.0 - p_defocus ** 2)
    limit = specfun.elliptic_K(p_defocus) / u
    for ell in (1, 2):
        for lam in (0.3, 1.7, 4.2):
            literal = stationary_service.H_focusing(p_focus, lam, ell, params())
            if literal is None:
                continue
            reduced = stationary_service.reduced_H("focusing", p_focus, np.array([lam]), ell, params())[0]
            assert literal == pytest.approx(pf * reduced, abs=1e-10 * max(1.0, abs(literal)))
        for lam in (0.2 * limit, 0.5 * limit, 0.9 * limit):
            literal = stationary_service.H_defocusing(p_defocus, lam, ell, params())
            reduced = stationary_service.reduced_H("defocusing", p_defocus, np.array([lam]), ell, params())[0]
            assert literal == pytest.approx(pd * reduced, abs=1e-10 * max(1.0, abs(literal)))


def test_solitonic_limit_reproduces_linear_eigenvalue_condition():
    p = params()
    h = linear_service.bound_state(p).h
    value = stationary_service.reduced_H("focusing", 1.0, np.array([h]), 2, p)[0]
    assert abs(value) <= 1e-10 * math.sinh(h) * (h + 4.0)
    assert stationary_service.H_focusing(1.0, h, 2, p) == 0.0

    lam = np.linspace(0.01, 20.0, 2000)
    odd = stationary_service.reduced_H("focusing", 1.0, lam, 1, p)
    assert np.all(odd < 0)


def test_effective_equation_domains():
    p = params()
    with pytest.raises(DomainError):
        stationary_service.H_focusing(0.7, 1.0, 2, p)
    with pytest.raises(DomainError):
        stationary_service.H_focusing(0.9, 1.0, 3, p)
    with pytest.raises(DomainError):
        stationary_service.H_defocusing(1.0, 1.0, 2, p)
    with pytest.raises(DomainError):
        stationary_service.H_defocusing(0.5, -1.0, 2, p)


def test_defocusing_pole_of_cs():
    p_mod = 0.5
    u = 1.0 / math.sqrt(2.0 - p_mod ** 2)
    lam = specfun.elliptic_K(p_mod) / u
    with pytest.raises(PoleError):
        stationary_service.H_defocusing(p_mod, lam, 2, params())


def test_square_root_outside_domain_is_reported_as_none():
    # p w cn(u*) > 1 happens where |sd(v)| is large; scan for one such point
    p_mod = 0.99
    found = False
    for lam in np.linspace(0.5, 20.0, 20000):
        if stationary_service.H_focusing(p_mod, lam, 2, params()) is None:
            found = True
            assert np.isnan(stationary_service.reduced_H("focusing", p_mod, np.array([lam]), 2, params())[0])
            break
    assert found


# ----------------------------------------------------------------------
# Reconstruction
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def focusing_states():
    grid = [0.8, 0.9, 0.97] + NEAR_ONE[::4]
    states = []
    for ell in (1, 2):
        states.extend(stationary_service.solve_branch("focusing", ell, params(), p_grid=grid))
    return states


@pytest.fixture(scope="module")
def defocusing_states():
    grid = stationary_service.default_p_grid("defocusing", constants.P_POINTS)
    states = stationary_service.solve_branch("defocusing", 2, params(), p_grid=grid)
    assert states
    return states


def test_solve_branch_returns_states_sorted_by_omega(focusing_states):
    assert focusing_states
    omegas = [s.Omega for s in focusing_states]
    assert omegas == sorted(omegas)
    for state in focusing_states:
        assert state.Omega == pytest.approx(-state.lam_prime ** 2, rel=1e-12)
        assert state.eta == pytest.approx(-state.mu_sq)


def test_emitted_states_pass_residual_gate(focusing_states, defocusing_states):
    for state in focusing_states + defocusing_states:
        report = stationary_service.stationary_residuals(state)
        assert report.ode <= constants.ODE_RESIDUAL_TOL
        assert report.jump <= constants.JUMP_RESIDUAL_TOL
        assert report.continuity <= constants.JUMP_RESIDUAL_TOL
        assert report.ell_consistent


def test_tail_sign_follows_branch_index(focusing_states):
    for state in focusing_states:
        assert math.copysign(1.0, state.s_prime) == (-1.0) ** state.ell


def test_mass_matches_whole_domain_quadrature(focusing_states, defocusing_states):
    sample = focusing_states[:: max(1, len(focusing_states) // 6)] + defocusing_states[:3]
    for state in sample:
        assert state.mu_sq == pytest.approx(profile_mass(state), rel=1e-8)


def test_derivative_matches_finite_differences(focusing_states):
    state = focusing_states[len(focusing_states) // 2]
    h = 1e-6
    for x in (0.3 * state.a, 0.8 * state.a, 1.5 * state.a, state.a + 2.0 / state.lam_prime):
        fd = (state.profile(x + h) - state.profile(x - h)) / (2.0 * h)
        assert float(state.derivative(x)) == pytest.approx(float(fd), abs=1e-6 * max(1.0, abs(state.C)))


def test_defocusing_states_are_regular(defocusing_states):
    assert defocusing_states
    for state in defocusing_states:
        assert state.regime == "defocusing"
        assert state.eta > 0
        assert state.x0_prime < state.a
        assert state.lam * state.a < specfun.elliptic_K(state.p)


def test_defocusing_odd_branch_is_rejected():
    with pytest.raises(InvalidProfileError):
        stationary_service.reconstruct("defocusing", 1, 0.5, 1.0, params())
    assert stationary_service.solve_branch("defocusing", 1, params(), p_grid=[0.5]) == []


def test_defocusing_odd_branch_skips_the_root_scan(monkeypatch):
    def no_scan(*args, **kwargs):
        raise AssertionError("root scan should not run")

    monkeypatch.setattr(stationary_service, "_roots_between", no_scan)
    grid = stationary_service.default_p_grid("defocusing", 20)
    assert stationary_service.solve_branch("defocusing", 1, params(), p_grid=grid) == []


def test_ground_branch_continues_the_linear_state():
    p = params()
    states = stationary_service.solve_branch("focusing", 2, p, p_grid=[1.0 - 1e-8])
    E = linear_service.bound_state(p).E
    closest = min(states, key=lambda s: abs(s.Omega - E))
    assert abs(closest.Omega - E) <= 1e-5
    assert -1e-3 < closest.eta < 0.0


def test_solve_branch_validates_grid():
    with pytest.raises(DomainError):
        stationary_service.solve_branch("focusing", 2, params(), p_grid=[0.5])
    with pytest.raises(DomainError):
        stationary_service.solve_branch("defocusing", 2, params(), p_grid=[1.0])
    with pytest.raises(DomainError):
        stationary_service.solve_branch("mixed", 2, params())


def test_default_p_grid():
    grid = stationary_service.default_p_grid("focusing")
    assert grid[0] > 1.0 / math.sqrt(2.0) and grid[-1] < 1.0
    assert np.all(np.diff(grid) > 0)
    assert np.any(np.isclose(grid, 1.0 - 1e-8, rtol=0.0, atol=1e-15))
    assert stationary_service.default_p_grid("defocusing")[0] == 0.0


# ----------------------------------------------------------------------
# Stability slope and branches
# ----------------------------------------------------------------------

def test_slope_classification():
    rising = [synthetic_state(eta=-m, Omega=-1.0 - m) for m in (0.5, 1.0, 1.5, 2.0)]
    rows = stationary_service.stability_slope(rising)
    assert [r["classification"] for r in rows] == ["stable"] * 4
    assert all(r["note"] == constants.SLOPE_NOTE for r in rows)

    falling = [synthetic_state(eta=-m, Omega=-3.0 + m) for m in (0.5, 1.0, 1.5)]
    assert {r["classification"] for r in stationary_service.stability_slope(falling)} == {"unstable"}

    flat = [synthetic_state(eta=-1.0, Omega=-w) for w in (1.0, 2.0, 3.0)]
    assert {r["classification"] for r in stationary_service.stability_slope(flat)} == {"marginal"}


def test_slope_needs_three_distinct_frequencies():
    with pytest.raises(InsufficientDataError):
        stationary_service.stability_slope([synthetic_state(-1.0, -2.0), synthetic_state(-1.5, -2.0)])


def test_ground_branch_slope_is_positive():
    states = stationary_service.solve_branch("focusing", 2, params(), p_grid=NEAR_ONE)
    ground = {}
    for state in states:
        if state.p not in ground or state.mu_sq < ground[state.p].mu_sq:
            ground[state.p] = state
    rows = stationary_service.stability_slope(list(ground.values()))
    interior = rows[1:-1]
    assert interior and all(r["slope"] > 0 for r in interior)


def test_assemble_branches_labels_ground_and_fold():
    ground = [synthetic_state(eta=e, Omega=-3.8 + 0.2 * e) for e in np.linspace(-0.1, -10.0, 50)]
    fold = [synthetic_state(eta=-20.0 - 10.0 * t * t, Omega=-7.0 + 3.0 * t) for t in np.linspace(-1.0, 1.0, 51)]
    branches = stationary_service.assemble_branches(ground + fold)
    labels = sorted(b.label for b in branches)
    assert labels == ["Omega0", "Omega1+", "Omega1-"]

    by_label = {b.label: b for b in branches}
    assert len(by_label["Omega0"].states) == 50
    assert min(s.Omega for s in by_label["Omega1+"].states) >= -7.0 - 1e-12
    assert max(s.Omega for s in by_label["Omega1-"].states) <= -7.0 + 1e-12
    assert len(by_label["Omega1+"].states) + len(by_label["Omega1-"].states) == 52


def test_assemble_branches_edge_cases():
    assert stationary_service.assemble_branches([]) == []
    single = stationary_service.assemble_branches([synthetic_state(-1.0, -2.0)])
    assert [b.label for b in single] == ["Omega0"]


def test_eta_turning_points_finds_interior_extremum():
    branch = Branch(label="test", states=[synthetic_state(eta=-20.0 - 10.0 * t * t, Omega=-7.0 + 3.0 * t)
                                          for t in np.linspace(-1.0, 1.0, 21)])
    points = stationary_service.eta_turning_points([branch])
    assert len(points) == 1
    assert points[0]["eta"] == pytest.approx(-20.0)
    assert points[0]["Omega"] == pytest.approx(-7.0)


# ----------------------------------------------------------------------
# Real reduction
# ----------------------------------------------------------------------

def test_constant_phase_profile_reduces_to_real():
    x = np.linspace(0.0, 10.0, 1001)
    real = np.sin(x) * np.exp(-0.3 * x)
    report = stationary_service.check_real_reduction(np.exp(0.7j) * real, x[1] - x[0])
    assert report.max_wronskian < 1e-12
    assert report.residual_imag < 1e-12
    assert report.phase == pytest.approx(0.7, abs=1e-12)
    assert report.dirichlet_ok


def test_moving_profile_is_not_real():
    x = np.linspace(0.0, 10.0, 1001)
    psi = np.sin(x) * np.exp(-0.3 * x) * np.exp(2j * x)
    report = stationary_service.check_real_reduction(psi, x[1] - x[0])
    assert report.max_wronskian > 0.1
    assert report.residual_imag > 0.1


def test_real_reduction_needs_samples():
    with pytest.raises(InsufficientDataError):
        stationary_service.check_real_reduction([1.0, 2.0], 0.1)


# ----------------------------------------------------------------------
# Bifurcations
# ----------------------------------------------------------------------

def test_dH_dp_matches_wide_stencil_without_warnings(focusing_states, caplog):
    p = params()
    h = 1e-4
    checked = 0
    for state in focusing_states:
        if state.p > 0.97:
            continue

        def H(q):
            return stationary_service.reduced_H("focusing", q, np.array([state.lam_prime]), state.ell, p)[0]

        stencil = (-H(state.p + 2 * h) + 8 * H(state.p + h) - 8 * H(state.p - h) + H(state.p - 2 * h)) / (12 * h)
        if not np.isfinite(stencil):
            continue
        with caplog.at_level(logging.WARNING, logger="services.stationary_service"):
            slope = stationary_service.dH_dp("focusing", state.p, state.lam_prime, state.ell, p)
        assert slope == pytest.approx(stencil, rel=1e-6, abs=1e-6)
        checked += 1
    assert checked > 0
    assert not [r for r in caplog.records if "∂Ĥ/∂p" in r.getMessage()]


def test_bifurcation_points_solve_the_fold_system():
    p = params()
    points = stationary_service.find_bifurcations("focusing", None, p)
    assert [pt.n for pt in points] == list(range(1, len(points) + 1))
    assert [pt.eta_n for pt in points] == sorted((pt.eta_n for pt in points), reverse=True)
    for pt in points:
        assert stationary_service.relative_residual("focusing", pt.p, pt.lambda_prime, pt.ell, p) <= 1e-9
        assert pt.Omega_n == pytest.approx(-pt.lambda_prime ** 2, rel=1e-12)
        assert pt.eta_n < 0


@pytest.mark.slow
def test_bifurcation_points_match_reference_values():
    p = params()
    points = stationary_service.find_bifurcations("focusing", None, p)
    assert len(points) >= 2
    expected = [(-19.354, -6.825), (-81.740, -54.417)]
    for (eta, omega), pt in zip(expected, points):
        assert pt.eta_n == pytest.approx(eta, abs=0.02)
        assert pt.Omega_n == pytest.approx(omega, abs=0.02)
        assert stationary_service.fold_root_counts(pt, p).changes_by_two
