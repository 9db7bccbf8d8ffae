import math

import numpy as np
import pytest

import ccsnlab as cl
from ccsnlab.constants import TWO_PI

from conftest import dominant_peaks


def rate_scale(d):
    return max(d.omega_q, d.lambda_star ** 2 / d.omega_q, d.gamma_m)


# ---------------------------------------------------------------------------
# Right-hand side and fixed points
# ---------------------------------------------------------------------------

def test_rhs_vanishes_at_classical_steady_state(d100):
    ss = cl.steady_state_classical(d100)
    r = cl.riccati_rhs(ss, d100)
    scale = rate_scale(d100) * max(ss.h1, ss.h3)
    assert max(abs(r.h1), abs(r.h2), abs(r.h3)) < 1e-10 * scale


def test_rhs_free_oscillator_momentum_conservation():
    d = cl.derive(cl.table_defaults(power=0.0))
    r = cl.riccati_rhs(cl.MomentState(0.0, 3.0, 0.0, 2.0), d)
    assert r.h3 == 0.0


def test_rhs_quantum_thermal_fixed_point():
    d = cl.derive(cl.table_defaults(power=0.0, temperature=0.5,
                                    prescription="quantum"))
    c = d.coth_q
    r = cl.riccati_rhs(cl.MomentState(0.0, c, 0.0, c), d)
    scale = rate_scale(d) * c
    assert max(abs(r.h1), abs(r.h2), abs(r.h3)) < 1e-12 * scale


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def test_covariance_oscillates_at_twice_omega_q(d100, init45):
    traj = cl.integrate_moments(init45, d100, 1000.0)
    x = traj.h1 - cl.steady_state_classical(d100).h1
    peaks, bin_w = dominant_peaks(x, traj.dt)
    assert abs(peaks[0][0] - 2 * d100.omega_q) <= bin_w


def test_ground_state_is_stationary():
    d = cl.derive(cl.table_defaults(power=0.0, model="qg"))
    traj = cl.integrate_moments(cl.MomentState(0.0, 1.0, 0.0, 1.0), d, 100.0)
    assert np.max(np.abs(traj.h1 - 1.0)) < 1e-12
    assert np.max(np.abs(traj.h2)) < 1e-12
    assert np.max(np.abs(traj.h3 - 1.0)) < 1e-12


def test_rk4_order_four_self_convergence(d100, init45):
    base = TWO_PI / (200.0 * d100.omega_q)
    finals = {}
    for k in (1, 2, 4):
        traj = cl.integrate_moments(init45, d100, 20.0, dt=base / k,
                                    store_every=10 * k)
        finals[k] = traj.final_state().h1
    e1 = abs(finals[1] - finals[2])
    e2 = abs(finals[2] - finals[4])
    slope = math.log2(e1 / e2)
    assert 3.7 < slope < 4.3


def test_heisenberg_guard_trips_on_bad_state(d100):
    bad = cl.MomentState(0.0, 1.0, 0.9, 1.0)  # purity 0.19 < 1
    with pytest.raises(ValueError):
        cl.integrate_moments(bad, d100, 1.0)


def test_step_size_precondition(d100):
    with pytest.raises(ValueError, match="too coarse"):
        cl.integrate_moments(cl.MomentState(0.0, 1.0, 0.0, 1.0), d100, 10.0,
                             dt=TWO_PI / (10.0 * d100.omega_q))


# ---------------------------------------------------------------------------
# Steady states
# ---------------------------------------------------------------------------

def test_classical_steady_state_weak_coupling_limit():
    d = cl.derive(cl.table_defaults(power=1e-30))
    ss = cl.steady_state_classical(d)
    assert abs(ss.h1 - 1.0) < 1e-12
    assert abs(ss.h2) < 1e-12
    assert abs(ss.h3 - 1.0) < 1e-12


def test_classical_steady_state_long_time_oracle(d100):
    ss = cl.steady_state_classical(d100)
    mu = d100.lambda_star ** 2 / d100.omega_q
    start = cl.MomentState(0.0, ss.h1 * 1.001, ss.h2, ss.h3 * 1.001)
    traj = cl.integrate_moments(start, d100, 10.0 / mu, dt=0.25,
                                store_every=200000)
    fin = traj.final_state()
    vec = np.array([fin.h1 - ss.h1, fin.h2 - ss.h2, fin.h3 - ss.h3])
    ref = np.array([ss.h1, ss.h2, ss.h3])
    assert np.linalg.norm(vec) < 1e-6 * np.linalg.norm(ref)


def test_classical_momentum_position_correlation_sign():
    for power in (0.0, 1e-9, 1e-6, 1e-3):
        d = cl.derive(cl.table_defaults(power=power))
        h2 = cl.steady_state_classical(d).h2
        if power == 0.0:
            assert h2 == 0.0
        else:
            assert h2 > 0.0


def test_quantum_steady_state_reduces_to_classical_at_cold_limit():
    d = cl.derive(cl.table_defaults(power=1e-6, temperature=1e-14,
                                    prescription="quantum"))
    ssq = cl.steady_state_quantum(d)
    ssc = cl.steady_state_classical(d)
    assert abs(ssq.h1 - ssc.h1) < 1e-6 * ssc.h1
    assert abs(ssq.h3 - ssc.h3) < 1e-6 * ssc.h3


def test_quantum_steady_state_matches_long_integration():
    d = cl.derive(cl.table_defaults(power=1e-6, temperature=1.0,
                                    prescription="quantum"))
    ss = cl.steady_state_quantum(d)
    start = cl.MomentState(0.0, ss.h1 * 1.001, ss.h2 * 1.001, ss.h3 * 1.0011)
    fin = cl.integrate_moments(start, d, 60.0, dt=0.01,
                               store_every=1000).final_state()
    gap = max(abs(fin.h1 - ss.h1) / ss.h1, abs(fin.h3 - ss.h3) / ss.h3,
              abs(fin.h2 - ss.h2) / abs(ss.h2))
    assert gap < 1e-8


def test_quantum_steady_state_residual():
    d = cl.derive(cl.table_defaults(power=1e-6, temperature=1.0,
                                    prescription="quantum"))
    ss = cl.steady_state_quantum(d)
    r = cl.riccati_rhs(ss, d)
    scale = rate_scale(d) * max(ss.h1, ss.h3)
    assert max(abs(r.h1), abs(r.h2), abs(r.h3)) < 1e-12 * scale


# ---------------------------------------------------------------------------
# Linearized roots
# ---------------------------------------------------------------------------

def power_for_lq2(lq2):
    ref = cl.derive(cl.table_defaults(power=1e-7))
    return 1e-7 * lq2 / ref.lambda_q2


@pytest.mark.parametrize("lq2", [1e-4, 1e-3, 1e-2])
def test_roots_weak_coupling_asymptotics(lq2):
    d = cl.derive(cl.table_defaults(power=power_for_lq2(lq2)))
    lam1, lam2, lam3 = cl.linearized_roots(d)
    mu = d.lambda_star ** 2 / d.omega_q
    tol = 5.0 * d.lambda_q2 ** 2 * d.omega_q
    assert abs(lam1 - (-mu)) <= tol
    assert abs(lam2 - (-mu + 2j * d.omega_q)) <= tol
    assert abs(lam3 - (-mu - 2j * d.omega_q)) <= tol


def test_roots_strong_coupling_asymptotics():
    for ratio in (10.0, 30.0):
        d = cl.derive(cl.table_defaults(power=power_for_lq2(ratio ** 2)))
        ls = d.lambda_star
        assert abs(d.lambda_star / d.omega_q - ratio) < 1e-6 * ratio
        roots = cl.linearized_roots(d)
        targets = [-math.sqrt(2) * ls, complex(-math.sqrt(2) * ls, math.sqrt(2) * ls),
                   complex(-math.sqrt(2) * ls, -math.sqrt(2) * ls)]
        for r, t in zip(roots, targets):
            assert abs(r - t) < 0.05 * abs(t)


def test_roots_always_stable_and_match_numpy():
    for lq2 in np.logspace(-6, 2, 17):
        d = cl.derive(cl.table_defaults(power=power_for_lq2(lq2)))
        roots = cl.linearized_roots(d)
        assert all(z.real < 0 for z in roots)
        s = d.lambda_q2 * math.sqrt(2.0 / (d.kappa + 1.0))
        coeffs = [1.0, 3 * d.omega_q * s, 4 * d.omega_q ** 2 * (2 * d.kappa - 1),
                  4 * d.omega_q ** 3 * d.kappa * s]
        ref = np.roots(coeffs)
        scale = np.max(np.abs(ref))
        for z in roots:
            assert np.min(np.abs(ref - z)) < 1e-9 * scale


# ---------------------------------------------------------------------------
# Effective decay rate
# ---------------------------------------------------------------------------

def test_effective_decay_rate_on_synthetic_signal(d100):
    lam = 0.01
    dt = TWO_PI / (1600.0 * d100.omega_q)
    t = dt * np.arange(int(400.0 / dt))
    h1eq = 1.0
    h1 = h1eq + 0.5 * np.exp(-lam * t) * np.cos(2.0 * d100.omega_q * t)
    traj = cl.MomentTrajectory(t, h1, np.zeros_like(t), 2.0 / h1, d100)
    rates = cl.effective_decay_rate(traj, h1_eq=h1eq)
    vals = np.array([v for _, v in rates])
    assert np.max(np.abs(vals - lam)) < 1e-6


def test_effective_decay_rate_approaches_linearized_prediction(init45):
    d = cl.derive(cl.table_defaults(power=3.5e-5))
    lam1 = abs(cl.linearized_roots(d)[0].real)
    traj = cl.integrate_moments(init45, d, 12.0 / lam1,
                                dt=TWO_PI / (400.0 * d.omega_q))
    rates = cl.effective_decay_rate(traj)
    vals = np.array([v for _, v in rates])
    # far from equilibrium the per-period rate is higher, then it decays
    # onto the slow-root prediction
    assert vals[0] > vals[-1]
    late = np.mean(vals[-5:])
    assert abs(late - lam1) < 0.1 * lam1


def test_effective_decay_rate_needs_peaks(d100):
    t = np.linspace(0.0, 10.0, 100)
    flat = cl.MomentTrajectory(t, np.ones_like(t), np.zeros_like(t),
                               np.ones_like(t), d100)
    with pytest.warns(UserWarning):
        assert cl.effective_decay_rate(flat, h1_eq=1.0) == []


# ---------------------------------------------------------------------------
# Ellipse representation
# ---------------------------------------------------------------------------

def test_ellipse_map_ground_state():
    assert cl.ellipse_map(cl.EllipseParams(0.0, 0.3, 1.0)) == (1.0, 0.0, 1.0)


def test_ellipse_benchmark_state_squeezing_level(init45):
    assert abs(cl.sqz_db(init45.h1, init45.h2, init45.h3) - 4.5) < 1e-9
    e = cl.ellipse_inverse(init45.h1, init45.h2, init45.h3)
    assert abs(e.beta - 2.8e3) < 1e-6 * 2.8e3


def test_ellipse_round_trip_property():
    rng = np.random.default_rng(11)
    for _ in range(200):
        r = rng.uniform(0.0, 3.0)
        theta = rng.uniform(0.0, math.pi)
        beta = rng.uniform(1.0, 1e4)
        h1, h2, h3 = cl.ellipse_map(cl.EllipseParams(r, theta, beta))
        e = cl.ellipse_inverse(h1, h2, h3)
        # recovering r back through the large h values loses ~cosh(2r) ulps
        assert abs(e.r - r) < 1e-10 * (1.0 + r)
        assert abs(e.beta - beta) < 1e-10 * beta
        dtheta = min((e.theta - theta) % math.pi, (theta - e.theta) % math.pi)
        if r > 1e-6:
            assert dtheta < 1e-9
        assert abs(h1 * h3 - h2 ** 2 - beta ** 2) < 1e-9 * beta ** 2


def test_ellipse_inverse_rejects_unphysical():
    with pytest.raises(ValueError):
        cl.ellipse_inverse(1.0, 0.8, 1.0)


def test_ellipse_and_direct_integration_agree(d100, init45):
    e0 = cl.ellipse_inverse(init45.h1, init45.h2, init45.h3)
    dt = TWO_PI / (2000.0 * d100.omega_q)
    traj = cl.integrate_moments(init45, d100, 40.0, dt=dt)
    t, r, th, be = cl.integrate_ellipse(e0, d100, 40.0, dt=dt)
    h1e = be * (np.cosh(2 * r) - np.cos(2 * th) * np.sinh(2 * r))
    h2e = be * np.sin(2 * th) * np.sinh(2 * r)
    h3e = be * (np.cosh(2 * r) + np.cos(2 * th) * np.sinh(2 * r))
    m = min(len(t), len(traj.t))
    for a, b in ((traj.h1, h1e), (traj.h2, h2e), (traj.h3, h3e)):
        assert np.max(np.abs(a[:m] - b[:m])) < 1e-6 * np.max(np.abs(a[:m]))


def test_free_rotation_without_measurement():
    d = cl.derive(cl.table_defaults(power=0.0))
    e0 = cl.EllipseParams(r=0.7, theta=0.4, beta=50.0)
    t, r, th, be = cl.integrate_ellipse(e0, d, 30.0)
    assert np.max(np.abs(r - e0.r)) < 1e-12
    assert np.max(np.abs(be - e0.beta)) < 1e-9
    assert np.max(np.abs(th - (e0.theta + d.omega_q * t))) < 1e-9


def test_case2_envelope_bounds_numerics(d100, init45):
    traj = cl.integrate_moments(init45, d100, 40.0, dt=0.01)
    e0 = cl.ellipse_inverse(init45.h1, init45.h2, init45.h3)
    sol = cl.analytic_case2(e0, d100, traj.t)
    h = traj.h1
    peaks = [i for i in range(1, len(h) - 1)
             if h[i] >= h[i - 1] and h[i] > h[i + 1]]
    ratios = h[peaks] / sol["h1_max"][peaks]
    assert np.all(ratios < 1.02)
    assert ratios.max() > 0.98  # crests actually touch the envelope
    # pointwise closed form tracks the integrated evolution to first order
    assert np.max(np.abs(sol["h1"] - h)) < 0.04 * np.max(h)


def test_case2_rejects_fast_measurement(init45):
    d = cl.derive(cl.table_defaults(power=1e-2))
    e0 = cl.ellipse_inverse(init45.h1, init45.h2, init45.h3)
    with pytest.raises(ValueError, match="ratio"):
        cl.analytic_case2(e0, d, np.linspace(0.0, 40.0, 200))


def test_sqz_db_values_and_rotation_invariance():
    assert cl.sqz_db(1.0, 0.0, 1.0) == 0.0
    r = 0.518
    beta = 2.0
    expected = 20.0 * r * math.log10(math.e)
    assert abs(cl.sqz_db(math.exp(-2 * r) * beta, 0.0, math.exp(2 * r) * beta)
               - expected) < 1e-9
    assert abs(expected - 4.5) < 2e-3
    vals = [cl.sqz_db(*cl.ellipse_map(cl.EllipseParams(r, th, beta)))
            for th in np.linspace(0, math.pi, 9)]
    assert np.ptp(vals) < 1e-10


# ---------------------------------------------------------------------------
# Stationary spectra
# ---------------------------------------------------------------------------

def test_log_ratio_vanishes_without_self_gravity():
    for presc in ("classical", "quantum"):
        d = cl.derive(cl.table_defaults(omega_sn=0.0, prescription=presc))
        assert abs(cl.log_ratio(d)) < 1e-12


def test_log_ratio_classical_temperature_trend():
    vals = [cl.log_ratio(cl.derive(cl.table_defaults(temperature=t)))
            for t in (1e-6, 1e-4, 1e-2, 1.0)]
    assert all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))
    assert all(v > 0 for v in vals)


def test_quantum_log_ratio_maximum(d100):
    from ccsnlab.constants import HBAR, KB
    val, lam_opt = cl.quantum_log_ratio_max(d100)
    assert abs(val - 26.23) < 0.05
    p = d100.params
    assert abs(lam_opt - math.sqrt(HBAR * p.omega_m / (2.0 * KB * p.temperature))) \
        < 1e-15


def test_stationary_psd_shot_floor(d100):
    far = cl.stationary_psd(d100, 50.0 * d100.omega_m)
    assert 1.0 < far < 1.5


# ---------------------------------------------------------------------------
# Damped-peak predicate
# ---------------------------------------------------------------------------

def test_peak_predicate_boundary():
    exists, _ = cl.peak_exists(1.0, 1.0)
    assert not exists


def test_peak_predicate_weak_damping():
    exists, loc = cl.peak_exists(0.1, 1.0)
    assert exists
    assert abs(loc - math.sqrt(0.99)) < 1e-12
