import numpy as np
import pytest

from bjsd import BjModel, InputSpec, gen_open_loop, sec51_model, sec52_model
from bjsd.arx import arx_expansion
from bjsd.poly import Polynomial as P
from bjsd.poly import RationalFilter as RF
from bjsd.poly import is_stable
from bjsd.sd import FilteredSignals, sd_estimate, stage2_oe_dynamics, stage3_oe_noise
from bjsd.signals import apply_filter, lowpass_input


def test_stage2_exact_signals(rng):
    m = sec51_model()
    u = rng.standard_normal(3000)
    y = apply_filter(RF(m.B, m.F), u)
    # V = 1 and W = a long expansion of B/F
    _, w = arx_expansion(BjModel(m.B, P([1.0]), P([1.0]), m.F), 400)
    y_of = apply_filter(RF(P(np.r_[0.0, w]), P([1.0])), u)
    f, b, rss = stage2_oe_dynamics(FilteredSignals(u, y_of, y), 2, 2)
    np.testing.assert_allclose(f, [-0.5, 0.75], atol=1e-6)
    np.testing.assert_allclose(b, [1.0, 0.1], atol=1e-6)


def test_stage2_hand_normal_equations():
    u = np.array([1.0, 2.0, -1.0])
    y_of = np.array([0.5, -1.0, 3.0])
    y = np.array([0.2, 0.9, -0.4])
    f, b, _ = stage2_oe_dynamics(FilteredSignals(u, y_of, y), 1, 1)
    Phi = np.array([[0, 0], [-0.5, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(np.r_[f, b], np.linalg.solve(Phi.T @ Phi, Phi.T @ y))


def test_stage2_consistent_system_has_zero_residual(rng):
    u = rng.standard_normal(200)
    y = apply_filter(RF(P([0, 0.7]), P([1, -0.4])), u)
    f, b, rss = stage2_oe_dynamics(FilteredSignals(u, y, y), 1, 1)
    assert rss == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(np.r_[f, b], [-0.4, 0.7], atol=1e-12)


def test_stage3_exact_signals():
    m = sec51_model()
    rng = np.random.default_rng(3)
    n = 20000
    u, e = rng.standard_normal(n), rng.standard_normal(n)
    x = apply_filter(RF(m.B, m.F), u)
    y = x + apply_filter(RF(m.C, m.D), e)
    sig = FilteredSignals(
        apply_filter(RF(m.D, m.C), u),
        apply_filter(RF(m.B * m.D, m.F * m.C), u),
        apply_filter(RF(m.D, m.C), y),
        x,
    )
    c, d, _ = stage3_oe_noise(sig, 1, 1)
    assert c[0] == pytest.approx(0.7, abs=0.05)
    assert d[0] == pytest.approx(-0.9, abs=0.05)


def test_stage_order_preconditions(rng):
    sig = FilteredSignals(*(rng.standard_normal(50) for _ in range(3)))
    with pytest.raises(ValueError):
        stage3_oe_noise(sig, 1, 1)  # u_BF missing
    sig = FilteredSignals(*(rng.standard_normal(50) for _ in range(4)))
    with pytest.raises(ValueError):
        stage3_oe_noise(sig, 0, 1)
    with pytest.raises(ValueError):
        stage2_oe_dynamics(sig, 1, 0)


def test_sd_estimate_structure(open_loop_data):
    d = open_loop_data
    est = sd_estimate(d.u, d.y, (2, 1, 1, 2), 50)
    th = est.theta
    assert th.orders == (2, 1, 1, 2)
    model = th.to_model()
    np.testing.assert_array_equal(model.B.coeffs, np.r_[0.0, th.b])
    np.testing.assert_array_equal(model.F.coeffs, np.r_[1.0, th.f])
    assert est.stable_dynamics == is_stable(P(np.r_[1.0, th.f]))
    assert est.stable_noise_model == is_stable(P(np.r_[1.0, th.c]))
    assert est.arx.m == 50
    np.testing.assert_allclose(th.flat, sec51_model().theta.flat, atol=0.2)
    assert set(est.to_dict()) >= {"theta", "stage2_residual_ss", "stage3_residual_ss"}


def test_sd_auto_order_uses_aic():
    d = gen_open_loop(sec52_model(), lowpass_input(0.85), 5000, seed=0, snr=3.0)
    est = sd_estimate(d.u, d.y, (4, 2, 2, 4), "auto")
    assert est.arx.m in range(10, 151, 10)


def test_dynamics_stage_ignores_noise_orders(open_loop_data):
    d = open_loop_data
    a = sd_estimate(d.u, d.y, (2, 1, 1, 2), 30)
    b = sd_estimate(d.u, d.y, (2, 3, 2, 2), 30)
    np.testing.assert_array_equal(a.theta.b, b.theta.b)
    np.testing.assert_array_equal(a.theta.f, b.theta.f)


def test_consistency_trend():
    m = sec51_model()
    err = {600: [], 6000: []}
    for seed in range(100):
        full = gen_open_loop(m, InputSpec("sensitivity"), 6000, seed=seed)
        for n in err:
            d = full.prefix(n)
            err[n].append(np.linalg.norm(sd_estimate(d.u, d.y, m.orders, 50).theta.flat - m.theta.flat))
    assert np.median(err[6000]) < np.median(err[600])
