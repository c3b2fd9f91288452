import math

import numpy as np
import pytest

from bjsd import ClosedLoopSpec, Dataset, InputSpec, sec51_model, sec52_model
from bjsd.exceptions import UnstableFilterError
from bjsd.poly import Polynomial as P
from bjsd.poly import RationalFilter as RF
from bjsd.signals import (
    apply_filter,
    gen_closed_loop,
    gen_open_loop,
    lowpass_input,
    make_rng,
    sample_random_bj,
    scale_noise_for_snr,
    simulate_bj,
    simulate_closed_loop,
)

ONE = P([1.0])


def impulse(n):
    x = np.zeros(n)
    x[0] = 1.0
    return x


def test_identity_filter(rng):
    x = rng.standard_normal(20)
    np.testing.assert_array_equal(apply_filter(RF(ONE, ONE), x), x)


def test_double_pole_impulse_response():
    t = np.arange(1, 41)
    den = P([1, -0.85]) * P([1, -0.85])
    np.testing.assert_allclose(apply_filter(RF(ONE, den), impulse(40)), t * 0.85 ** (t - 1), rtol=1e-12)


def test_pole_zero_cancellation(rng):
    x = rng.standard_normal(50)
    np.testing.assert_allclose(apply_filter(RF(P([1, -0.9]), P([1, -0.9])), x), x, atol=1e-14)


def test_unstable_filter_rejected():
    with pytest.raises(UnstableFilterError):
        apply_filter(RF(ONE, P([1, -1.1])), np.ones(5))
    out = apply_filter(RF(ONE, P([1, -1.1])), np.ones(5), allow_unstable=True)
    assert out[-1] > 5


def test_sec51_impulse_response():
    y = simulate_bj(sec51_model(), impulse(5), np.zeros(5))
    np.testing.assert_allclose(y[1:5], [1, 0.6, -0.45, -0.675], atol=1e-14)
    assert y[0] == 0.0


def test_delayed_impulse():
    from bjsd import BjModel

    m = BjModel(P([0, 1.0]), ONE, ONE, ONE)
    np.testing.assert_array_equal(simulate_bj(m, impulse(4), np.zeros(4)), [0, 1, 0, 0])


def test_noise_only_and_linearity(rng):
    m = sec52_model()
    u, e = rng.standard_normal(300), rng.standard_normal(300)
    np.testing.assert_allclose(simulate_bj(m, np.zeros(300), e), apply_filter(RF(m.C, m.D), e))
    np.testing.assert_allclose(simulate_bj(m, u, e), simulate_bj(m, u, 0 * e) + simulate_bj(m, 0 * u, e), atol=1e-12)


def test_cascade_equals_product_and_inverse(rng):
    x = rng.standard_normal(500)
    a, b = P([1, 0.3, -0.2]), P([1, -0.5, 0.75])
    c, d = P([0.5, 1]), P([1, 0.7])
    cascade = apply_filter(RF(a, b), apply_filter(RF(c, d), x))
    prod = apply_filter(RF(a * c, b * d), x)
    assert np.max(np.abs(cascade - prod)) <= 1e-10 * np.max(np.abs(prod))
    m = sec51_model()
    back = apply_filter(RF(m.D, m.C), apply_filter(RF(m.C, m.D), x))
    np.testing.assert_allclose(back, x, atol=1e-10)


def test_white_input_is_raw_draw():
    d = gen_open_loop(sec51_model(), InputSpec("white"), 4, seed=5)
    np.testing.assert_array_equal(d.u, make_rng(5, 0).standard_normal(4))


def test_sensitivity_input():
    m = sec51_model()
    d = gen_open_loop(m, InputSpec("sensitivity"), 200, seed=2)
    np.testing.assert_array_equal((m.F + m.B).coeffs, [1, 0.5, 0.85])
    np.testing.assert_allclose(d.u, apply_filter(RF(m.F, P([1, 0.5, 0.85])), d.r))


def test_lowpass_input():
    d = gen_open_loop(sec52_model(), lowpass_input(0.85), 200, seed=2)
    np.testing.assert_allclose(d.u, apply_filter(RF(ONE, P([1, -1.7, 0.7225])), d.r), atol=1e-12)


def test_open_loop_deterministic():
    a = gen_open_loop(sec52_model(), lowpass_input(0.85), 500, seed=9, snr=3.0)
    b = gen_open_loop(sec52_model(), lowpass_input(0.85), 500, seed=9, snr=3.0)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.truth.sigma2 == b.truth.sigma2


def test_snr_fixed_point(rng):
    m = sec52_model()
    u, e = rng.standard_normal(400), rng.standard_normal(400)
    x = apply_filter(RF(m.B, m.F), u)
    assert scale_noise_for_snr(m, u, e, float(x @ x) / float(e @ e)) == pytest.approx(1.0)


@pytest.mark.parametrize("mode, target", [("raw_noise", 3.0), ("filtered_noise", 5.0)])
def test_snr_is_met(mode, target):
    m = sec52_model()
    d = gen_open_loop(m, lowpass_input(0.85), 2000, seed=4, snr=target, snr_mode=mode)
    x = apply_filter(RF(m.B, m.F), d.u)
    noise = d.e if mode == "raw_noise" else apply_filter(RF(m.C, m.D), d.e)
    assert float(x @ x) / float(noise @ noise) == pytest.approx(target, rel=1e-10)


def test_closed_loop_hand_recursion():
    K = RF(ONE, ONE)
    u, y = simulate_closed_loop(sec51_model(), K, impulse(3), np.zeros(3))
    assert (u[0], y[0], y[1], u[1]) == (1.0, 0.0, 1.0, -1.0)


def test_zero_controller_is_open_loop():
    m = sec51_model()
    K = RF(P([0.0]), ONE)
    d = gen_closed_loop(m, K, 1.0, 300, seed=3)
    np.testing.assert_array_equal(d.u, d.r)
    np.testing.assert_allclose(d.y, simulate_bj(m, d.u, d.e), atol=1e-12)


def test_closed_loop_matches_filters():
    m = sec51_model()
    d = gen_closed_loop(m, RF(ONE, ONE), 1.0, 400, seed=8)
    np.testing.assert_allclose(d.y, simulate_bj(m, d.u, d.e), atol=1e-10)
    np.testing.assert_allclose(d.u, d.r - d.y, atol=1e-12)


def test_closed_loop_instability_rejected():
    with pytest.raises(UnstableFilterError):
        gen_closed_loop(sec51_model(), RF(P([-1.5]), ONE), 1.0, 10, seed=0)


def test_random_models():
    a, b = sample_random_bj(seed=17), sample_random_bj(seed=17)
    assert a == b
    for s in range(500):
        m = sample_random_bj(seed=s)
        m.validate()
        assert m.rho <= 0.95 + 1e-9


def test_dataset_csv_roundtrip(tmp_path):
    d = gen_open_loop(sec51_model(), InputSpec("white"), 50, seed=1)
    d.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.u, d.u)
    np.testing.assert_array_equal(back.y, d.y)
    assert back.truth == d.truth


def test_prefix():
    d = gen_open_loop(sec51_model(), InputSpec("white"), 50, seed=1)
    p = d.prefix(20)
    np.testing.assert_array_equal(p.y, d.y[:20])
    with pytest.raises(ValueError):
        d.prefix(51)


def test_closed_loop_spec_roundtrip():
    s = ClosedLoopSpec(RF(ONE, ONE), 2.0)
    assert ClosedLoopSpec.from_dict(s.to_dict()) == s
    i = lowpass_input(0.8)
    assert InputSpec.from_dict(i.to_dict()) == i
    assert math.isclose(i.filter.den.coeffs[2], 0.64)
