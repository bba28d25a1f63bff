import numpy as np
import pytest

from corrmac.bound import (
    iterative_waterfilling, mac_sum_rate, sdr_bound_curve, separation_bound, sum_rate_distortion,
    waterfill,
)
from corrmac.errors import UnsupportedConfiguration
from corrmac.model import ChannelRealization, RngStream, Scenario, sample_channel, uniform_covariance


def test_waterfilling_trivial_cases():
    cap = iterative_waterfilling(ChannelRealization([np.ones((1, 1))]), [1.0])
    assert np.isclose(cap.sum_rate, 1.0)
    assert np.allclose(cap.Q[0], 1.0)
    cap = iterative_waterfilling(ChannelRealization.from_columns([1, 0], [0, 1]), [1.0, 1.0])
    assert np.isclose(cap.sum_rate, 2.0)


def test_waterfill_levels():
    p = waterfill([1.0, 0.5, 0.01], 2.0)
    assert np.isclose(p.sum(), 2.0)
    assert p[2] == 0 and p[0] > p[1] > 0
    assert np.isclose(p[0] + 1 / 1.0, p[1] + 1 / 0.5)


def test_waterfilling_properties(rng):
    for _ in range(30):
        K, Nt, Nr = rng.integers(1, 5, size=3)
        scn = Scenario.from_snr_db(int(K), int(Nt), int(Nr), 0.0, rng.uniform(-10, 30, size=int(K)))
        ch = sample_channel(scn, RngStream(int(rng.integers(1 << 30))))
        cap = iterative_waterfilling(ch, scn.T)
        assert np.all(np.diff(cap.history) >= -1e-12)
        iso = [np.eye(ch.Nt) * t / ch.Nt for t in scn.T]
        assert cap.sum_rate >= mac_sum_rate(ch, iso, 1.0) - 1e-9
        for Q, t in zip(cap.Q, scn.T):
            assert np.allclose(Q, Q.conj().T)
            assert np.linalg.eigvalsh(Q).min() >= -1e-9
            assert abs(np.trace(Q).real - t) <= 1e-7 * max(1.0, t)


def test_sum_rate_distortion_closed_forms():
    for K in (1, 2, 5):
        for D in (0.1, 0.5, 1.0):
            assert np.isclose(sum_rate_distortion(np.eye(K), D), K * np.log2(1 / D), atol=1e-12)
    assert np.isclose(sum_rate_distortion(uniform_covariance(2, 0.0), [0.5, 0.5]), 2.0)


def test_sum_rate_distortion_grid_oracle():
    C = uniform_covariance(2, 0.95).Cs
    Ci = np.linalg.inv(C)
    def scan(D, lo1, hi1, lo2, hi2, n=801):
        b1, b2 = np.meshgrid(np.linspace(lo1, hi1, n), np.linspace(lo2, hi2, n))
        inv_det = (Ci[0, 0].real + b1) * (Ci[1, 1].real + b2) - abs(Ci[0, 1]) ** 2
        ok = ((Ci[1, 1].real + b2) / inv_det <= D) & ((Ci[0, 0].real + b1) / inv_det <= D)
        rate = np.where(ok, np.log2(np.linalg.det(C).real * inv_det), np.inf)
        i = np.unravel_index(np.argmin(rate), rate.shape)
        return rate[i], b1[i], b2[i]

    for D in (0.05, 0.3, 0.7):
        got = sum_rate_distortion(C, D)
        best, c1, c2 = scan(D, 0, 3 / D, 0, 3 / D)
        w = 3 / D / 800 * 20
        for _ in range(4):  # zoom in on the grid minimiser
            r, c1, c2 = scan(D, max(0, c1 - w), c1 + w, max(0, c2 - w), c2 + w)
            best = min(best, r)
            w /= 10
        assert best >= got - 1e-9
        assert best <= got + 1e-3


def test_sum_rate_distortion_monotone_and_asymmetric():
    C = uniform_covariance(3, 0.8)
    base = sum_rate_distortion(C, [0.2, 0.3, 0.4])
    for i in range(3):
        d = np.array([0.2, 0.3, 0.4])
        d[i] *= 1.1
        assert sum_rate_distortion(C, d) <= base + 1e-12
    sym = sum_rate_distortion(C, 0.3)
    assert np.isclose(sum_rate_distortion(C, [0.3, 0.3, 0.3 + 1e-12]), sym, atol=1e-6)


def test_singular_source_unsupported():
    with pytest.raises(UnsupportedConfiguration):
        sum_rate_distortion(uniform_covariance(2, 1.0), 0.5)


def test_independent_sources_exact(rng):
    for _ in range(20):
        K = int(rng.integers(1, 6))
        scn = Scenario.from_snr_db(K, 1, int(rng.integers(1, 4)), 0.0, rng.uniform(-10, 30))
        ch = sample_channel(scn, RngStream(int(rng.integers(1 << 30))))
        R = iterative_waterfilling(ch, scn.T).sum_rate
        res = separation_bound(ch, np.eye(K), scn.T)
        assert abs(res.D_sum - K * 2 ** (-R / K)) <= 1e-9
        assert res.meta["residual"] <= 1e-7


def test_bound_limits_and_monotone():
    scn = Scenario.from_snr_db(4, 1, 2, 0.9, 0.0)
    ch = sample_channel(scn, RngStream(3))
    C = scn.source.Cs
    low = separation_bound(ch, C, np.full(4, 1e-12))
    assert abs(low.D_sum - 4) < 1e-6
    prev = np.inf
    for snr in range(-20, 31):
        res = separation_bound(ch, C, np.full(4, 10 ** (snr / 10)))
        assert res.D_sum < prev
        assert res.D_sum <= 4
        assert res.meta["residual"] <= 1e-7
        prev = res.D_sum


def test_bound_curve_scalar_oracle():
    scn = Scenario(1, 1, 1, 0.0, 10.0)
    rows = sdr_bound_curve(scn, [10.0], 500, seed=4)
    gains = [abs(sample_channel(scn, RngStream(4, l)).H[0, 0]) ** 2 for l in range(500)]
    D = 2 ** (-np.log2(1 + 10 * np.array(gains)))
    assert np.isclose(rows[0]["sdr_opt_db"], 10 * np.log10(np.mean(1 / D)), rtol=1e-9)


def test_bound_curve_reproducible():
    scn = Scenario(3, 1, 2, 0.6, 1.0)
    assert sdr_bound_curve(scn, [0, 10], 20, seed=9) == sdr_bound_curve(scn, [0, 10], 20, seed=9)
    rows = sdr_bound_curve(scn, [0.0], 20, seed=9)
    assert np.isclose(rows[0]["sdr_opt_db"] - rows[0]["sdr_opt_unnormalized_db"], 10 * np.log10(3))
