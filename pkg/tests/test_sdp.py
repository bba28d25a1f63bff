import numpy as np
import pytest

from corrmac.errors import NumericalFailure, UnsupportedConfiguration
from corrmac.model import RngStream, Scenario, sample_channel, sum_mse, uniform_covariance
from corrmac.precoders import amrt, full_power, projected_gradient
from corrmac.sdp import (
    RANK1_TOL, SdpSolution, build_problem, extract_rank1, homogenized_objective, siso_precoder,
    solve_sdp,
)
from corrmac.two_user import two_user_optimal
from conftest import crandn


def _case(rng, K, rho=None, snr=None):
    rho = float(rng.uniform(0, 0.99)) if rho is None else rho
    snr = rng.uniform(-10, 30, size=K) if snr is None else snr
    scn = Scenario.from_snr_db(K, 1, 1, rho, snr)
    return scn, sample_channel(scn, RngStream(int(rng.integers(1 << 30))))


def _xi_of(pre, scn, ch):
    return sum_mse(ch.H, pre.P, scn.source.Cs, scn.noise_var)


def test_build_problem_scalar():
    prob = build_problem(np.ones((1, 1)), np.eye(1), [1.0], 1.0)
    assert np.allclose(prob.A, np.diag([1, 0]))
    assert np.allclose(prob.B, np.diag([1, 1]))
    assert np.allclose(prob.D[0], np.diag([1, -1]))


def test_build_problem_hermitian(rng):
    for K in range(1, 6):
        scn, ch = _case(rng, K)
        prob = build_problem(ch, scn.source, scn.T)
        for M in (prob.A, prob.B, *prob.D):
            assert np.allclose(M, M.conj().T)


def test_build_problem_rejects_multi_antenna(rng):
    ch = sample_channel(Scenario(2, 2, 1, 0.5, 1.0), RngStream(1))
    with pytest.raises(UnsupportedConfiguration):
        build_problem(ch, uniform_covariance(2, 0.5), [1, 1])
    ch = sample_channel(Scenario(2, 1, 2, 0.5, 1.0), RngStream(1))
    with pytest.raises(UnsupportedConfiguration):
        build_problem(ch, uniform_covariance(2, 0.5), [1, 1])


def test_quotient_identity(rng):
    # the lifted vector stacks conj(p): K - z^H A z / z^H B z is the sum-MSE
    for K in range(1, 6):
        scn, ch = _case(rng, K)
        p = crandn(rng, K) * np.sqrt(scn.T)
        prob = build_problem(ch, scn.source, scn.T)
        z = np.concatenate([np.conj(p), [1.0]])
        xi = sum_mse(ch.H, np.diag(p), scn.source.Cs, 1.0)
        assert np.isclose(K - homogenized_objective(prob, z), xi, rtol=1e-10)
        assert np.isclose(homogenized_objective(prob, 3.7j * z), homogenized_objective(prob, z))


def test_single_user_full_power(rng):
    for _ in range(10):
        scn, ch = _case(rng, 1)
        pre = siso_precoder(ch, scn.source, scn.T)
        assert abs(pre.powers[0] - scn.T[0]) <= 1e-6 * max(1.0, scn.T[0])


def test_two_user_matches_closed_form(rng):
    for _ in range(20):
        scn, ch = _case(rng, 2)
        pre = siso_precoder(ch, scn.source, scn.T)
        sol = two_user_optimal(ch.blocks[0], ch.blocks[1], scn.T[0], scn.T[1], scn.rho)
        assert abs(_xi_of(pre, scn, ch) - sol.xi) <= 1e-6


def test_feasibility_certificates(rng):
    for _ in range(30):
        K = int(rng.integers(1, 7))
        scn, ch = _case(rng, K)
        sol = solve_sdp(build_problem(ch, scn.source, scn.T))
        assert abs(sol.meta["trace_B"] - 1) <= 1e-7
        assert max(sol.meta["trace_D"]) <= 1e-7
        assert sol.meta["min_eig"] >= -1e-8
        assert sol.duality_gap <= 1e-6 * max(1.0, abs(sol.objective))
        assert sol.meta["primal_objective"] <= sol.meta["dual_objective"] + 1e-6


def test_relaxation_dominates_feasible_points(rng):
    for _ in range(20):
        K = int(rng.integers(2, 7))
        scn, ch = _case(rng, K)
        prob = build_problem(ch, scn.source, scn.T)
        sol = solve_sdp(prob)
        for pre in (full_power(scn, ch), amrt(scn, ch), projected_gradient(scn, ch)):
            z = np.concatenate([np.conj(pre.vectors[:, 0]), [1.0]])
            assert sol.objective >= homogenized_objective(prob, z) - 1e-7


def test_rank1_on_random_instances(rng):
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 7))
        scn, ch = _case(rng, K)
        sol = solve_sdp(build_problem(ch, scn.source, scn.T))
        p = extract_rank1(sol, scn.T)
        worst = max(worst, sol.meta["rank_ratio"])
        assert sol.meta["rank1"]
        assert np.all(np.abs(p) ** 2 <= scn.T + 1e-7)
    assert worst <= RANK1_TOL


def test_extract_planted_rank1(rng):
    for K in range(1, 6):
        q = crandn(rng, K)
        t = 0.7
        z = np.concatenate([q, [t]])
        sol = SdpSolution(np.outer(z, z.conj()), 0.0, 0.0, 0)
        p = extract_rank1(sol, np.full(K, 1e6))
        ref = q / t
        ref = ref * abs(ref[0]) / ref[0]
        assert np.allclose(p, ref, atol=1e-9)
        assert sol.meta["rank1"]


def test_extract_degenerate():
    sol = SdpSolution(np.diag([1.0, 0.0]), 0.0, 0.0, 0)
    with pytest.raises(NumericalFailure):
        extract_rank1(sol, [1.0])


def test_uncorrelated_full_power(rng):
    for _ in range(5):
        scn, ch = _case(rng, 4, rho=0.0)
        assert np.allclose(siso_precoder(ch, scn.source, scn.T).powers, scn.T, rtol=1e-6)


def test_power_allocation_pattern():
    # weakest user always at full power; strong users back off at intermediate correlation
    T = 10 ** (np.array([35, 25, 15, 5]) / 10)
    backed_off = False
    for rho in (0.3, 0.5, 0.7, 0.9):
        scn = Scenario(4, 1, 1, rho, tuple(T))
        Pw = np.zeros(4)
        for l in range(20):
            ch = sample_channel(scn, RngStream(11, l))
            Pw += siso_precoder(ch, scn.source, scn.T).powers / 20
        assert Pw[3] >= T[3] * (1 - 1e-6)
        backed_off |= Pw[0] < 0.95 * T[0]
    assert backed_off


def test_siso_precoder_meta(rng):
    scn, ch = _case(rng, 3)
    pre = siso_precoder(ch, scn.source, scn.T)
    assert pre.meta["design"] == "sdp"
    assert np.isclose(pre.meta["xi"], _xi_of(pre, scn, ch), rtol=1e-6)
    pre.check_feasible(scn, tol=1e-7)
