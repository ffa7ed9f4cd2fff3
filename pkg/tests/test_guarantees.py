from __future__ import annotations

import json
import math

import numpy as np
import pytest

from fbai import guarantees as gt
from fbai.core import as_sorted, kl_bernoulli, log_bar

EX1 = (0.9, 0.1, 0.1)
EX2 = (0.95, 0.85, 0.2) + (0.0,) * 47


def _random_instances(n, seed, k_max=8, low=0.0, high=1.0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        means = rng.uniform(low, high, int(rng.integers(2, k_max + 1)))
        if np.count_nonzero(means == means.max()) == 1:
            out.append(as_sorted(means.tolist()))
    return out


def _alpha2_closed_form(c2, slope, b2):
    """Root of (c2 s - b2)^2 = slope (1 - s^2) in s = sqrt(alpha); valid when the hinge is active."""
    A, B, C = c2 * c2 + slope, -2 * c2 * b2, b2 * b2 - slope
    s = (-B + math.sqrt(B * B - 4 * A * C)) / (2 * A)
    return s * s


def _kl_pool_oracle(top, others, n=200_001):
    # for lambda_1 = x the best lambda_k is max(mu_k, x); scan x on a dense grid
    x = np.linspace(1e-9, 1 - 1e-9, n)

    def d(a, b):
        return a * np.log(a / b) + (1 - a) * np.log((1 - a) / (1 - b))

    total = d(x, top)
    for m in others:
        lam = np.maximum(x, m)
        total = total + d(lam, m)
    return float(total.min())


# -- frozen values from the independent oracles ---------------------------------

def test_xi_example1():
    assert gt.xi_j(EX1, 2) == pytest.approx(0.32, abs=1e-12)
    assert gt.xi_j(EX1, 3) == pytest.approx(0.426667, abs=1e-6)
    assert gt.xi_oracle(EX1, 2) == pytest.approx(0.32, abs=1e-9)
    assert gt.xi_oracle(EX1, 3) == pytest.approx(32 / 75, abs=1e-9)


def test_xi_oracle_examples():
    assert gt.xi_oracle([1.0, 0.0], 2) == pytest.approx(0.5, abs=1e-12)
    assert gt.xi_oracle(EX2, 2, [1, 3]) == pytest.approx(0.28125, abs=1e-12)
    assert gt.xi_bar_j(EX2, 2) == pytest.approx(0.28125, abs=1e-12)


def test_xi_bar_uses_virtual_zero_arm():
    s = as_sorted(EX1)
    expected = gt.xi_oracle(s, 3, [2, 4])
    assert gt.xi_bar_j(s, 3) == pytest.approx(expected, abs=1e-9)
    assert gt.xi_bar_j(s, 3) >= gt.xi_j(s, 3)
    # K = 2: arm 2 is swapped for the zero arm
    assert gt.xi_bar_j([0.6, 0.4], 2) == pytest.approx(0.18, abs=1e-12)


def test_psi_terms_example2():
    terms = gt.psi_phi_zeta(EX2, 2)
    assert terms.psi == pytest.approx(0.005, abs=1e-15)
    assert terms.psi_bar == pytest.approx(0.28125, abs=1e-15)
    assert terms.zeta == pytest.approx(0.65, abs=1e-15)
    assert terms.phi == pytest.approx(0.7, abs=1e-15)


def test_psi_terms_two_arms():
    terms = gt.psi_phi_zeta([1.0, 0.0], 2)
    assert terms.zeta == 0.0
    assert terms.phi == 0.5


def test_psi_equals_xi_for_two_point_pool():
    for s in _random_instances(50, 1):
        assert gt.psi_phi_zeta(s, 2).psi == pytest.approx(gt.xi_j(s, 2), abs=1e-14)


def test_psi_with_flat_suboptimal_arms():
    s = as_sorted([0.8] + [0.3] * 6)
    for j in range(2, 8):
        assert gt.psi_phi_zeta(s, j).psi == pytest.approx((j - 1) / j * 0.25, abs=1e-14)


@pytest.mark.parametrize(
    "coeffs, expected, tol",
    [
        ((1.0, 1.0, 0.0, 1.0), 0.5, 1e-15),
        ((0.005, 0.005, 0.5, 1.65), 0.117842, 1e-5),
        ((1.0, 1.0, 5.0, 1.0), 1.0, 0.0),
    ],
)
def test_solve_crossing_examples(coeffs, expected, tol):
    assert gt.solve_crossing(*coeffs) == pytest.approx(expected, abs=tol)


def test_solve_crossing_rejects_bad_coefficients():
    with pytest.raises(ValueError):
        gt.solve_crossing(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        gt.solve_crossing(1.0, 1.0, -0.1, 1.0)


def test_solve_crossing_residual_and_grid_oracle():
    rng = np.random.default_rng(2)
    for _ in range(300):
        b1, c1 = rng.uniform(1e-4, 2.0, 2)
        b2, c2 = rng.uniform(0, 2.0), rng.uniform(1e-3, 3.0)
        x = gt.solve_crossing(b1, c1, b2, c2)
        hinge = max(c2 * math.sqrt(x) - b2, 0.0)
        assert abs(c1 - b1 * x - hinge * hinge) <= 1e-12 * max(1.0, c1)
        assert x == pytest.approx(gt.crossing_oracle(b1, c1, b2, c2), rel=1e-9, abs=1e-15)


def test_alpha_example2_closed_form():
    s = as_sorted(EX2)
    alpha_c = gt.alpha_j(s, 2, "C")
    alpha_a = gt.alpha_j(s, 2, "A")
    # j = 2: log_bar 2 = 1 and sqrt(1 / (3 log_bar 3)) = 1/2
    assert alpha_c == pytest.approx(_alpha2_closed_form(1.65, 0.005, 0.5), abs=1e-14)
    assert alpha_a == pytest.approx(_alpha2_closed_form(1.7, 0.005 * 1.5 / 2, 0.5), abs=1e-14)
    assert alpha_c == pytest.approx(0.117842, abs=1e-5)
    assert alpha_a == pytest.approx(0.1076791, abs=1e-6)


def test_alpha_in_unit_interval():
    for s in _random_instances(100, 3):
        for j in range(2, s.K):
            for variant in "CA":
                try:
                    alpha = gt.alpha_j(s, j, variant)
                except ValueError:
                    continue  # degenerate xi or psi
                assert 0.0 < alpha < 1.0


def test_alpha_undefined_at_K():
    with pytest.raises(ValueError):
        gt.alpha_j(EX1, 3, "C")


def test_gamma_example1():
    assert gt.gamma_j_kl(EX1, 2) == pytest.approx(1.02165, abs=1e-5)
    assert gt.gamma_j_kl(EX1, 2) == pytest.approx(_kl_pool_oracle(0.9, [0.1]), abs=1e-8)
    assert gt.gamma_j_kl(EX1, 2) == pytest.approx(2 * kl_bernoulli(0.5, 0.9), abs=1e-14)


def test_pool_kl_matches_grid_oracle():
    for s in _random_instances(30, 4, k_max=6, low=0.02, high=0.98):
        for j in range(2, s.K + 1):
            assert gt.gamma_j_kl(s, j) == pytest.approx(_kl_pool_oracle(s.sorted_means[0], s.sorted_means[1:j]), abs=1e-7)


def test_gamma_top_j_is_optimal_subset():
    for s in _random_instances(30, 5, k_max=7, low=0.02, high=0.98):
        for j in range(2, s.K + 1):
            assert gt.gamma_j_kl(s, j) == pytest.approx(gt.gamma_j_kl(s, j, enumerate_J=True), abs=1e-14)


def test_pool_squared_matches_oracle():
    for s in _random_instances(200, 6):
        for j in range(2, s.K + 1):
            assert abs(gt.xi_j(s, j) - gt.xi_oracle(s, j)) <= 1e-6
            bar = [i + 1 for i in gt.xi_bar_positions(s, j)]
            assert abs(gt.xi_bar_j(s, j) - gt.xi_oracle(s, j, bar)) <= 1e-6


def test_inequalities_on_random_instances():
    for s in _random_instances(200, 7, low=0.01, high=0.99):
        mu = s.sorted_means
        for j in range(2, s.K + 1):
            xi = gt.xi_j(s, j)
            terms = gt.psi_phi_zeta(s, j)
            assert gt.xi_bar_j(s, j) >= xi - 1e-15
            assert terms.psi_bar >= terms.psi - 1e-15
            assert 2 * xi >= (mu[0] - mu[j - 1]) ** 2 - 1e-15
            assert gt.gamma_j_kl(s, j) >= 2 * xi - 1e-15


# -- rates --------------------------------------------------------------------------

def test_example1_rates():
    assert gt.rate_audibert(EX1) == pytest.approx(0.16, abs=1e-12)
    assert gt.rate_sr_pinsker(EX1).rate == pytest.approx(0.64 / 3, abs=1e-12)
    assert gt.rate_sr_pinsker(EX1).j_min == 3


def test_example2_bounds():
    s = as_sorted(EX2)
    sr, crc, cra = gt.rate_sr_pinsker(s), gt.rate_crc(s), gt.rate_cra(s)
    assert math.exp(-5000 * sr.rate) == pytest.approx(1.93e-3, rel=0.01)
    assert math.exp(-5000 * crc.rate) == pytest.approx(6.40e-4, rel=0.01)
    assert math.exp(-5000 * cra.rate) == pytest.approx(5.89e-4, rel=0.02)
    assert crc.j_min == cra.j_min == 2
    assert crc.rate == pytest.approx(0.0014706, abs=1e-7)
    boosted = 0.005 * log_bar(3) * (1 - gt.alpha_j(s, 2, "C")) / log_bar(2)
    assert boosted == pytest.approx(0.0058810, abs=1e-7)


def test_cr_rates_match_oracle():
    s = as_sorted(EX2)
    assert gt.rate_cra(s).rate == pytest.approx(gt.cr_rate_oracle(s, "A"), rel=1e-12)
    assert gt.rate_crc(s).rate == pytest.approx(gt.cr_rate_oracle(s, "C"), rel=1e-9)
    for inst in _random_instances(20, 8, k_max=6, low=0.01, high=0.99):
        for variant, rate in (("C", gt.rate_crc), ("A", gt.rate_cra)):
            assert rate(inst).rate == pytest.approx(gt.cr_rate_oracle(inst, variant), rel=1e-6, abs=1e-12)


def test_two_arm_rates():
    s = as_sorted([0.7, 0.2])
    assert gt.rate_crc(s).rate == pytest.approx(gt.xi_j(s, 2), abs=1e-15)
    assert gt.rate_cra(s).rate == pytest.approx(gt.psi_phi_zeta(s, 2).psi, abs=1e-15)
    report = gt.guarantee_report([1.0, 0.0], "sr", [10])
    assert report.rate == 0.5
    assert report.bound_at_T[10] == pytest.approx(math.exp(-5))


def test_crc_dominates_sr():
    for s in _random_instances(100, 9, k_max=20):
        assert gt.rate_crc(s).rate >= gt.rate_sr_pinsker(s).rate - 1e-15


def test_barrier_below_sr_kl():
    for s in _random_instances(50, 10, low=0.01, high=0.99):
        assert gt.rate_barrier(s) <= gt.rate_sr_kl(s).rate + 1e-15
        assert gt.rate_sr_kl(s).rate >= gt.rate_sr_pinsker(s).rate - 1e-15


def test_barrier_example1_inner_value():
    s = as_sorted(EX1)
    inner = gt.barrier_contributions(s)[2] * 2 * log_bar(3)
    assert inner == pytest.approx(1.02165, abs=1e-5)


def test_barrier_vanishes_as_means_merge():
    assert gt.barrier_contributions(as_sorted([0.5 + 1e-7, 0.5]))[2] < 1e-12


def test_report_json():
    report = gt.guarantee_report(EX2, "crc", [5000])
    payload = json.loads(json.dumps(report.to_dict()))
    assert payload["algorithm"] == "CR-C"
    assert payload["bounds"]["5000"] == pytest.approx(6.40810e-4, rel=1e-5)
    assert len(payload["per_j"]) == 49
    assert payload["per_j"][0]["j"] == 2 and "contribution" in payload["per_j"][0]


@pytest.mark.parametrize("alias, name", [("sr", "SR-pinsker"), ("SR-KL", "SR-kl"), ("crc", "CR-C"),
                                         ("cra", "CR-A"), ("Audibert", "Audibert"), ("barrier", "Barrier")])
def test_resolve_algorithm(alias, name):
    assert gt.resolve_algorithm(alias) == name


def test_resolve_algorithm_unknown():
    with pytest.raises(ValueError):
        gt.resolve_algorithm("ucb")


# -- gap-constrained programs ---------------------------------------------------------

def test_gap_program_at_beta_one():
    for s in _random_instances(50, 11):
        for j in range(2, s.K + 1):
            assert gt.gap_program_value(s, j, 1.0, "C") == pytest.approx(gt.xi_j(s, j), abs=1e-14)
            assert gt.gap_program_value(s, j, 1.0, "A") == pytest.approx(gt.psi_phi_zeta(s, j).psi, abs=1e-14)


def test_gap_program_example2():
    assert gt.gap_program_value(EX2, 2, 0.25, "A") == pytest.approx(0.15125, abs=1e-14)


def test_gap_program_lower_bounds():
    rng = np.random.default_rng(12)
    for s in _random_instances(200, 13):
        j = int(rng.integers(2, s.K + 1))
        beta = float(rng.uniform(0.01, 1.0))
        assert gt.gap_program_value(s, j, beta, "C") >= gt.xi_j(s, j) - 1e-15
        assert gt.gap_program_value(s, j, beta, "A") >= gt.psi_phi_zeta(s, j).psi - 1e-15


def test_gap_program_closed_forms_vs_numeric():
    rng = np.random.default_rng(14)
    for s in _random_instances(100, 15):
        j = int(rng.integers(2, s.K + 1))
        beta = float(rng.uniform(0.01, 1.0))
        assert gt.gap_program_value(s, j, beta, "A") == pytest.approx(gt.gap_program_numeric(s, j, beta, "A"), abs=1e-8)
        c_exact = gt.gap_program_value(s, j, beta, "C")
        c_num = gt.gap_program_numeric(s, j, beta, "C")
        if math.isinf(c_exact):
            assert math.isinf(c_num)
        else:
            assert c_exact == pytest.approx(c_num, abs=1e-8)


def test_gap_program_rejects_beta():
    for beta in (0.0, 1.5):
        with pytest.raises(ValueError):
            gt.gap_program_value(EX1, 2, beta, "A")
