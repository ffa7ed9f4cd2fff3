"""Release gate: the eight reproduction criteria, each reported on one line.

Criteria 1-4 check the closed-form guarantees on the two worked instances,
5-6 reproduce Monte Carlo error rates, 7 is a randomized property sweep of the
guarantee evaluators and 8 fuzzes the policies. Every check is seeded, so two
invocations with the same arguments print the same values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import guarantees as gt
from .core import as_sorted, make_instance, reward_from_uniform
from .montecarlo import DEFAULT_RUNS, ExperimentConfig, estimate_error
from .policies import PolicyKind, policy_init, run_on_tape

EXAMPLE1 = (0.9, 0.1, 0.1)
EXAMPLE2 = (0.95, 0.85, 0.2) + (0.0,) * 47
EX2_BUDGET = 5000

GROUPS = {
    "bounds": (1, 2, 3, 4),
    "montecarlo": (5, 6),
    "properties": (7, 8),
}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.title}: {self.measured} ({self.seconds:.1f}s)"


def _within(x: float, target: float, tol: float) -> bool:
    return abs(x - target) <= tol


def _rel(x: float, target: float) -> float:
    return abs(x / target - 1.0)


# -- 1-4: worked bound values ------------------------------------------------

def check_example1() -> Tuple[bool, str]:
    aud = gt.rate_audibert(EXAMPLE1)
    sr = gt.rate_sr_pinsker(EXAMPLE1).rate
    ok = _within(aud, 0.16, 5e-4) and _within(sr, 0.2133, 1e-3)
    return ok, f"audibert={aud:.6f} (0.16 +- 5e-4), sr={sr:.6f} (0.2133 +- 1e-3)"


def check_example2_sr() -> Tuple[bool, str]:
    bound = math.exp(-EX2_BUDGET * gt.rate_sr_pinsker(EXAMPLE2).rate)
    return _rel(bound, 1.93e-3) <= 0.01, f"bound={bound:.5e} (1.93e-3 within 1%, rel={_rel(bound, 1.93e-3):.2e})"


def check_example2_crc() -> Tuple[bool, str]:
    s = as_sorted(EXAMPLE2)
    bound = math.exp(-EX2_BUDGET * gt.rate_crc(s).rate)
    alpha = gt.alpha_j(s, 2, "C")
    oracle_alpha = gt.crossing_oracle(*gt.crossing_coefficients(s, 2, "C"))
    ok = _rel(bound, 6.40e-4) <= 0.01 and _within(alpha, 0.11784, 1e-4) and _within(alpha, oracle_alpha, 1e-4)
    return ok, (f"bound={bound:.5e} (6.40e-4 within 1%, rel={_rel(bound, 6.40e-4):.2e}), "
                f"alpha_2={alpha:.6f}, grid oracle={oracle_alpha:.6f} (0.11784 +- 1e-4)")


def check_example2_cra() -> Tuple[bool, str]:
    s = as_sorted(EXAMPLE2)
    bound = math.exp(-EX2_BUDGET * gt.rate_cra(s).rate)
    oracle = math.exp(-EX2_BUDGET * gt.cr_rate_oracle(s, "A"))
    rel = _rel(bound, oracle)
    ok = rel <= 1e-6 and 5.5e-4 <= bound <= 6.6e-4
    return ok, (f"bound={bound:.5e}, oracle={oracle:.5e} (rel {rel:.1e} <= 1e-6), in [5.5e-4, 6.6e-4]; "
                f"published 6.36e-4 differs by {_rel(bound, 6.36e-4):.1%} (reported only)")


# -- 5-6: Monte Carlo ----------------------------------------------------------

MC_STAIR = [
    ("SR", 5000, 1.26, 0.25), ("CR-C", 5000, 1.05, 0.25), ("CR-A", 5000, 0.57, 0.25),
    ("SR", 3000, 5.5, 0.5), ("CR-A", 3000, 4.7, 0.5),
]
MC_ONE_GROUP = [("SR", 8000, 4.29, 0.6), ("CR-C", 8000, 4.17, 0.6), ("CR-A", 8000, 4.07, 0.6)]


def tolerance_scale(runs: int) -> float:
    """Tolerances are stated for 40,000 runs; fewer runs widen them by sqrt(40000 / runs)."""
    return math.sqrt(DEFAULT_RUNS / runs) if runs < DEFAULT_RUNS else 1.0


def _check_cells(family: str, size: int, cells, runs: int, seed: int, parallelism: int) -> Tuple[bool, str]:
    algos = sorted({a for a, *_ in cells}, key=lambda a: [c[0] for c in cells].index(a))
    budgets = sorted({T for _, T, *_ in cells})
    config = ExperimentConfig.for_family(family, size, algos, budgets, runs=runs,
                                         base_seed=seed, parallelism=parallelism)
    rates = {(r.algorithm, r.T): 100.0 * r.error_rate for r in estimate_error(config)}
    scale = tolerance_scale(runs)
    ok = True
    parts = []
    for algo, T, target, tol in cells:
        got = rates[(algo, T)]
        cell_ok = _within(got, target, tol * scale)
        ok &= cell_ok
        parts.append(f"{algo}@{T}={got:.3f}% ({target}+-{tol * scale:.3g}pp){'' if cell_ok else ' OUT'}")
    return ok, ", ".join(parts)


# -- 7: property sweep ---------------------------------------------------------

def _random_sorted(rng: np.random.Generator, k_max: int = 8, low: float = 0.0, high: float = 1.0):
    while True:
        K = int(rng.integers(2, k_max + 1))
        means = rng.uniform(low, high, K)
        if np.count_nonzero(means == means.max()) == 1:
            return as_sorted(make_instance(means.tolist()))


def check_properties(seed: int = 7) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed)
    failures: Dict[str, int] = {}
    worst = {"xi": 0.0, "crossing": 0.0, "opt4": 0.0}

    def fail(name: str) -> None:
        failures[name] = failures.get(name, 0) + 1

    eps = 1e-12
    for _ in range(200):
        s = _random_sorted(rng, low=0.01, high=0.99)
        mu = s.sorted_means
        for j in range(2, s.K + 1):
            xi, xi_bar = gt.xi_j(s, j), gt.xi_bar_j(s, j)
            err = max(abs(xi - gt.xi_oracle(s, j)),
                      abs(xi_bar - gt.xi_oracle(s, j, [i + 1 for i in gt.xi_bar_positions(s, j)])))
            worst["xi"] = max(worst["xi"], err)
            if err > 1e-6:
                fail("xi-vs-oracle")
            terms = gt.psi_phi_zeta(s, j)
            if xi_bar < xi - eps:
                fail("xi_bar>=xi")
            if terms.psi_bar < terms.psi - eps:
                fail("psi_bar>=psi")
            if 2 * xi < (mu[0] - mu[j - 1]) ** 2 - eps:
                fail("2xi>=gap^2")
            if gt.gamma_j_kl(s, j) < 2 * xi - eps:
                fail("gamma>=2xi")
            for variant, base in (("C", xi), ("A", terms.psi)):
                if j < s.K and base > 0:
                    coeffs = gt.crossing_coefficients(s, j, variant)
                    x = gt.solve_crossing(*coeffs)
                    worst["crossing"] = max(worst["crossing"], _crossing_residual(x, *coeffs))

    for _ in range(200):
        b1, c1 = rng.uniform(1e-4, 2.0, 2)
        b2, c2 = rng.uniform(0.0, 2.0), rng.uniform(1e-3, 3.0)
        x = gt.solve_crossing(b1, c1, b2, c2)
        worst["crossing"] = max(worst["crossing"], _crossing_residual(x, b1, c1, b2, c2))
    if worst["crossing"] > 1e-12:
        fail("crossing-residual")

    for _ in range(200):
        s = _random_sorted(rng)
        j = int(rng.integers(2, s.K + 1))
        beta = float(rng.uniform(0.01, 1.0))
        if gt.gap_program_value(s, j, beta, "C") < gt.xi_j(s, j) - eps:
            fail("gapC>=xi")
        closed = gt.gap_program_value(s, j, beta, "A")
        if closed < gt.psi_phi_zeta(s, j).psi - eps:
            fail("gapA>=psi")
        err = abs(closed - gt.gap_program_numeric(s, j, beta, "A"))
        worst["opt4"] = max(worst["opt4"], err)
        if err > 1e-8:
            fail("opt4-closed-vs-numeric")

    for _ in range(100):
        s = _random_sorted(rng, k_max=20)
        if gt.rate_crc(s).rate < gt.rate_sr_pinsker(s).rate - eps:
            fail("crc>=sr")

    detail = (f"max |xi - oracle|={worst['xi']:.1e}, max crossing residual={worst['crossing']:.1e}, "
              f"max |opt4 - numeric|={worst['opt4']:.1e}")
    if failures:
        detail += "; violations " + ", ".join(f"{k} x{v}" for k, v in sorted(failures.items()))
    return not failures, detail


def _crossing_residual(x: float, b1: float, c1: float, b2: float, c2: float) -> float:
    hinge = max(c2 * math.sqrt(x) - b2, 0.0)
    return abs((c1 - b1 * x) - hinge * hinge) / max(1.0, c1)


# -- 8: policy fuzzing -------------------------------------------------------------

ROUND_ROBIN = (PolicyKind.SR, PolicyKind.CRC, PolicyKind.CRA, PolicyKind.SH)


def _fuzz_case(rng: np.random.Generator):
    K = int(rng.integers(2, 9))
    T = int(rng.integers(2 * K, 400))
    while True:
        means = rng.random(K)
        if np.count_nonzero(means == means.max()) == 1:
            break
    theta0 = float(rng.uniform(1e-5, 0.9 / gt.log_bar(K)))
    return make_instance(means.tolist()), T, theta0


def fuzz_policy(kind: PolicyKind, runs: int, rng: np.random.Generator) -> List[str]:
    """Step ``runs`` random cases through the reference policy, checking invariants after every pull."""
    problems = []
    for run in range(runs):
        inst, T, theta0 = _fuzz_case(rng)
        policy = policy_init(kind, inst.K, T, {"theta0": theta0})
        uniforms = rng.random(T)
        while policy.t < T:
            arm = policy.select_arm()
            policy.observe(arm, reward_from_uniform(inst.means[arm], uniforms[policy.t]))
            if kind in ROUND_ROBIN:
                inside = [policy.counts[k] for k in policy.candidates]
                if max(inside) - min(inside) > 1:
                    problems.append(f"run {run}: candidate counts spread {inside} at round {policy.t}")
                    break
        if sum(policy.counts) != T:
            problems.append(f"run {run}: counts sum {sum(policy.counts)} != T={T}")
        if kind in (PolicyKind.CRC, PolicyKind.CRA) and policy.discard_log:
            first = policy.discard_log[0][0]
            if first <= math.floor(theta0 * T):
                problems.append(f"run {run}: discard at round {first} <= floor(theta0 T)")
        policy.recommend()
    return problems


def tape_order_violations(runs: int, rng: np.random.Generator) -> Tuple[int, int]:
    """Replay shared per-arm reward tapes through CR-C and CR-A.

    Returns ``(pairs where some CR-C discard precedes the matching CR-A discard,
    pairs where that happens already at the first discard)``.
    """
    any_bad = first_bad = 0
    for _ in range(runs):
        inst, T, theta0 = _fuzz_case(rng)
        mu = np.asarray(inst.means)
        tape = (rng.random((inst.K, T)) < mu[:, None]).astype(float)
        params = {"theta0": theta0}
        c = run_on_tape(PolicyKind.CRC, tape, T, params).discard_log
        a = run_on_tape(PolicyKind.CRA, tape, T, params).discard_log
        late = [i for i, (rc, _) in enumerate(c) if i >= len(a) or a[i][0] > rc]
        if late:
            any_bad += 1
            first_bad += late[0] == 0
    return any_bad, first_bad


def deterministic_errors(kinds: Iterable[PolicyKind], seeds: int = 20) -> int:
    errors = 0
    for K in (2, 3, 5, 8):
        inst = make_instance([1.0] + [0.0] * (K - 1))
        for kind in kinds:
            for seed in range(seeds):
                rng = np.random.default_rng(seed)
                T = int(rng.integers(2 * K, 300))
                policy = policy_init(kind, K, T)
                while policy.t < T:
                    arm = policy.select_arm()
                    policy.observe(arm, inst.means[arm])
                errors += policy.recommend() != 0
    return errors


def check_fuzzing(runs: int = 1000, seed: int = 11) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed)
    problems = []
    for kind in PolicyKind:
        problems += [f"{kind.value} {p}" for p in fuzz_policy(kind, runs, rng)]
    any_bad, first_bad = tape_order_violations(runs, rng)
    det = deterministic_errors(PolicyKind)
    ok = not problems and any_bad == 0 and det == 0
    detail = (f"{runs} runs/policy: {len(problems)} invariant violations; "
              f"CR-A later than CR-C on {any_bad}/{runs} replayed tapes "
              f"({first_bad} at the first discard); {det} errors on deterministic instances")
    if problems:
        detail += f"; first: {problems[0]}"
    return ok, detail


# -- driver -------------------------------------------------------------------------

def criteria(runs: int = DEFAULT_RUNS, seed: int = 1, parallelism: int = 1) -> Dict[int, Tuple[str, Callable]]:
    return {
        1: ("Example 1 rates", check_example1),
        2: ("Example 2 SR bound", check_example2_sr),
        3: ("Example 2 CR-C bound and alpha_2", check_example2_crc),
        4: ("Example 2 CR-A bound vs oracle", check_example2_cra),
        5: ("stair M=10 Monte Carlo",
            lambda: _check_cells("stair", 10, MC_STAIR, runs, seed, parallelism)),
        6: ("one-group K=10 Monte Carlo",
            lambda: _check_cells("one-group", 10, MC_ONE_GROUP, runs, seed, parallelism)),
        7: ("guarantee property sweep", check_properties),
        8: ("policy invariant fuzzing", check_fuzzing),
    }


def select(only: Optional[Sequence[str]]) -> List[int]:
    if not only:
        return list(range(1, 9))
    chosen = set()
    for name in only:
        if name not in GROUPS:
            raise ValueError(f"unknown group {name!r}; expected one of {sorted(GROUPS)}")
        chosen.update(GROUPS[name])
    return sorted(chosen)


def run_criterion(number: int, runs: int = DEFAULT_RUNS, seed: int = 1, parallelism: int = 1,
                  emit: Callable[[str], None] = print) -> CriterionResult:
    title, check = criteria(runs, seed, parallelism)[number]
    start = time.perf_counter()
    passed, measured = check()
    result = CriterionResult(number, title, bool(passed), measured, time.perf_counter() - start)
    emit(result.line())
    return result


def run_acceptance(only: Optional[Sequence[str]] = None, runs: int = DEFAULT_RUNS, seed: int = 1,
                   parallelism: int = 1, emit: Callable[[str], None] = print) -> List[CriterionResult]:
    return [run_criterion(n, runs, seed, parallelism, emit) for n in select(only)]
