"""Round-by-round sampling policies for fixed-budget best-arm identification.

Every policy follows the same loop: ``select_arm`` (which first runs the
top-of-round discarding check), ``observe`` the reward, and after exactly
``T`` rounds ``recommend``. Arms are 0-based. Every "tie broken arbitrarily"
resolves to the lowest arm index.

These classes are the readable reference; :mod:`fbai._kernels` holds the
compiled equivalents used for Monte Carlo, and the test-suite checks that
both produce identical runs.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .core import Instance, RngStream, g_threshold, log_bar, reward_from_uniform

DEFAULT_THETA0 = 1e-5
DEFAULT_UGAPE_CLIP = 1e-3
DEFAULT_UGAPE_SCALE = 1.0
PARAM_KEYS = ("theta0", "ugape_clip", "ugape_scale")


class PolicyKind(str, enum.Enum):
    SR = "SR"
    CRC = "CR-C"
    CRA = "CR-A"
    SH = "SH"
    UGAPE = "UGapE"

    @classmethod
    def parse(cls, name: "str | PolicyKind") -> "PolicyKind":
        if isinstance(name, PolicyKind):
            return name
        key = name.strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower().replace("-", "") == key:
                return kind
        raise ValueError(f"unknown policy {name!r}; expected one of {[k.value for k in cls]}")


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscardDecision:
    should_discard: bool
    victim: Optional[int] = None
    beta: Optional[float] = None


NO_DISCARD = DiscardDecision(False)


def check_params(params: Optional[Mapping[str, float]]) -> Dict[str, float]:
    params = dict(params or {})
    unknown = set(params) - set(PARAM_KEYS)
    if unknown:
        raise ValueError(f"unknown policy parameter(s): {sorted(unknown)}")
    out = {
        "theta0": float(params.get("theta0", DEFAULT_THETA0)),
        "ugape_clip": float(params.get("ugape_clip", DEFAULT_UGAPE_CLIP)),
        "ugape_scale": float(params.get("ugape_scale", DEFAULT_UGAPE_SCALE)),
    }
    if out["ugape_clip"] <= 0 or out["ugape_scale"] <= 0:
        raise ValueError("ugape_clip and ugape_scale must be positive")
    return out


class Policy:
    """Shared sampling state: candidate set, pull counts, reward sums, round."""

    kind: PolicyKind

    def __init__(self, K: int, T: int, params: Optional[Mapping[str, float]] = None):
        if K < 2:
            raise ValueError(f"need K >= 2 arms, got {K}")
        if T < 1:
            raise ValueError(f"budget must be positive, got T={T}")
        self.K = K
        self.T = T
        self.params = check_params(params)
        self.t = 0
        self.candidates: List[int] = list(range(K))
        self.counts: List[int] = [0] * K
        self.sums: List[float] = [0.0] * K
        self.discard_log: List[Tuple[int, int]] = []
        self._pending: Optional[int] = None

    # -- shared helpers -------------------------------------------------
    def mean(self, k: int) -> float:
        # unpulled arms rank as 0; only reachable when T is tiny
        return self.sums[k] / self.counts[k] if self.counts[k] else 0.0

    def empirical_worst(self, arms: List[int]) -> int:
        return min(arms, key=self.mean)

    def empirical_best(self, arms: List[int]) -> int:
        best = arms[0]
        for k in arms[1:]:
            if self.mean(k) > self.mean(best):
                best = k
        return best

    def least_pulled(self, arms: List[int]) -> int:
        return min(arms, key=lambda k: self.counts[k])

    def discard(self, arm: int) -> None:
        self.candidates.remove(arm)
        self.discard_log.append((self.t + 1, arm))

    # -- interface ------------------------------------------------------
    def _begin_round(self) -> None:
        """Top-of-round bookkeeping (discarding); at most one discard per round."""

    def _choose(self) -> int:
        return self.least_pulled(self.candidates)

    def select_arm(self) -> int:
        if self._pending is not None:
            return self._pending
        if self.t >= self.T:
            raise BudgetExhausted(f"all {self.T} rounds have been played")
        self._begin_round()
        self._pending = self._choose()
        return self._pending

    def observe(self, arm: int, reward: float) -> None:
        if self._pending is None or arm != self._pending:
            raise RuntimeError(f"observed arm {arm} but the selected arm was {self._pending}")
        self._pending = None
        self.t += 1
        self.counts[arm] += 1
        self.sums[arm] += reward

    def recommend(self) -> int:
        if self.t < self.T:
            raise RuntimeError(f"recommend called at round {self.t} < T={self.T}")
        return self.empirical_best(self.candidates)

    def discard_log_json(self) -> str:
        return json.dumps([{"round": r, "arm": a} for r, a in self.discard_log])


class SuccessiveRejects(Policy):
    kind = PolicyKind.SR

    def __init__(self, K, T, params=None):
        super().__init__(K, T, params)
        self.logbar_K = log_bar(K)

    def threshold(self, j: int) -> float:
        return self.T / (j * self.logbar_K)

    def _begin_round(self) -> None:
        decision = sr_should_discard(self)
        if decision.should_discard:
            self.discard(decision.victim)


class ContinuousRejects(Policy):
    """CR-C (``variant="C"``) or CR-A (``variant="A"``)."""

    def __init__(self, K, T, params=None, variant: str = "C"):
        super().__init__(K, T, params)
        if variant not in ("C", "A"):
            raise ValueError(f"variant must be 'C' or 'A', got {variant!r}")
        if T < K:
            raise ValueError(f"CR needs T >= K for its initial sweep (T={T}, K={K})")
        theta0 = self.params["theta0"]
        if not 0.0 < theta0 < 1.0 / log_bar(K):
            raise ValueError(f"theta0={theta0} outside (0, 1/log_bar(K)) = (0, {1.0 / log_bar(K):.6g})")
        self.variant = variant
        self.kind = PolicyKind.CRC if variant == "C" else PolicyKind.CRA
        self.warmup = max(K, math.floor(theta0 * T))

    def _begin_round(self) -> None:
        decision = cr_should_discard(self, self.variant)
        if decision.should_discard:
            self.discard(decision.victim)


def sr_should_discard(state: SuccessiveRejects) -> DiscardDecision:
    j = len(state.candidates)
    if j <= 2:
        return NO_DISCARD
    if min(state.counts[k] for k in state.candidates) < state.threshold(j):
        return NO_DISCARD
    return DiscardDecision(True, state.empirical_worst(state.candidates))


def cr_should_discard(state: ContinuousRejects, variant: Optional[str] = None) -> DiscardDecision:
    """Discarding test of CR evaluated on the counts before this round's pull."""
    variant = variant or state.variant
    cands = state.candidates
    j = len(cands)
    if j <= 2 or state.t + 1 <= state.warmup:
        return NO_DISCARD
    common = state.counts[cands[0]]
    if any(state.counts[k] != common for k in cands):
        return NO_DISCARD
    outside = [k for k in range(state.K) if k not in cands]
    if common <= max((state.counts[k] for k in outside), default=0):
        return NO_DISCARD
    worst = state.empirical_worst(cands)
    rest = [k for k in cands if k != worst]
    beta = (common * j * log_bar(j)) / (state.T - sum(state.counts[k] for k in outside))
    if variant == "C":
        gap = min(state.mean(k) for k in rest) - state.mean(worst)
    else:
        total = 0.0
        for k in rest:
            total += state.mean(k)
        gap = total / (j - 1) - state.mean(worst)
    if gap >= g_threshold(beta):
        return DiscardDecision(True, worst, beta)
    return DiscardDecision(False, None, beta)


class SequentialHalving(Policy):
    """ceil(log2 K) phases; each survivor gets floor(T / (|S| ceil(log2 K))) pulls
    per phase, then the empirical top half (ceil(|S|/2) arms) survives. Budget left
    after the last phase is spent round-robin on the survivors."""

    kind = PolicyKind.SH

    def __init__(self, K, T, params=None):
        super().__init__(K, T, params)
        self.n_phases = math.ceil(math.log2(K))
        self.phase = 0
        self._start_phase()

    def _start_phase(self) -> None:
        self.phase_pulls = self.T // (len(self.candidates) * self.n_phases)
        self.phase_base = {k: self.counts[k] for k in self.candidates}

    def _phase_done(self) -> bool:
        return all(self.counts[k] - self.phase_base[k] >= self.phase_pulls for k in self.candidates)

    def _begin_round(self) -> None:
        while self.phase < self.n_phases and self._phase_done():
            keep = math.ceil(len(self.candidates) / 2)
            ranked = sorted(self.candidates, key=lambda k: -self.mean(k))
            survivors = sorted(ranked[:keep])
            for k in list(self.candidates):
                if k not in survivors:
                    self.discard(k)
            self.phase += 1
            if self.phase < self.n_phases:
                self._start_phase()


class UGapE(Policy):
    """Fixed-budget UGapE with the hardness estimated on the fly.

    Exploration parameter ``a = scale * (T - K) / H_hat`` where ``H_hat`` sums
    inverse squared empirical gaps clipped below by ``clip``; the best arm's gap
    is its distance to the runner-up. Confidence width is ``sqrt(a / N_k)``.
    The recommendation is the arm ``J(t)`` of the round with the smallest index
    ``B_{J(t)}(t)``.
    """

    kind = PolicyKind.UGAPE

    def __init__(self, K, T, params=None):
        super().__init__(K, T, params)
        self.best_index = math.inf
        self.best_arm: Optional[int] = None

    def _choose(self) -> int:
        K = self.K
        for k in range(K):
            if self.counts[k] == 0:
                return k
        means = [self.mean(k) for k in range(K)]
        a = self.params["ugape_scale"] * (self.T - K) / estimate_hardness(means, self.params["ugape_clip"])
        width = [math.sqrt(max(a, 0.0) / self.counts[k]) for k in range(K)]
        upper = [means[k] + width[k] for k in range(K)]
        lower = [means[k] - width[k] for k in range(K)]
        top = max(range(K), key=lambda k: upper[k])
        runner = max((k for k in range(K) if k != top), key=lambda k: upper[k])
        b_index = [(upper[runner] if k == top else upper[top]) - lower[k] for k in range(K)]
        J = min(range(K), key=lambda k: b_index[k])
        if b_index[J] < self.best_index:
            self.best_index = b_index[J]
            self.best_arm = J
        u = max((k for k in range(K) if k != J), key=lambda k: upper[k])
        first, second = min(J, u), max(J, u)
        return first if width[first] >= width[second] else second

    def recommend(self) -> int:
        if self.t < self.T:
            raise RuntimeError(f"recommend called at round {self.t} < T={self.T}")
        if self.best_arm is None:
            return self.empirical_best(self.candidates)
        return self.best_arm


def estimate_hardness(means, clip: float) -> float:
    K = len(means)
    top = max(range(K), key=lambda k: means[k])
    second = max(means[k] for k in range(K) if k != top)
    total = 0.0
    for k in range(K):
        gap = means[top] - second if k == top else means[top] - means[k]
        gap = max(gap, clip)
        total += 1.0 / (gap * gap)
    return total


def policy_init(kind: "str | PolicyKind", K: int, T: int, params: Optional[Mapping[str, float]] = None) -> Policy:
    kind = PolicyKind.parse(kind)
    if kind is PolicyKind.SR:
        return SuccessiveRejects(K, T, params)
    if kind is PolicyKind.CRC:
        return ContinuousRejects(K, T, params, "C")
    if kind is PolicyKind.CRA:
        return ContinuousRejects(K, T, params, "A")
    if kind is PolicyKind.SH:
        return SequentialHalving(K, T, params)
    return UGapE(K, T, params)


@dataclass(frozen=True)
class RunResult:
    recommended: int
    discard_log: Tuple[Tuple[int, int], ...]
    counts: Tuple[int, ...]


def play(policy: Policy, reward: Callable[[int], float]) -> RunResult:
    """Run ``policy`` to the end of its budget, drawing rewards from ``reward(arm)``."""
    while policy.t < policy.T:
        arm = policy.select_arm()
        policy.observe(arm, reward(arm))
    return RunResult(policy.recommend(), tuple(policy.discard_log), tuple(policy.counts))


def run_policy(kind, inst: Instance, T: int, params=None, rng: Optional[RngStream] = None) -> RunResult:
    """One full run; pull ``n`` consumes the ``n``-th uniform of ``rng``."""
    if rng is None:
        rng = RngStream(0, 0)
    policy = policy_init(kind, inst.K, T, params)
    means = inst.means
    return play(policy, lambda arm: reward_from_uniform(means[arm], rng.uniform()))


def run_on_tape(kind, tape, T: int, params=None) -> RunResult:
    """Replay a per-arm reward tape: the ``n``-th pull of arm ``k`` returns ``tape[k][n]``."""
    policy = policy_init(kind, len(tape), T, params)
    return play(policy, lambda arm: float(tape[arm][policy.counts[arm]]))
