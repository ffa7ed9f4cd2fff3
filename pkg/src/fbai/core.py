"""Problem instances, canonical ordering, reward sampling and shared numeric helpers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Instance:
    """Bernoulli bandit problem: one mean per arm, unique best arm."""

    means: Tuple[float, ...]
    family_label: Optional[str] = None

    def __post_init__(self) -> None:
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if len(means) < 2:
            raise ValueError(f"need at least 2 arms, got {len(means)}")
        for k, m in enumerate(means):
            if not (0.0 <= m <= 1.0) or math.isnan(m):
                raise ValueError(f"mean of arm {k} is {m!r}, outside [0, 1]")
        top = max(means)
        if sum(1 for m in means if m == top) != 1:
            raise ValueError("the maximum mean is tied: no unique best arm")

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def best_arm(self) -> int:
        return max(range(self.K), key=lambda k: self.means[k])


@dataclass(frozen=True)
class SortedInstance:
    """Means relabeled in decreasing order.

    ``perm[i]`` is the original arm index of sorted position ``i``; both are
    0-based. ``mean(K)`` returns the virtual arm ``K`` with mean 0.
    """

    sorted_means: Tuple[float, ...]
    perm: Tuple[int, ...]
    mu_Kplus1: float = 0.0

    @property
    def K(self) -> int:
        return len(self.sorted_means)

    def mean(self, i: int) -> float:
        """Mean at sorted 0-based position ``i``, with position ``K`` mapped to 0."""
        if i == self.K:
            return self.mu_Kplus1
        return self.sorted_means[i]

    def unsort(self) -> Tuple[float, ...]:
        out = [0.0] * self.K
        for pos, arm in enumerate(self.perm):
            out[arm] = self.sorted_means[pos]
        return tuple(out)


def make_instance(means: Sequence[float], label: Optional[str] = None) -> Instance:
    return Instance(tuple(means), label)


def sort_desc(inst: Instance) -> SortedInstance:
    # stable sort keeps ties among suboptimal arms in ascending original index
    perm = tuple(sorted(range(inst.K), key=lambda k: -inst.means[k]))
    return SortedInstance(tuple(inst.means[k] for k in perm), perm)


def as_sorted(inst: Instance | SortedInstance | Sequence[float]) -> SortedInstance:
    if isinstance(inst, SortedInstance):
        return inst
    if not isinstance(inst, Instance):
        inst = make_instance(inst)
    return sort_desc(inst)


def log_bar(m: int) -> float:
    """1/2 + sum_{k=2}^m 1/k."""
    if m < 1:
        raise ValueError(f"log_bar needs m >= 1, got {m}")
    return 0.5 + math.fsum(1.0 / k for k in range(2, m + 1))


def g_threshold(beta: float) -> float:
    """Empirical-gap threshold 1/sqrt(beta) - 1 used by the CR discarding tests."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return 1.0 / math.sqrt(beta) - 1.0


def kl_bernoulli(a: float, b: float) -> float:
    """KL divergence between Bernoulli(a) and Bernoulli(b), with 0 log 0 = 0."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must be in [0, 1], got {a}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must be in [0, 1], got {b}")
    if a == b:
        return 0.0
    if b == 0.0 or b == 1.0:
        raise ValueError(f"divergence to a degenerate Bernoulli({b}) is infinite")
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return max(out, 0.0)


@dataclass
class RngStream:
    """Reproducible uniform stream keyed by ``(base_seed, stream_id)``.

    ``domain`` namespaces the key further (the Monte Carlo harness puts the
    algorithm and budget there so cells never share streams). Each stream is a
    Philox generator built from a ``SeedSequence`` spawn key, so distinct keys
    give independent sequences.
    """

    base_seed: int
    stream_id: int
    domain: Tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._gen = make_generator(self.base_seed, self.stream_id, self.domain)

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)


def make_generator(base_seed: int, stream_id: int, domain: Tuple[int, ...] = ()) -> np.random.Generator:
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(*domain, int(stream_id)))
    return np.random.Generator(np.random.Philox(seq))


def reward_from_uniform(mean: float, u: float) -> float:
    return 1.0 if u < mean else 0.0


def sample_reward(inst: Instance, arm: int, rng: RngStream) -> float:
    """Bernoulli reward of ``arm`` (0-based); consumes exactly one uniform."""
    if not 0 <= arm < inst.K:
        raise IndexError(f"arm {arm} out of range for K={inst.K}")
    return reward_from_uniform(inst.means[arm], rng.uniform())


def instance_to_json(inst: Instance) -> str:
    payload: dict = {"means": list(inst.means)}
    if inst.family_label is not None:
        payload["label"] = inst.family_label
    return json.dumps(payload)


def instance_from_json(text: str) -> Instance:
    payload = json.loads(text)
    if not isinstance(payload, dict) or "means" not in payload:
        raise ValueError('instance JSON must be an object with a "means" array')
    return make_instance(payload["means"], payload.get("label"))


def load_instance(path: str | Path) -> Instance:
    return instance_from_json(Path(path).read_text())


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(instance_to_json(inst) + "\n")
