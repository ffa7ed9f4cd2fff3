"""Seeded Monte Carlo estimation of error probabilities.

Run ``r`` of an (algorithm, budget) cell draws its rewards from the stream
``(base_seed, r)`` namespaced by the algorithm code and the budget, so cells
never share random numbers and adding a cell leaves the others untouched.
Error counts are sums of per-run indicators and do not depend on how runs are
split across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import _kernels
from .core import Instance, RngStream, log_bar, make_generator, make_instance
from .policies import PolicyKind, RunResult, check_params, policy_init

FAMILIES = ("one-group", "two-group", "linear", "concave", "convex", "stair")
CSV_HEADER = ["family", "K", "algorithm", "T", "runs", "errors", "error_rate", "ci_low", "ci_high", "base_seed"]
DEFAULT_RUNS = 40_000
DEFAULT_SEED = 1
CHUNK_FLOATS = 4_000_000


def generate_instance(family: str, size: int) -> Instance:
    """Instance of one of the six experiment families.

    ``size`` is the number of arms ``K``, except for ``stair`` where it is the
    number of levels ``M`` (giving ``K = M (M + 1) / 2``: level ``m`` holds
    ``m`` arms of mean ``0.75 * 3 ** (-m / M)``).
    """
    family = family.strip().lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "stair":
        M = size
        if M < 2:
            raise ValueError(f"stair needs M >= 2 levels, got {M}")
        means = [0.75 * 3.0 ** (-m / M) for m in range(1, M + 1) for _ in range(m)]
        return make_instance(means, f"stair-M{M}")
    K = size
    if K < 2:
        raise ValueError(f"need K >= 2 arms, got {K}")
    ks = range(1, K + 1)
    if family == "one-group":
        means = [0.5] + [0.45] * (K - 1)
    elif family == "two-group":
        split = (K - 1) // 2
        means = [0.5] + [0.45 if k <= split else 0.4 for k in range(2, K + 1)]
    elif family == "linear":
        means = [0.75 - (k - 1) / (2 * K) for k in ks]
    elif family == "concave":
        means = [math.sin((K - 1) * math.pi / (2 * K))]
        means += [math.sin(9 * math.pi * (K - k + 1) / (20 * K)) for k in range(2, K + 1)]
    else:
        means = [3 / (10 * (k + 1)) for k in ks]
    return make_instance(means, f"{family}-K{K}")


def wilson_ci(errors: int, runs: int, level: float = 0.95) -> Tuple[float, float]:
    if runs < 1 or not 0 <= errors <= runs:
        raise ValueError(f"invalid counts errors={errors}, runs={runs}")
    low, high = proportion_confint(errors, runs, alpha=1.0 - level, method="wilson")
    # the score interval touches 0 (resp. 1) exactly at errors == 0 (resp. runs); drop rounding residue
    low = 0.0 if errors == 0 else min(max(float(low), 0.0), 1.0)
    high = 1.0 if errors == runs else min(max(float(high), 0.0), 1.0)
    return low, high


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: PolicyKind
    params: Tuple[Tuple[str, float], ...] = ()

    @classmethod
    def of(cls, kind, params: Optional[Dict[str, float]] = None) -> "AlgorithmSpec":
        check_params(params)
        return cls(PolicyKind.parse(kind), tuple(sorted((params or {}).items())))

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass
class ExperimentConfig:
    instance: Instance
    algorithms: List[AlgorithmSpec]
    budgets: List[int]
    runs: int = DEFAULT_RUNS
    base_seed: int = DEFAULT_SEED
    parallelism: int = 1
    family: str = "custom"

    def __post_init__(self) -> None:
        self.algorithms = [a if isinstance(a, AlgorithmSpec) else AlgorithmSpec.of(a) for a in self.algorithms]
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        for T in self.budgets:
            if T < self.instance.K:
                raise ValueError(f"budget T={T} is below K={self.instance.K}")

    @classmethod
    def for_family(cls, family: str, size: int, algorithms, budgets, **kw) -> "ExperimentConfig":
        return cls(generate_instance(family, size), list(algorithms), list(budgets), family=family, **kw)


@dataclass(frozen=True)
class SimResult:
    family: str
    K: int
    algorithm: str
    T: int
    runs: int
    errors: int
    error_rate: float
    ci_low: float
    ci_high: float
    base_seed: int

    @classmethod
    def from_counts(cls, family, K, algorithm, T, runs, errors, base_seed) -> "SimResult":
        low, high = wilson_ci(errors, runs)
        return cls(family, K, algorithm, T, runs, errors, errors / runs, low, high, base_seed)


# -- compiled execution ---------------------------------------------------------

def _kernel_args(kind: PolicyKind, K: int, T: int, params: Dict[str, float]):
    if kind is PolicyKind.SR:
        lbK = log_bar(K)
        thresholds = np.array([0.0] + [T / (j * lbK) if j else 0.0 for j in range(1, K + 1)])
        return (thresholds,)
    if kind in (PolicyKind.CRC, PolicyKind.CRA):
        policy_init(kind, K, T, params)  # validates theta0 and T >= K
        warmup = max(K, math.floor(params["theta0"] * T))
        logbar = np.array([0.0] + [log_bar(j) for j in range(1, K + 1)])
        return (kind is PolicyKind.CRA, warmup, logbar)
    if kind is PolicyKind.SH:
        return (math.ceil(math.log2(K)),)
    return (params["ugape_scale"], params["ugape_clip"])


_SINGLE = {
    PolicyKind.SR: _kernels.run_sr,
    PolicyKind.CRC: _kernels.run_cr,
    PolicyKind.CRA: _kernels.run_cr,
    PolicyKind.SH: _kernels.run_sh,
    PolicyKind.UGAPE: _kernels.run_ugape,
}
_BATCH = {
    PolicyKind.SR: _kernels.count_errors_sr,
    PolicyKind.CRC: _kernels.count_errors_cr,
    PolicyKind.CRA: _kernels.count_errors_cr,
    PolicyKind.SH: _kernels.count_errors_sh,
    PolicyKind.UGAPE: _kernels.count_errors_ugape,
}


def fast_run(kind, inst: Instance, T: int, params=None, rng: Optional[RngStream] = None) -> RunResult:
    """Compiled twin of :func:`fbai.policies.run_policy` (same stream, same decisions)."""
    kind = PolicyKind.parse(kind)
    params = check_params(params)
    rng = rng or RngStream(0, 0)
    K = inst.K
    counts = np.zeros(K, dtype=np.int64)
    log_round = np.zeros(K, dtype=np.int64)
    log_arm = np.zeros(K, dtype=np.int64)
    u = rng.uniforms(T)
    means = np.asarray(inst.means, dtype=np.float64)
    rec, n_log = _SINGLE[kind](means, T, *_kernel_args(kind, K, T, params), u, counts, log_round, log_arm)
    log = tuple((int(log_round[i]), int(log_arm[i])) for i in range(n_log))
    return RunResult(int(rec), log, tuple(int(c) for c in counts))


def stream_domain(kind: PolicyKind, T: int) -> Tuple[int, int]:
    return (_kernels.KIND_CODES[kind.value], int(T))


def cell_stream(base_seed: int, kind, T: int, run: int) -> RngStream:
    """The stream feeding run ``run`` of the (``kind``, ``T``) cell; use it to replay a run."""
    return RngStream(base_seed, run, stream_domain(PolicyKind.parse(kind), T))


def _count_chunk(kind: PolicyKind, means: Tuple[float, ...], T: int, params: Dict[str, float],
                 base_seed: int, start: int, stop: int) -> int:
    domain = stream_domain(kind, T)
    U = np.empty((stop - start, T))
    for i, run in enumerate(range(start, stop)):
        U[i] = make_generator(base_seed, run, domain).random(T)
    mu = np.asarray(means, dtype=np.float64)
    best = int(np.argmax(mu))
    return int(_BATCH[kind](mu, T, *_kernel_args(kind, len(means), T, params), U, best))


def _chunks(runs: int, T: int) -> List[Tuple[int, int]]:
    size = max(1, min(runs, CHUNK_FLOATS // T))
    return [(a, min(a + size, runs)) for a in range(0, runs, size)]


def estimate_error(config: ExperimentConfig) -> List[SimResult]:
    inst = config.instance
    tasks = []
    for spec in config.algorithms:
        params = check_params(dict(spec.params))
        for T in config.budgets:
            for start, stop in _chunks(config.runs, T):
                tasks.append((spec, T, (spec.kind, inst.means, T, params, config.base_seed, start, stop)))
    if config.parallelism > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            counts = list(pool.map(_count_chunk, *zip(*(args for _, _, args in tasks))))
    else:
        counts = [_count_chunk(*args) for _, _, args in tasks]
    errors: Dict[Tuple[AlgorithmSpec, int], int] = {}
    for (spec, T, _), n in zip(tasks, counts):
        errors[(spec, T)] = errors.get((spec, T), 0) + n
    return [
        SimResult.from_counts(config.family, inst.K, spec.name, T, config.runs, errors[(spec, T)], config.base_seed)
        for spec in config.algorithms
        for T in config.budgets
    ]


# -- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6g}"


def results_to_csv(results: Sequence[SimResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow([r.family, r.K, r.algorithm, r.T, r.runs, r.errors,
                         _fmt(r.error_rate), _fmt(r.ci_low), _fmt(r.ci_high), r.base_seed])
    return buf.getvalue()


def results_from_csv(text: str) -> List[SimResult]:
    """Parse a results CSV back into :class:`SimResult` objects.

    Rates are printed with 6 significant digits, so they are recomputed from
    the exact ``errors`` and ``runs`` columns (and checked against the printed
    values); the parsed results compare equal to the ones that were written.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for line, row in enumerate(reader, start=2):
        result = SimResult.from_counts(row["family"], int(row["K"]), row["algorithm"], int(row["T"]),
                                       int(row["runs"]), int(row["errors"]), int(row["base_seed"]))
        for name in ("error_rate", "ci_low", "ci_high"):
            if _fmt(getattr(result, name)) != _fmt(float(row[name])):
                raise ValueError(f"line {line}: {name}={row[name]} disagrees with errors/runs")
        out.append(result)
    return out


def results_to_json(results: Sequence[SimResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2)


def run_experiment(config: ExperimentConfig, out_path: Optional[str | Path] = None, fmt: str = "csv"):
    """Full algorithm x budget sweep; returns the results and the rendered table."""
    results = estimate_error(config) if config.algorithms else []
    text = results_to_json(results) if fmt == "json" else results_to_csv(results)
    if out_path is not None:
        path = Path(out_path)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc}") from exc
    return results, text
