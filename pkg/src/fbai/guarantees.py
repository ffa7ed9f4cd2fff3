"""Instance-specific error exponents of SR, CR-C and CR-A.

All functions take means sorted in decreasing order (a :class:`SortedInstance`,
or anything :func:`fbai.core.as_sorted` accepts) and use 1-based ``j`` as in
the usual statement of the bounds: ``j`` is the size of the candidate set,
``2 <= j <= K``. Sorted position ``K + 1`` is a virtual arm of mean 0.

The constrained least-squares values (``xi``, ``xi_bar``) and their KL
counterparts are solved by pooling: the best arm is averaged together with the
lowest constrained means, taken in increasing order, for as long as the next
mean lies below the current pooled level (KKT conditions of a separable convex
program with constraints ``lambda_1 <= lambda_k``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import SortedInstance, as_sorted, g_threshold, kl_bernoulli, log_bar

ALGORITHMS = ("SR-pinsker", "SR-kl", "CR-C", "CR-A", "Audibert", "Barrier")
MAX_ENUMERATION = 100_000
MAX_ORACLE_ARMS = 100


def _check_j(s: SortedInstance, j: int) -> None:
    if not 2 <= j <= s.K:
        raise ValueError(f"j must be in 2..{s.K}, got {j}")


# -- pooling ---------------------------------------------------------------

def pool_squared(top: float, others: Iterable[float]) -> float:
    """min (x1 - top)^2 + sum_b (x_b - v_b)^2 subject to x1 <= x_b."""
    pool = [top]
    for v in sorted(others):
        if v < math.fsum(pool) / len(pool):
            pool.append(v)
        else:
            break
    level = math.fsum(pool) / len(pool)
    return math.fsum((v - level) ** 2 for v in pool)


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def pool_kl(top: float, others: Iterable[float]) -> float:
    """min d(x1, top) + sum_b d(x_b, v_b) subject to x1 <= x_b (Bernoulli KL).

    The pooled level minimizing ``sum d(x, v)`` over a block is the logistic of
    the block's mean logit, so pooling runs in logit space.
    """
    values = [top, *others]
    for v in values:
        if not 0.0 < v < 1.0:
            raise ValueError(f"KL pooling needs means in (0, 1), got {v}")
    z_top = _logit(top)
    pool = [z_top]
    for z in sorted(_logit(v) for v in others):
        if z < math.fsum(pool) / len(pool):
            pool.append(z)
        else:
            break
    level = _logistic(math.fsum(pool) / len(pool))
    return math.fsum(kl_bernoulli(level, _logistic(z)) for z in pool)


# -- per-j quantities --------------------------------------------------------

def xi_j(s, j: int) -> float:
    """Least-squares distance to an instance where arm 1 is below arms 2..j."""
    s = as_sorted(s)
    _check_j(s, j)
    return pool_squared(s.mean(0), s.sorted_means[1:j])


def xi_bar_positions(s: SortedInstance, j: int) -> List[int]:
    """0-based sorted positions constrained in ``xi_bar_j``: arms 2..j-1 and j+1."""
    return [*range(1, j - 1), j]


def xi_bar_j(s, j: int) -> float:
    """``xi_j`` with arm j swapped for arm j+1 (virtual mean 0 when j = K)."""
    s = as_sorted(s)
    _check_j(s, j)
    return pool_squared(s.mean(0), [s.mean(i) for i in xi_bar_positions(s, j)])


class PsiTerms(NamedTuple):
    psi: float
    psi_bar: float
    zeta: float
    phi: float


def psi_phi_zeta(s, j: int) -> PsiTerms:
    s = as_sorted(s)
    _check_j(s, j)
    mu = s.mean
    head = math.fsum(s.sorted_means[1 : j - 1])
    psi = (j - 1) / j * (mu(0) - (head + mu(j - 1)) / (j - 1)) ** 2
    psi_bar = (j - 1) / j * (mu(0) - (head + mu(j)) / (j - 1)) ** 2
    zeta = mu(j - 1) - mu(j)
    phi = math.fsum(s.sorted_means[:j]) / j - mu(j)
    return PsiTerms(psi, psi_bar, zeta, phi)


def solve_crossing(b1: float, c1: float, b2: float, c2: float) -> float:
    """Unique ``x > 0`` where ``c1 - b1 x`` meets ``[(c2 sqrt(x) - b2)_+]^2``.

    The difference of the two sides is continuous and strictly decreasing on
    ``[0, c1/b1]``, positive at 0 and non-positive at the right end, so plain
    bisection brackets the root down to adjacent doubles.
    """
    if not (b1 > 0 and c1 > 0 and c2 > 0 and b2 >= 0):
        raise ValueError(f"need b1, c1, c2 > 0 and b2 >= 0; got b1={b1}, c1={c1}, b2={b2}, c2={c2}")

    def diff(x: float) -> float:
        hinge = max(c2 * math.sqrt(x) - b2, 0.0)
        return (c1 - b1 * x) - hinge * hinge

    lo, hi = 0.0, c1 / b1
    if diff(hi) >= 0.0:
        return hi
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if diff(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo if abs(diff(lo)) <= abs(diff(hi)) else hi


def crossing_coefficients(s, j: int, variant: str):
    """``(b1, c1, b2, c2)`` of the alpha equation for CR-C (``"C"``) or CR-A (``"A"``)."""
    s = as_sorted(s)
    if not 2 <= j <= s.K - 1:
        raise ValueError(f"alpha_j is defined for 2 <= j <= K-1 = {s.K - 1}, got {j}")
    offset = math.sqrt(1.0 / ((j + 1) * log_bar(j + 1)))
    terms = psi_phi_zeta(s, j)
    if variant == "C":
        xi = xi_j(s, j)
        if xi <= 0:
            raise ValueError("degenerate instance: xi_j = 0")
        slope = 2.0 * xi / (j * log_bar(j))
        return slope, slope, offset, 1.0 + terms.zeta
    if variant == "A":
        if terms.psi <= 0:
            raise ValueError("degenerate instance: psi_j = 0")
        slope = terms.psi / (j * log_bar(j))
        shrink = math.sqrt(j / (j + 1))
        return slope, slope, offset * shrink, (1.0 + terms.phi) * shrink
    raise ValueError(f"variant must be 'C' or 'A', got {variant!r}")


def alpha_j(s, j: int, variant: str) -> float:
    return solve_crossing(*crossing_coefficients(s, j, variant))


# -- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class ExponentTerms:
    j: int
    xi: float
    xi_bar: float
    psi: float
    psi_bar: float
    zeta: float
    phi: float
    alpha_crc: Optional[float] = None
    alpha_cra: Optional[float] = None
    gamma: Optional[float] = None


def exponent_terms(s, j: int, with_gamma: bool = False) -> ExponentTerms:
    s = as_sorted(s)
    _check_j(s, j)
    psi = psi_phi_zeta(s, j)
    alphas = (None, None)
    if j < s.K:
        alphas = (alpha_j(s, j, "C"), alpha_j(s, j, "A"))
    return ExponentTerms(
        j=j,
        xi=xi_j(s, j),
        xi_bar=xi_bar_j(s, j),
        psi=psi.psi,
        psi_bar=psi.psi_bar,
        zeta=psi.zeta,
        phi=psi.phi,
        alpha_crc=alphas[0],
        alpha_cra=alphas[1],
        gamma=gamma_j_kl(s, j) if with_gamma else None,
    )


@dataclass
class GuaranteeReport:
    """Asymptotic exponent ``rate`` and ``exp(-T * rate)`` evaluated at chosen budgets.

    The bound values treat the liminf exponent as if it held at finite ``T``;
    they are the usual way of quoting these guarantees, not finite-sample
    certificates.
    """

    algorithm: str
    rate: float
    per_j: List[ExponentTerms]
    contributions: Dict[int, float]
    bound_at_T: Dict[int, float] = field(default_factory=dict)

    @property
    def j_min(self) -> int:
        return min(self.contributions, key=lambda j: (self.contributions[j], j))

    def with_budgets(self, budgets: Iterable[int]) -> "GuaranteeReport":
        for T in budgets:
            self.bound_at_T[int(T)] = math.exp(-T * self.rate)
        return self

    def to_dict(self) -> dict:
        per_j = []
        for terms in self.per_j:
            row = {k: v for k, v in asdict(terms).items() if v is not None}
            row["contribution"] = self.contributions[terms.j]
            per_j.append(row)
        return {
            "algorithm": self.algorithm,
            "rate": self.rate,
            "per_j": per_j,
            "bounds": {str(T): b for T, b in self.bound_at_T.items()},
        }


def _report(name: str, s: SortedInstance, contributions: Dict[int, float], with_gamma=False) -> GuaranteeReport:
    per_j = [exponent_terms(s, j, with_gamma) for j in range(2, s.K + 1)]
    return GuaranteeReport(name, min(contributions.values()), per_j, contributions)


def rate_sr_pinsker(s) -> GuaranteeReport:
    s = as_sorted(s)
    lbK = log_bar(s.K)
    contrib = {j: 2.0 * xi_j(s, j) / (j * lbK) for j in range(2, s.K + 1)}
    return _report("SR-pinsker", s, contrib)


def rate_sr_kl(s, enumerate_J: bool = False) -> GuaranteeReport:
    s = as_sorted(s)
    lbK = log_bar(s.K)
    contrib = {j: gamma_j_kl(s, j, enumerate_J) / (j * lbK) for j in range(2, s.K + 1)}
    return _report("SR-kl", s, contrib, with_gamma=True)


def _cr_contributions(s: SortedInstance, variant: str) -> Dict[int, float]:
    K = s.K
    lbK = log_bar(K)
    out = {}
    for j in range(2, K + 1):
        if variant == "C":
            base, capped = xi_j(s, j), xi_bar_j(s, j)
        else:
            terms = psi_phi_zeta(s, j)
            base, capped = terms.psi, terms.psi_bar
        boosted = 0.0
        if j != K:
            boosted = base * log_bar(j + 1) * (1.0 - alpha_j(s, j, variant)) / log_bar(j)
        out[j] = 2.0 * min(max(boosted, base), capped) / (j * lbK)
    return out


def rate_crc(s) -> GuaranteeReport:
    s = as_sorted(s)
    return _report("CR-C", s, _cr_contributions(s, "C"))


def rate_cra(s) -> GuaranteeReport:
    s = as_sorted(s)
    return _report("CR-A", s, _cr_contributions(s, "A"))


def audibert_contributions(s: SortedInstance) -> Dict[int, float]:
    lbK = log_bar(s.K)
    return {j: (s.mean(0) - s.mean(j - 1)) ** 2 / (j * lbK) for j in range(2, s.K + 1)}


def rate_audibert(s) -> float:
    """Hoeffding-based SR guarantee: min_j (mu_1 - mu_j)^2 / (j log_bar K)."""
    return min(audibert_contributions(as_sorted(s)).values())


def barrier_contributions(s: SortedInstance) -> Dict[int, float]:
    lbK = log_bar(s.K)
    return {j: pool_kl(s.mean(0), [s.mean(j - 1)]) / (j * lbK) for j in range(2, s.K + 1)}


def rate_barrier(s) -> float:
    """Two-arm KL relaxation: min_j inf_{l1 <= lj} d(l1, mu_1) + d(lj, mu_j), over j log_bar K."""
    return min(barrier_contributions(as_sorted(s)).values())


def gamma_j_kl(s, j: int, enumerate_J: bool = False) -> float:
    """KL analogue of ``2 xi_j``, minimized over the j-subsets containing the best arm.

    By default only the top-j arms are used (closer means make the constraint
    cheaper); ``enumerate_J=True`` checks every subset.
    """
    s = as_sorted(s)
    _check_j(s, j)
    top = s.mean(0)
    if not enumerate_J:
        return pool_kl(top, s.sorted_means[1:j])
    n = math.comb(s.K - 1, j - 1)
    if n > MAX_ENUMERATION:
        raise ValueError(f"{n} subsets exceed the enumeration limit {MAX_ENUMERATION}")
    return min(
        pool_kl(top, [s.mean(i) for i in subset])
        for subset in itertools.combinations(range(1, s.K), j - 1)
    )


def guarantee_report(s, algorithm: str, budgets: Sequence[int] = ()) -> GuaranteeReport:
    """Report for any of :data:`ALGORITHMS` (case-insensitive; ``sr`` means ``SR-pinsker``)."""
    s = as_sorted(s)
    name = resolve_algorithm(algorithm)
    if name == "SR-pinsker":
        report = rate_sr_pinsker(s)
    elif name == "SR-kl":
        report = rate_sr_kl(s)
    elif name == "CR-C":
        report = rate_crc(s)
    elif name == "CR-A":
        report = rate_cra(s)
    elif name == "Audibert":
        report = _report(name, s, audibert_contributions(s))
    else:
        report = _report(name, s, barrier_contributions(s))
    return report.with_budgets(budgets)


_ALIASES = {
    "sr": "SR-pinsker", "srpinsker": "SR-pinsker", "srkl": "SR-kl",
    "crc": "CR-C", "cra": "CR-A", "audibert": "Audibert", "barrier": "Barrier",
}


def resolve_algorithm(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key not in _ALIASES:
        raise ValueError(f"unknown guarantee {name!r}; expected one of sr, sr-kl, crc, cra, audibert, barrier")
    return _ALIASES[key]


# -- gap-constrained programs -------------------------------------------------

def gap_program_value(s, j: int, beta: float, variant: str) -> float:
    """``beta`` times the least-squares distance to an instance whose arm 1 trails
    arms 2..j by the margin ``G(beta)`` (variant C: trails each of them; variant A:
    trails their average).

    Variant A is the closed form of the KKT solution. Variant C keeps the
    ``[0, 1]`` box: with ``x = lambda_1`` the optimal ``lambda_k`` is
    ``max(mu_k, x + G)``, a convex function of ``x`` minimized over
    ``[0, 1 - G]`` by clipping the unconstrained pooled minimizer. It is
    infinite when ``G > 1`` (no feasible point).
    """
    s = as_sorted(s)
    _check_j(s, j)
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    G = g_threshold(beta)
    mu1 = s.mean(0)
    rest = s.sorted_means[1:j]
    if variant == "A":
        return (j - 1) * beta / j * (mu1 - math.fsum(rest) / (j - 1) + G) ** 2
    if variant != "C":
        raise ValueError(f"variant must be 'C' or 'A', got {variant!r}")
    if G > 1.0:
        return math.inf
    pool = [mu1]
    for v in sorted(m - G for m in rest):
        if v < math.fsum(pool) / len(pool):
            pool.append(v)
        else:
            break
    x = min(max(math.fsum(pool) / len(pool), 0.0), 1.0 - G)
    return beta * ((x - mu1) ** 2 + math.fsum((max(m, x + G) - m) ** 2 for m in rest))


def gap_program_numeric(s, j: int, beta: float, variant: str) -> float:
    """Same program as :func:`gap_program_value`, solved by SLSQP over all ``j`` coordinates.

    Variant C keeps the ``[0, 1]`` box on every coordinate; variant A is the
    unboxed program whose KKT point gives the closed form. Used to cross-check
    the closed forms.
    """
    s = as_sorted(s)
    _check_j(s, j)
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    G = g_threshold(beta)
    mu = np.array(s.sorted_means[:j])
    if variant == "A":
        a = np.r_[1.0, -np.ones(j - 1) / (j - 1)]
        constraints = [{"type": "ineq", "fun": lambda x: -(a @ x) - G, "jac": lambda x: -a}]
        bounds = None
    elif variant == "C":
        if G > 1.0:
            return math.inf
        rows = np.zeros((j - 1, j))
        rows[:, 0] = -1.0
        rows[np.arange(j - 1), np.arange(1, j)] = 1.0
        constraints = [{"type": "ineq", "fun": lambda x: rows @ x - G, "jac": lambda x: rows}]
        bounds = [(0.0, 1.0)] * j
    else:
        raise ValueError(f"variant must be 'C' or 'A', got {variant!r}")
    res = minimize(
        lambda x: beta * float(np.sum((x - mu) ** 2)),
        mu.copy(),
        jac=lambda x: 2.0 * beta * (x - mu),
        bounds=bounds,
        constraints=constraints,
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    return float(res.fun)


# -- brute-force oracle -------------------------------------------------------

def xi_oracle(s, j: int, constraint_set: Optional[Iterable[int]] = None) -> float:
    """Grid search for ``min sum_{k in {1} u S} (lambda_k - mu_k)^2`` s.t. ``lambda_1 <= lambda_k``.

    ``constraint_set`` holds 1-based sorted arm indices (``K + 1`` is the
    virtual zero arm, and index 1 is accepted and ignored since arm 1 is always
    in the objective); default ``{2, ..., j}``. For a fixed ``lambda_1 = x``
    the best feasible ``lambda_k`` is ``max(mu_k, x)``, so the search runs over
    ``x`` alone: a 1e-3 grid on [0, 1], then a 1e-6 grid around the best cell.
    Independent of the pooling solver; meant as ground truth in tests.
    """
    s = as_sorted(s)
    if constraint_set is None:
        _check_j(s, j)
        constraint_set = range(2, j + 1)
    idx = sorted(set(constraint_set) - {1})
    for i in idx:
        if not 2 <= i <= s.K + 1:
            raise ValueError(f"constraint index {i} outside 1..{s.K + 1}")
    if len(idx) > MAX_ORACLE_ARMS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_ARMS} constrained arms, got {len(idx)}")
    mu1 = s.mean(0)
    others = np.array([s.mean(i - 1) for i in idx])

    def objective(x: np.ndarray) -> np.ndarray:
        lifted = np.maximum(others[None, :], x[:, None]) - others[None, :]
        return (x - mu1) ** 2 + (lifted * lifted).sum(axis=1)

    coarse = np.linspace(0.0, 1.0, 1001)
    best_x = coarse[np.argmin(objective(coarse))]
    lo = max(best_x - 1e-3, 0.0)
    fine = lo + 1e-6 * np.arange(2001)
    fine = fine[fine <= 1.0]
    return float(objective(fine).min())


def crossing_oracle(b1: float, c1: float, b2: float, c2: float, points: int = 10_001) -> float:
    """Sign-change grid search for the root that :func:`solve_crossing` finds.

    Scans ``[0, c1/b1]`` on a uniform grid, keeps the cell where
    ``(c1 - b1 x) - [(c2 sqrt(x) - b2)_+]^2`` changes sign and rescans that
    cell, until the cell is below ``1e-15`` relative width.
    """

    def diff(x: float) -> float:
        hinge = max(c2 * math.sqrt(x) - b2, 0.0)
        return (c1 - b1 * x) - hinge * hinge

    lo, hi = 0.0, c1 / b1
    if diff(hi) >= 0.0:
        return hi
    while hi - lo > 1e-15 * max(hi, 1e-300):
        step = (hi - lo) / (points - 1)
        grid = [lo + i * step for i in range(points)]
        grid[-1] = hi
        k = next(i for i, x in enumerate(grid) if diff(x) <= 0.0)
        new_lo, new_hi = grid[k - 1], grid[k]
        if (new_lo, new_hi) == (lo, hi):
            break
        lo, hi = new_lo, new_hi
    return 0.5 * (lo + hi)


def cr_rate_oracle(s, variant: str) -> float:
    """CR-C / CR-A exponent rebuilt from brute-force pieces.

    ``xi`` values come from :func:`xi_oracle`, the ``psi`` family is summed
    directly from the means, and every ``alpha`` from :func:`crossing_oracle`
    with its coefficients written out here rather than taken from
    :func:`crossing_coefficients`.
    """
    s = as_sorted(s)
    K = s.K
    mu = [s.mean(i) for i in range(K + 1)]
    lb = [0.0] + [0.5 + sum(1.0 / k for k in range(2, m + 1)) for m in range(1, K + 2)]
    best = math.inf
    for j in range(2, K + 1):
        if variant == "C":
            base = xi_oracle(s, j)
            capped = xi_oracle(s, j, [*range(2, j), j + 1])
            spread = mu[j - 1] - mu[j]
            b1 = c1 = 2.0 * base / (j * lb[j])
            shrink = 1.0
        elif variant == "A":
            avg = sum(mu[1:j]) / (j - 1)
            avg_bar = (sum(mu[1 : j - 1]) + mu[j]) / (j - 1)
            base = (j - 1) / j * (mu[0] - avg) ** 2
            capped = (j - 1) / j * (mu[0] - avg_bar) ** 2
            spread = sum(mu[:j]) / j - mu[j]
            b1 = c1 = base / (j * lb[j])
            shrink = math.sqrt(j / (j + 1))
        else:
            raise ValueError(f"variant must be 'C' or 'A', got {variant!r}")
        boosted = 0.0
        if j != K:
            b2 = shrink * math.sqrt(1.0 / ((j + 1) * lb[j + 1]))
            alpha = crossing_oracle(b1, c1, b2, shrink * (1.0 + spread))
            boosted = base * lb[j + 1] * (1.0 - alpha) / lb[j]
        best = min(best, 2.0 * min(max(boosted, base), capped) / (j * lb[K]))
    return best
