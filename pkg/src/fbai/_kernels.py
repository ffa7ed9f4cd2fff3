"""Compiled single-run loops mirroring :mod:`fbai.policies` decision for decision.

Each kernel consumes one uniform per pull (``u[n]`` for the ``n``-th pull, reward
``u[n] < mean``), exactly like :func:`fbai.policies.run_policy`, and writes the
final counts and the discard log into caller-provided buffers. Returns the
recommended arm and the number of logged discards.

SR, CR and SH keep the candidate list sorted and use the fact that pulls are
round-robin inside it: ``cand[:pos]`` have ``c + 1`` pulls and ``cand[pos:j]``
have ``c``. That makes the least-pulled selection O(1).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_CODES = {"SR": 0, "CR-C": 1, "CR-A": 2, "SH": 3, "UGapE": 4}


@njit(cache=True)
def _mean(sums, counts, k):
    if counts[k] == 0:
        return 0.0
    return sums[k] / counts[k]


@njit(cache=True)
def _worst_pos(cand, j, sums, counts):
    best = 0
    best_val = _mean(sums, counts, cand[0])
    for i in range(1, j):
        v = _mean(sums, counts, cand[i])
        if v < best_val:
            best_val = v
            best = i
    return best


@njit(cache=True)
def _best_arm(cand, j, sums, counts):
    best = cand[0]
    best_val = _mean(sums, counts, best)
    for i in range(1, j):
        v = _mean(sums, counts, cand[i])
        if v > best_val:
            best_val = v
            best = cand[i]
    return best


@njit(cache=True)
def _remove(cand, j, p):
    for i in range(p, j - 1):
        cand[i] = cand[i + 1]


@njit(cache=True)
def run_sr(means, T, thresholds, u, counts, log_round, log_arm):
    K = means.shape[0]
    cand = np.arange(K)
    sums = np.zeros(K)
    counts[:] = 0
    j = K
    pos = 0
    c = 0
    n_log = 0
    for t in range(T):
        if j > 2 and c >= thresholds[j]:
            p = _worst_pos(cand, j, sums, counts)
            log_round[n_log] = t + 1
            log_arm[n_log] = cand[p]
            n_log += 1
            _remove(cand, j, p)
            j -= 1
            if p < pos:
                pos -= 1
            if pos == j:
                pos = 0
                c += 1
        arm = cand[pos]
        if u[t] < means[arm]:
            sums[arm] += 1.0
        counts[arm] += 1
        pos += 1
        if pos == j:
            pos = 0
            c += 1
    return _best_arm(cand, j, sums, counts), n_log


@njit(cache=True)
def run_cr(means, T, aggressive, warmup, logbar, u, counts, log_round, log_arm):
    K = means.shape[0]
    cand = np.arange(K)
    sums = np.zeros(K)
    counts[:] = 0
    j = K
    pos = 0
    c = 0
    out_max = 0
    out_sum = 0
    n_log = 0
    for t in range(T):
        if j > 2 and t + 1 > warmup and pos == 0 and c > out_max:
            p = _worst_pos(cand, j, sums, counts)
            worst_val = _mean(sums, counts, cand[p])
            if aggressive:
                total = 0.0
                for i in range(j):
                    if i != p:
                        total += _mean(sums, counts, cand[i])
                gap = total / (j - 1) - worst_val
            else:
                lo = np.inf
                for i in range(j):
                    if i != p:
                        v = _mean(sums, counts, cand[i])
                        if v < lo:
                            lo = v
                gap = lo - worst_val
            beta = (c * j * logbar[j]) / (T - out_sum)
            if gap >= 1.0 / math.sqrt(beta) - 1.0:
                victim = cand[p]
                log_round[n_log] = t + 1
                log_arm[n_log] = victim
                n_log += 1
                _remove(cand, j, p)
                j -= 1
                out_sum += counts[victim]
                if counts[victim] > out_max:
                    out_max = counts[victim]
        arm = cand[pos]
        if u[t] < means[arm]:
            sums[arm] += 1.0
        counts[arm] += 1
        pos += 1
        if pos == j:
            pos = 0
            c += 1
    return _best_arm(cand, j, sums, counts), n_log


@njit(cache=True)
def run_sh(means, T, n_phases, u, counts, log_round, log_arm):
    K = means.shape[0]
    cand = np.arange(K)
    keep_buf = np.empty(K, dtype=np.int64)
    sums = np.zeros(K)
    counts[:] = 0
    j = K
    pos = 0
    c = 0
    n_log = 0
    phase = 0
    phase_pulls = T // (j * n_phases)
    base = 0
    for t in range(T):
        while phase < n_phases and pos == 0 and c - base >= phase_pulls:
            keep = (j + 1) // 2
            # rank by mean descending, lower index first on ties (stable insertion sort)
            for i in range(j):
                keep_buf[i] = cand[i]
            for i in range(1, j):
                x = keep_buf[i]
                vx = _mean(sums, counts, x)
                q = i - 1
                while q >= 0 and _mean(sums, counts, keep_buf[q]) < vx:
                    keep_buf[q + 1] = keep_buf[q]
                    q -= 1
                keep_buf[q + 1] = x
            survivors = np.sort(keep_buf[:keep])
            for i in range(j):
                arm = cand[i]
                dropped = True
                for s in range(keep):
                    if survivors[s] == arm:
                        dropped = False
                if dropped:
                    log_round[n_log] = t + 1
                    log_arm[n_log] = arm
                    n_log += 1
            for s in range(keep):
                cand[s] = survivors[s]
            j = keep
            phase += 1
            if phase < n_phases:
                phase_pulls = T // (j * n_phases)
                base = c
        arm = cand[pos]
        if u[t] < means[arm]:
            sums[arm] += 1.0
        counts[arm] += 1
        pos += 1
        if pos == j:
            pos = 0
            c += 1
    return _best_arm(cand, j, sums, counts), n_log


@njit(cache=True)
def run_ugape(means, T, scale, clip, u, counts, log_round, log_arm):
    K = means.shape[0]
    sums = np.zeros(K)
    counts[:] = 0
    mu = np.empty(K)
    width = np.empty(K)
    upper = np.empty(K)
    best_index = np.inf
    best_arm = -1
    for t in range(T):
        arm = -1
        for k in range(K):
            if counts[k] == 0:
                arm = k
                break
        if arm < 0:
            for k in range(K):
                mu[k] = sums[k] / counts[k]
            top = 0
            for k in range(1, K):
                if mu[k] > mu[top]:
                    top = k
            second = -np.inf
            for k in range(K):
                if k != top and mu[k] > second:
                    second = mu[k]
            hard = 0.0
            for k in range(K):
                if k == top:
                    gap = mu[top] - second
                else:
                    gap = mu[top] - mu[k]
                gap = max(gap, clip)
                hard += 1.0 / (gap * gap)
            a = scale * (T - K) / hard
            for k in range(K):
                width[k] = math.sqrt(max(a, 0.0) / counts[k])
                upper[k] = mu[k] + width[k]
            utop = 0
            for k in range(1, K):
                if upper[k] > upper[utop]:
                    utop = k
            urun = -1
            for k in range(K):
                if k != utop and (urun < 0 or upper[k] > upper[urun]):
                    urun = k
            J = -1
            bJ = np.inf
            for k in range(K):
                other = upper[urun] if k == utop else upper[utop]
                b = other - (mu[k] - width[k])
                if b < bJ:
                    bJ = b
                    J = k
            if bJ < best_index:
                best_index = bJ
                best_arm = J
            uarm = -1
            for k in range(K):
                if k != J and (uarm < 0 or upper[k] > upper[uarm]):
                    uarm = k
            first = min(J, uarm)
            second_arm = max(J, uarm)
            arm = first if width[first] >= width[second_arm] else second_arm
        if u[t] < means[arm]:
            sums[arm] += 1.0
        counts[arm] += 1
    if best_arm < 0:
        cand = np.arange(K)
        best_arm = _best_arm(cand, K, sums, counts)
    return best_arm, 0


@njit(cache=True)
def count_errors_sr(means, T, thresholds, U, best):
    K = means.shape[0]
    counts = np.empty(K, dtype=np.int64)
    lr = np.empty(K, dtype=np.int64)
    la = np.empty(K, dtype=np.int64)
    errors = 0
    for r in range(U.shape[0]):
        rec, _ = run_sr(means, T, thresholds, U[r], counts, lr, la)
        if rec != best:
            errors += 1
    return errors


@njit(cache=True)
def count_errors_cr(means, T, aggressive, warmup, logbar, U, best):
    K = means.shape[0]
    counts = np.empty(K, dtype=np.int64)
    lr = np.empty(K, dtype=np.int64)
    la = np.empty(K, dtype=np.int64)
    errors = 0
    for r in range(U.shape[0]):
        rec, _ = run_cr(means, T, aggressive, warmup, logbar, U[r], counts, lr, la)
        if rec != best:
            errors += 1
    return errors


@njit(cache=True)
def count_errors_sh(means, T, n_phases, U, best):
    K = means.shape[0]
    counts = np.empty(K, dtype=np.int64)
    lr = np.empty(K, dtype=np.int64)
    la = np.empty(K, dtype=np.int64)
    errors = 0
    for r in range(U.shape[0]):
        rec, _ = run_sh(means, T, n_phases, U[r], counts, lr, la)
        if rec != best:
            errors += 1
    return errors


@njit(cache=True)
def count_errors_ugape(means, T, scale, clip, U, best):
    K = means.shape[0]
    counts = np.empty(K, dtype=np.int64)
    lr = np.empty(K, dtype=np.int64)
    la = np.empty(K, dtype=np.int64)
    errors = 0
    for r in range(U.shape[0]):
        rec, _ = run_ugape(means, T, scale, clip, U[r], counts, lr, la)
        if rec != best:
            errors += 1
    return errors
