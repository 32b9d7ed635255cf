"""Value iteration as a recurrent convolution.

One Bellman backup is a same-size convolution of the value image with the
flipped transition filters, a fixed reward bias, and a max-pool across the
action channel. The naive four-loop Bellman backup is kept alongside as an
oracle and as the baseline for the timing benchmark.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

TIE_TOL = 1e-9


@dataclass
class ViResult:
    v: np.ndarray
    q: np.ndarray
    policy: np.ndarray
    iterations: int
    final_residual: float
    residuals: List[float] = field(default_factory=list)


def flip_transition(T: np.ndarray) -> np.ndarray:
    """Rotate every filter by 180 degrees."""
    return np.ascontiguousarray(np.asarray(T)[:, ::-1, ::-1])


def same_conv(image: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Zero-padded same-size convolution of one image with a bank of kernels.

    ``out[k, i, j] = sum_{u,v} kernels[k, u + w, v + w] * image[i - u, j - v]``
    with out-of-grid image entries treated as zero. The loops run over the
    ``nt x nt`` window only; each pass updates every kernel channel at once.
    """
    nk, nt, _ = kernels.shape
    w = nt // 2
    nd = image.shape[0]
    padded = np.pad(image, w)
    out = np.zeros((nk, nd, nd))
    tmp = np.empty_like(out)
    for m in range(nt):
        r0 = 2 * w - m
        for n in range(nt):
            c0 = 2 * w - n
            np.multiply(kernels[:, m, n, None, None], padded[None, r0:r0 + nd, c0:c0 + nd], out=tmp)
            out += tmp
    return out


def _same_conv_parallel(image: np.ndarray, kernels: np.ndarray, pool: ThreadPoolExecutor) -> np.ndarray:
    planes = pool.map(lambda a: same_conv(image, kernels[a:a + 1])[0], range(kernels.shape[0]))
    return np.stack(list(planes))


def _check_shapes(v, T, R):
    v, T, R = np.asarray(v, float), np.asarray(T, float), np.asarray(R, float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError(f"value function must be square, got {v.shape}")
    if T.ndim != 3 or T.shape[1] != T.shape[2] or T.shape[1] % 2 == 0:
        raise ValueError(f"transition model must be (na, nt, nt) with odd nt, got {T.shape}")
    if R.shape != (T.shape[0],) + v.shape:
        raise ValueError(f"reward shape {R.shape} does not match (na, nd, nd) = {(T.shape[0],) + v.shape}")
    if T.shape[1] > v.shape[0]:
        raise ValueError(f"filter side {T.shape[1]} exceeds grid side {v.shape[0]}")
    return v, T, R


def conv_value_update(v, T_flipped, R, gamma, pool: Optional[ThreadPoolExecutor] = None):
    """One Bellman backup; ``T_flipped`` must already be rotated by :func:`flip_transition`.

    Returns ``(v_next, q_next)``. Passing a thread pool computes the per-action
    planes concurrently.
    """
    v, T_flipped, R = _check_shapes(v, T_flipped, R)
    # The VI sum runs over successors s' = s + d, i.e. a correlation with T.
    # Convolving with the flipped filter is the same thing.
    if pool is None:
        expected = same_conv(v, T_flipped)
    else:
        expected = _same_conv_parallel(v, T_flipped, pool)
    q_next = R + gamma * expected
    return q_next.max(axis=0), q_next


def naive_value_update(v, T, R, gamma, return_q: bool = False):
    """Bellman backup by direct enumeration of states, actions and successors.

    Successors that fall off the grid contribute nothing (matching zero padding).
    """
    v, T, R = _check_shapes(v, T, R)
    na, nt, _ = T.shape
    w = nt // 2
    nd = v.shape[0]
    vl, Tl, Rl = v.tolist(), T.tolist(), R.tolist()
    q = [[[0.0] * nd for _ in range(nd)] for _ in range(na)]
    v_next = [[0.0] * nd for _ in range(nd)]
    for i in range(nd):
        for j in range(nd):
            best = -math.inf
            for a in range(na):
                total = 0.0
                Ta = Tl[a]
                for u in range(-w, w + 1):
                    p = i + u
                    if p < 0 or p >= nd:
                        continue
                    row, trow = vl[p], Ta[u + w]
                    for dv in range(-w, w + 1):
                        qq = j + dv
                        if 0 <= qq < nd:
                            total += trow[dv + w] * row[qq]
                value = Rl[a][i][j] + gamma * total
                q[a][i][j] = value
                if value > best:
                    best = value
            v_next[i][j] = best
    v_next = np.array(v_next)
    if return_q:
        return v_next, np.array(q)
    return v_next


def greedy_policy(q: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Argmax over actions; values within ``tol`` of the best count as ties, lowest index wins."""
    q = np.asarray(q)
    return np.argmax(q >= q.max(axis=0) - tol, axis=0).astype(np.int64)


def default_max_iter(gamma: float) -> int:
    return 10 * math.ceil(1.0 / (1.0 - gamma))


def value_iterate(
    T,
    R,
    gamma: float,
    epsilon: float = 1e-4,
    max_iter: Optional[int] = None,
    v0: Optional[np.ndarray] = None,
    pool: Optional[ThreadPoolExecutor] = None,
) -> ViResult:
    """Iterate the convolutional Bellman backup until the max-norm residual drops below ``epsilon``.

    Starts from ``v0`` (zeros by default). Non-convergence is not an error; the
    last residual is reported in ``final_residual``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_iter is None:
        max_iter = default_max_iter(gamma)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    R = np.asarray(R, float)
    T_flipped = flip_transition(T)
    v = np.zeros(R.shape[1:]) if v0 is None else np.array(v0, dtype=float)
    residuals = []
    q = None
    for _ in range(max_iter):
        v_next, q = conv_value_update(v, T_flipped, R, gamma, pool=pool)
        residuals.append(float(np.max(np.abs(v_next - v))))
        v = v_next
        if residuals[-1] < epsilon:
            break
    return ViResult(v, q, greedy_policy(q), len(residuals), residuals[-1], residuals)


# -- timing benchmark ------------------------------------------------------------


def _time_ns(fn, min_total_ns: int = 20_000_000) -> float:
    """Wall-clock per call, repeating short calls until the batch is long enough to time."""
    calls = 1
    while True:
        t0 = time.perf_counter_ns()
        for _ in range(calls):
            fn()
        elapsed = time.perf_counter_ns() - t0
        if elapsed >= min_total_ns or calls >= 1 << 16:
            return elapsed / calls
        calls *= 4 if elapsed * 4 < min_total_ns else 2


def benchmark_iteration(
    grid_sizes: Sequence[int],
    na: int = 9,
    w: int = 1,
    repetitions: int = 3,
    seed: int = 0,
    parallel: bool = False,
) -> List[dict]:
    """Median wall-clock time of one Bellman backup, convolutional vs naive, per grid size."""
    nt = 2 * w + 1
    rng = np.random.default_rng(seed)
    pool = ThreadPoolExecutor() if parallel else None
    rows = []
    try:
        for nd in grid_sizes:
            if nd < nt:
                raise ValueError(f"grid size {nd} is smaller than the filter side {nt}")
            T = rng.uniform(size=(na, nt, nt))
            T /= T.sum(axis=(1, 2), keepdims=True)
            R = rng.normal(size=(na, nd, nd))
            v = rng.normal(size=(nd, nd))
            T_flipped = flip_transition(T)
            conv = [_time_ns(lambda: conv_value_update(v, T_flipped, R, 0.95, pool=pool))
                    for _ in range(repetitions)]
            naive = [_time_ns(lambda: naive_value_update(v, T, R, 0.95), min_total_ns=0)
                     for _ in range(repetitions)]
            rows.append({
                "nd": nd,
                "states": nd * nd,
                "conv_ns": int(statistics.median(conv)),
                "naive_ns": int(statistics.median(naive)),
            })
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


def loglog_slope(rows: Iterable[dict], key: str = "conv_ns") -> float:
    """Least-squares slope of log(time) against log(state count)."""
    rows = list(rows)
    x = np.log([r["states"] for r in rows])
    y = np.log([r[key] for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def write_benchmark_csv(rows: Iterable[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=["nd", "states", "conv_ns", "naive_ns"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
