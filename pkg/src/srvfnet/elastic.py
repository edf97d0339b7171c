"""Dynamic-programming elastic matching and the Karcher mean template.

``dp_align`` searches monotone lattice paths from (0, 0) to (T-1, T-1) whose
steps ``(a, b)`` satisfy ``1 <= a, b <= slope_window``. The warp on a step
is linear with slope ``b / a``. Interior columns of a step see that slope;
a column on a path vertex sees the average of the slopes on either side,
matching :func:`srvfnet.diffeo.gamma_dot`. Each column contributes its
trapezoidal weight times ``(qf - sqrt(gamma') * qg(gamma))**2``, so a path's
cost is exactly ``||qf - warp_srvf(qg, gamma)||**2``. Because a vertex cost
depends on the incoming step, the table is indexed by (column, row, last
step).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .diffeo import warp_srvf
from .exceptions import DimensionError, PreconditionError
from .functional import check_unit, geodesic_distance, normalize, trapezoid_weights


@dataclass(frozen=True)
class DpConfig:
    slope_window: int = 3

    def validate(self, T):
        if not 1 <= self.slope_window <= T / 2:
            raise PreconditionError(f"slope_window must be in [1, T/2], got {self.slope_window} for T={T}")


@dataclass
class KarcherResult:
    mean: np.ndarray
    warps: np.ndarray
    objective_trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


@nb.njit(cache=True, nogil=True)
def _interior_cost(qf, qg, wt, i0, j0, a, b):
    T = qf.shape[0]
    slope = b / a
    root = np.sqrt(slope)
    total = 0.0
    for k in range(1, a):
        pos = j0 + k * slope
        idx = int(np.floor(pos))
        if idx > T - 2:
            idx = T - 2
        frac = pos - idx
        val = qg[idx] + frac * (qg[idx + 1] - qg[idx])
        d = qf[i0 + k] - root * val
        total += wt[i0 + k] * d * d
    return total


@nb.njit(cache=True, nogil=True)
def _dp_table(qf, qg, wt, L):
    """Forward pass; state ``s < L*L`` is the step ``(s // L + 1, s % L + 1)``, ``L*L`` the start."""
    T = qf.shape[0]
    S = L * L
    ratio = np.empty(S)
    for s in range(S):
        ratio[s] = (s % L + 1) / (s // L + 1)
    cost = np.full((T, T, S + 1), np.inf)
    prev = np.full((T, T, S + 1), -1, dtype=np.int64)
    cost[0, 0, S] = 0.0
    for i0 in range(T - 1):
        for j0 in range(T - 1):
            reachable = False
            for s in range(S + 1):
                if cost[i0, j0, s] < np.inf:
                    reachable = True
                    break
            if not reachable:
                continue
            for a in range(1, L + 1):
                if i0 + a > T - 1:
                    break
                for b in range(1, L + 1):
                    if j0 + b > T - 1:
                        break
                    r = b / a
                    inner = _interior_cost(qf, qg, wt, i0, j0, a, b)
                    t = (a - 1) * L + (b - 1)
                    for s in range(S + 1):
                        e = cost[i0, j0, s]
                        if e == np.inf:
                            continue
                        g = r if s == S else 0.5 * (ratio[s] + r)
                        d = qf[i0] - np.sqrt(g) * qg[j0]
                        c = e + wt[i0] * d * d + inner
                        if c < cost[i0 + a, j0 + b, t]:
                            cost[i0 + a, j0 + b, t] = c
                            prev[i0 + a, j0 + b, t] = s
    best = np.inf
    best_s = -1
    for s in range(S):
        e = cost[T - 1, T - 1, s]
        if e == np.inf:
            continue
        d = qf[T - 1] - np.sqrt(ratio[s]) * qg[T - 1]
        c = e + wt[T - 1] * d * d
        if c < best:
            best = c
            best_s = s
    return best, best_s, prev


def _backtrack(prev, state, L, T):
    gamma = np.empty(T)
    i = j = T - 1
    gamma[T - 1] = 1.0
    while i > 0:
        if state < 0 or state == L * L:
            raise RuntimeError("no admissible DP path")
        a, b = state // L + 1, state % L + 1
        i0, j0 = i - a, j - b
        for k in range(a):
            gamma[i0 + k] = (j0 + k * b / a) / (T - 1)
        state = prev[i, j, state]
        i, j = i0, j0
    gamma[0] = 0.0
    return gamma


def dp_align(qf, qg, config=None):
    """Warp ``gamma`` minimizing ``||qf - sqrt(gamma') (qg o gamma)||**2``.

    Returns ``(gamma, cost)`` where cost is the squared chord distance
    achieved. The identity is always admissible, so the cost never exceeds
    ``||qf - qg||**2``.
    """
    config = config or DpConfig()
    qf = np.ascontiguousarray(qf, dtype=float)
    qg = np.ascontiguousarray(qg, dtype=float)
    if qf.ndim != 1 or qf.shape != qg.shape:
        raise DimensionError(f"expected two equal-length 1-D SRVFs, got {qf.shape} and {qg.shape}")
    T = qf.shape[0]
    config.validate(T)
    check_unit(qf, "qf")
    check_unit(qg, "qg")
    L = int(config.slope_window)
    cost, state, prev = _dp_table(qf, qg, trapezoid_weights(T), L)
    return _backtrack(prev, state, L, T), float(cost)


def dp_align_many(template, Q, config=None, workers=1):
    """Align every row of ``Q`` to ``template``; returns ``(warps, costs)``.

    Rows are independent; ``workers > 1`` fans out over a thread pool (the DP
    kernel releases the GIL).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))

    def one(q):
        return dp_align(template, q, config)

    if workers > 1 and len(Q) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, Q))
    else:
        results = [one(q) for q in Q]
    warps = np.array([g for g, _ in results]).reshape(Q.shape)
    return warps, np.array([c for _, c in results])


def karcher_mean(Q, config=None, max_iter=50, tol=1e-4, workers=1):
    """Iterative template estimate by alternating DP alignment and averaging.

    Starts from the normalized Euclidean mean. Each iteration aligns every
    SRVF to the current mean, records the mean squared alignment cost, and
    replaces the mean by the normalized average of the aligned SRVFs. Stops
    once the mean moves less than ``tol`` in geodesic distance.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if len(Q) == 0:
        raise PreconditionError("need at least one SRVF")
    mean = normalize(Q.mean(axis=0))
    result = KarcherResult(mean=mean, warps=None)
    for it in range(1, max_iter + 1):
        warps, costs = dp_align_many(mean, Q, config, workers)
        result.objective_trace.append(float(costs.mean()))
        new_mean = normalize(warp_srvf(Q, warps).mean(axis=0))
        move = geodesic_distance(mean, new_mean)
        mean = new_mean
        result.warps, result.mean, result.n_iter = warps, mean, it
        if move < tol:
            result.converged = True
            break
    return result
