"""Warping functions of [0, 1] and their action on SRVFs.

A warp is an array ``gamma`` of length T sampled on the uniform grid with
``gamma[0] == 0``, ``gamma[-1] == 1`` and non-decreasing entries. All
functions accept leading batch axes.

The ``*_forward`` / ``*_backward`` pairs expose the intermediates needed by
the network's reverse pass; the public functions are thin wrappers.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateInputError, DimensionError, PreconditionError
from .functional import grid

NORM_EPS = 1e-8


def default_tsmooth(T):
    return min(max(10, T // 10), T - 1)


@dataclass(frozen=True)
class PiConfig:
    """Settings of the constraint-and-smoothing layer.

    ``tsmooth`` is the size of the coarse grid used for down/upsampling; it
    defaults to ``max(10, T // 10)`` (capped at ``T - 1``).
    """

    T: int
    tsmooth: int = None
    eps: float = NORM_EPS
    smooth: bool = True

    def __post_init__(self):
        if self.T < 3:
            raise PreconditionError(f"T must be >= 3, got {self.T}")
        if self.tsmooth is None:
            object.__setattr__(self, "tsmooth", default_tsmooth(self.T))
        if self.smooth and not 3 <= self.tsmooth < self.T:
            raise PreconditionError(
                f"tsmooth must satisfy 3 <= tsmooth < T, got tsmooth={self.tsmooth}, T={self.T}"
            )


def identity(T):
    return grid(T)


def check_diffeo(gamma, tol=1e-9):
    """Raise ``PreconditionError`` unless every row of ``gamma`` is a valid warp."""
    gamma = np.asarray(gamma, dtype=float)
    if not np.all(np.isfinite(gamma)):
        raise PreconditionError("warp contains non-finite values")
    if np.any(np.abs(gamma[..., 0]) > tol) or np.any(np.abs(gamma[..., -1] - 1.0) > tol):
        raise PreconditionError("warp endpoints must be 0 and 1")
    if np.any(np.diff(gamma, axis=-1) < 0):
        raise PreconditionError("warp must be non-decreasing")


def is_valid_diffeo(gamma, tol=1e-9):
    try:
        check_diffeo(gamma, tol)
    except PreconditionError:
        return False
    return True


def velocity_to_gamma(gdot):
    """Build a warp of length ``len(gdot) + 1`` from non-negative increments.

    The increments are rescaled to sum to one and accumulated with a leading
    zero, so both endpoints hold exactly.
    """
    gdot = np.asarray(gdot, dtype=float)
    if np.any(gdot < 0):
        raise PreconditionError("warp velocity must be non-negative")
    total = gdot.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateInputError("warp velocity is identically zero")
    gamma = np.zeros(gdot.shape[:-1] + (gdot.shape[-1] + 1,))
    gamma[..., 1:] = np.cumsum(gdot / total, axis=-1)
    np.minimum(gamma, 1.0, out=gamma)
    gamma[..., -1] = 1.0
    return gamma


@lru_cache(maxsize=32)
def smoothing_matrix(T, tsmooth):
    """Linear operator for downsampling to ``tsmooth`` points and back to ``T``."""
    fine = grid(T)
    coarse = grid(tsmooth)
    eye = np.eye(T)
    down = np.array([np.interp(coarse, fine, e) for e in eye]).T
    eye = np.eye(tsmooth)
    up = np.array([np.interp(fine, coarse, e) for e in eye]).T
    M = up @ down
    M.setflags(write=False)
    return M


def _reverse_cumsum(x):
    return np.flip(np.cumsum(np.flip(x, -1), axis=-1), -1)


def pi_forward(v, cfg):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != cfg.T:
        raise DimensionError(f"expected length {cfg.T}, got {v.shape[-1]}")
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    if np.any(norm <= cfg.eps):
        raise DegenerateInputError(f"decoder output norm <= {cfg.eps}")
    s = (v / norm) ** 2
    head = s[..., :-1]
    gamma_raw = velocity_to_gamma(head)
    cache = {"v": v, "w": head / head.sum(axis=-1, keepdims=True),
             "head_sq": np.sum(v[..., :-1] ** 2, axis=-1, keepdims=True), "smooth": cfg.smooth}
    if not cfg.smooth:
        return gamma_raw, cache
    M = smoothing_matrix(cfg.T, cfg.tsmooth)
    smoothed = gamma_raw @ M.T
    d = np.diff(smoothed, axis=-1)
    dp = np.maximum(d, 0.0)
    c = np.cumsum(dp, axis=-1)
    D = c[..., -1:]
    gamma = velocity_to_gamma(dp)
    cache.update(M=M, d=d, c=c, D=D)
    return gamma, cache


def pi_backward(g_gamma, cache):
    """Gradient of a scalar w.r.t. the decoder output ``v`` given its gradient w.r.t. the warp."""
    if cache["smooth"]:
        c, D = cache["c"], cache["D"]
        gc = g_gamma[..., 1:] / D
        gD = -np.sum(g_gamma[..., 1:] * c, axis=-1, keepdims=True) / D**2
        gd = (_reverse_cumsum(gc) + gD) * (cache["d"] > 0)
        g_smoothed = np.zeros_like(g_gamma)
        g_smoothed[..., 1:] += gd
        g_smoothed[..., :-1] -= gd
        g_raw = g_smoothed @ cache["M"]
    else:
        g_raw = g_gamma
    gw = _reverse_cumsum(g_raw[..., 1:])
    w, v = cache["w"], cache["v"]
    gv = np.zeros_like(v)
    gv[..., :-1] = 2.0 * v[..., :-1] / cache["head_sq"] * (gw - np.sum(gw * w, axis=-1, keepdims=True))
    return gv


def pi_layer(v, cfg):
    """Map an unconstrained vector to a smooth warp.

    ``v`` is normalized and squared into a point of the probability simplex,
    accumulated into a warp, then smoothed by linear down/upsampling through
    ``cfg.tsmooth`` points. Scaling ``v`` by any non-zero constant leaves the
    output unchanged.
    """
    return pi_forward(v, cfg)[0]


def slopes(gamma):
    """Per-interval slopes ``(gamma[k+1] - gamma[k]) * (T - 1)``, length ``T - 1``.

    These are the exact derivative of the piecewise-linear warp.
    """
    gamma = np.asarray(gamma, dtype=float)
    return np.diff(gamma, axis=-1) * (gamma.shape[-1] - 1)


def _slopes_backward(g_s):
    T = g_s.shape[-1] + 1
    g_gamma = np.zeros(g_s.shape[:-1] + (T,))
    g_gamma[..., 1:] += g_s * (T - 1)
    g_gamma[..., :-1] -= g_s * (T - 1)
    return g_gamma


def gamma_dot(gamma):
    """Derivative of a warp at the grid points.

    Interior entries average the slopes of the two adjacent intervals
    (central differences); the end entries take the single adjacent slope.
    With this choice the trapezoidal integral of ``gamma_dot`` is exactly 1
    and the group action integrates ``q**2`` by the trapezoid rule on the
    warped grid, which keeps its norm error second order.
    """
    s = slopes(gamma)
    gd = np.empty(s.shape[:-1] + (s.shape[-1] + 1,))
    gd[..., 0] = s[..., 0]
    gd[..., -1] = s[..., -1]
    gd[..., 1:-1] = 0.5 * (s[..., 1:] + s[..., :-1])
    return gd


def _gamma_dot_backward(g_gd):
    g_s = np.zeros(g_gd.shape[:-1] + (g_gd.shape[-1] - 1,))
    g_s[..., 0] += g_gd[..., 0]
    g_s[..., -1] += g_gd[..., -1]
    half = 0.5 * g_gd[..., 1:-1]
    g_s[..., 1:] += half
    g_s[..., :-1] += half
    return _slopes_backward(g_s)


def interp_forward(q, x):
    """Linearly interpolate grid samples ``q`` at points ``x`` in [0, 1].

    Returns the values and the local slope, taking the segment to the left
    of a point that falls exactly on a knot.
    """
    T = q.shape[-1]
    pos = np.clip(x, 0.0, 1.0) * (T - 1)
    idx = np.clip(np.ceil(pos).astype(np.intp) - 1, 0, T - 2)
    frac = pos - idx
    qb = np.broadcast_to(q, np.broadcast_shapes(q.shape, x.shape))
    q0 = np.take_along_axis(qb, idx, axis=-1)
    q1 = np.take_along_axis(qb, idx + 1, axis=-1)
    return q0 + frac * (q1 - q0), (q1 - q0) * (T - 1)


def warp_forward(q, gamma):
    q = np.asarray(q, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if q.shape[-1] != gamma.shape[-1]:
        raise DimensionError(f"SRVF length {q.shape[-1]} != warp length {gamma.shape[-1]}")
    gd = gamma_dot(gamma)
    root = np.sqrt(np.maximum(gd, 0.0))
    composed, slope = interp_forward(q, gamma)
    return root * composed, {"root": root, "composed": composed, "slope": slope}


def warp_backward(g_out, cache):
    """Gradient w.r.t. the warp of a scalar whose gradient w.r.t. the warped SRVF is ``g_out``."""
    root = cache["root"]
    with np.errstate(divide="ignore", invalid="ignore"):
        g_gd = g_out * cache["composed"] / (2.0 * root)
    return g_out * root * cache["slope"] + _gamma_dot_backward(g_gd)


def warp_srvf(q, gamma):
    """Group action ``sqrt(gamma') * (q o gamma)``; preserves the L2 norm up to discretization."""
    return warp_forward(q, gamma)[0]


def compose(g1, g2):
    """``(g1 o g2)`` evaluated by linear interpolation of ``g1`` at the samples of ``g2``."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.shape != g2.shape:
        raise DimensionError(f"shape mismatch: {g1.shape} != {g2.shape}")
    return interp_forward(g1, g2)[0]


def invert(gamma):
    """Inverse of a strictly increasing warp, by swapping axes and interpolating."""
    gamma = np.asarray(gamma, dtype=float)
    t = grid(gamma.shape[-1])
    if gamma.ndim == 1:
        return np.interp(t, gamma, t)
    return np.stack([np.interp(t, g, t) for g in gamma.reshape(-1, gamma.shape[-1])]).reshape(gamma.shape)
