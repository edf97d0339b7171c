"""Sampled scalar functions on a uniform grid of [0, 1] and the SRVF map.

Functions and SRVFs are plain numpy arrays whose last axis is the grid;
leading axes are treated as a batch.
"""
import numpy as np
from scipy.integrate import cumulative_trapezoid

from .exceptions import DegenerateInputError, DimensionError, PreconditionError

DERIVATIVE_EPS = 1e-12
UNIT_TOL = 1e-6


def grid(T):
    return np.linspace(0.0, 1.0, T)


def trapezoid_weights(T):
    """Quadrature weights w with ``sum(w * f)`` the trapezoidal integral over [0, 1]."""
    w = np.full(T, 1.0 / (T - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def inner_product(a, b):
    """Trapezoidal approximation of the L2 inner product on [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"length mismatch: {a.shape[-1]} != {b.shape[-1]}")
    if a.shape[-1] < 2:
        raise DimensionError("need at least two samples")
    return np.sum(a * b * trapezoid_weights(a.shape[-1]), axis=-1)


def l2_norm(a):
    return np.sqrt(inner_product(a, a))


def numerical_derivative(f):
    """Second-order finite differences: central inside, one-sided at the ends."""
    f = np.asarray(f, dtype=float)
    T = f.shape[-1]
    if T < 3:
        raise DimensionError(f"need T >= 3 samples, got {T}")
    return np.gradient(f, 1.0 / (T - 1), axis=-1, edge_order=2)


def to_srvf(f, normalize=True):
    """Square-root velocity function ``q = f' / sqrt(|f'|)``.

    Where ``|f'| < 1e-12`` the SRVF is set to 0. With ``normalize`` the result
    has unit trapezoidal L2 norm, which makes it translation and scale invariant.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("function values must be finite")
    df = numerical_derivative(f)
    mag = np.abs(df)
    safe = np.where(mag < DERIVATIVE_EPS, 1.0, mag)
    q = np.where(mag < DERIVATIVE_EPS, 0.0, df / np.sqrt(safe))
    if normalize:
        norm = l2_norm(q)
        if np.any(norm == 0.0):
            raise DegenerateInputError("derivative vanishes everywhere; SRVF cannot be normalized")
        q = q / np.expand_dims(norm, -1)
    return q


def from_srvf(q, f0=0.0):
    """Invert the SRVF map: ``f(s) = f0 + int_0^s q|q| dt`` (cumulative trapezoid)."""
    q = np.asarray(q, dtype=float)
    T = q.shape[-1]
    integral = cumulative_trapezoid(q * np.abs(q), dx=1.0 / (T - 1), axis=-1, initial=0.0)
    return np.expand_dims(np.asarray(f0, dtype=float), -1) + integral


def normalize(u, eps=1e-10):
    """Scale onto the unit Hilbert sphere; raises on (near) zero input."""
    u = np.asarray(u, dtype=float)
    norm = l2_norm(u)
    if np.any(norm <= eps):
        raise DegenerateInputError("cannot normalize a (near) zero function")
    return u / np.expand_dims(norm, -1)


def check_unit(q, name="q", tol=UNIT_TOL):
    dev = np.abs(inner_product(q, q) - 1.0)
    if np.any(dev > tol):
        raise PreconditionError(f"{name} is not unit norm (|<q,q> - 1| = {np.max(dev):.3g})")


def geodesic_distance(a, b):
    """Arc length ``arccos <a, b>`` between unit SRVFs on the Hilbert sphere.

    Evaluated as ``2 arcsin(|a - b| / 2)``, which is the same quantity for unit
    inputs but stays accurate when ``a`` and ``b`` are nearly equal or antipodal.
    """
    check_unit(a, "a")
    check_unit(b, "b")
    chord = l2_norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
