"""Loss terms, batch objectives and their exact gradients.

Per-sample terms:

* ``kl``: closed-form KL divergence of N(mu, diag(exp(logvar))) from N(0, I)
* ``fr``: squared chord distance between the template and the warped SRVF
* ``grad``: squared L2 norm of the warp derivative
* ``grad2``: squared L2 norm of the warp second derivative

A batch objective is the batch mean of their weighted sum. With a fixed
template the chord distance is measured to that template; in template
prediction mode it is measured to the normalized mean of the warped batch,
and gradients flow through that mean.
"""
from dataclasses import dataclass

import numpy as np

from .diffeo import (PiConfig, _slopes_backward, slopes, pi_backward, pi_forward, warp_backward,
                     warp_forward)
from .exceptions import DegenerateInputError, DimensionError, NumericError, PreconditionError
from .functional import inner_product, normalize, trapezoid_weights
from . import network

TERMS = ("fr", "kl", "grad", "grad2")


@dataclass(frozen=True)
class LossWeights:
    fr: float = 1.0
    kl: float = 1e-2
    grad: float = 1e-3
    grad2: float = 1e-4

    def __post_init__(self):
        if min(self.fr, self.kl, self.grad, self.grad2) < 0:
            raise PreconditionError("loss weights must be non-negative")

    def as_dict(self):
        return {t: getattr(self, t) for t in TERMS}


def kl_loss(mu, logvar):
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    return 0.5 * np.sum(np.exp(logvar) - 1.0 + mu * mu - logvar, axis=-1)


def fr_loss(q, gamma, template):
    """``||template - sqrt(gamma') (q o gamma)||**2`` under the trapezoidal rule."""
    warped = warp_forward(q, gamma)[0]
    if np.shape(template)[-1] != warped.shape[-1]:
        raise DimensionError("template length does not match the SRVF")
    diff = np.asarray(template, dtype=float) - warped
    return inner_product(diff, diff)


def grad_penalty(gamma):
    """Integral of ``gamma'**2``; equals 1 for the identity and exceeds 1 otherwise.

    The forward difference is the exact derivative of the piecewise-linear
    warp, so this is the exact integral for that interpolant.
    """
    gd = slopes(gamma)
    return np.sum(gd * gd, axis=-1) / gd.shape[-1]


def grad2_penalty(gamma):
    gamma = np.asarray(gamma, dtype=float)
    T = gamma.shape[-1]
    dd = np.diff(gamma, n=2, axis=-1) * (T - 1) ** 2
    return np.sum(dd * dd, axis=-1) / (T - 1)


def estimate_template(warped):
    """Normalized Euclidean mean of a batch of warped SRVFs."""
    warped = np.asarray(warped, dtype=float)
    if warped.shape[-2] == 0:
        raise PreconditionError("need at least one SRVF")
    return normalize(warped.mean(axis=-2))


def loss_forward(params, Q, weights, pi_cfg, template=None, train=True, noise=None, masks=None,
                 inject=None):
    """Evaluate the batch objective and keep everything needed for :func:`backward`.

    ``template=None`` selects template prediction. Returns ``(total,
    breakdown, graph)``; ``breakdown`` holds the batch means of the
    unweighted terms and ``graph['template']`` the template used.
    """
    Q = np.asarray(Q, dtype=float)
    net = network.forward(params, Q, train=train, noise=noise, masks=masks, inject=inject)
    gamma, pi_cache = pi_forward(net["v"], pi_cfg)
    warped, warp_cache = warp_forward(Q, gamma)
    T = Q.shape[-1]
    wt = trapezoid_weights(T)
    if template is None:
        mean = warped.mean(axis=-2)
        norm = np.sqrt(np.sum(wt * mean * mean, axis=-1, keepdims=True))
        if np.any(norm <= 1e-10):
            raise DegenerateInputError("mean of the warped batch vanishes")
        q_hat = mean / norm
        mean_norm = norm
    else:
        q_hat = np.asarray(template, dtype=float)
        if q_hat.shape[-1] != T:
            raise DimensionError(f"template length {q_hat.shape[-1]} != {T}")
        mean_norm = None
    resid = np.expand_dims(q_hat, -2) - warped
    gd = slopes(gamma)
    dd = np.diff(gd, axis=-1) * (T - 1)
    per_sample = {
        "fr": np.sum(wt * resid * resid, axis=-1),
        "kl": kl_loss(net["mu"], net["logvar"]),
        "grad": np.sum(gd * gd, axis=-1) / (T - 1),
        "grad2": np.sum(dd * dd, axis=-1) / (T - 1),
    }
    w = weights.as_dict()
    breakdown = {k: v.mean(axis=-1) for k, v in per_sample.items()}
    total = sum(w[k] * breakdown[k] for k in TERMS)
    graph = {"net": net, "gamma": gamma, "pi": pi_cache, "warp": warp_cache, "warped": warped,
             "resid": resid, "gd": gd, "dd": dd, "template": q_hat, "mean_norm": mean_norm,
             "predict_template": template is None, "weights": weights, "wt": wt}
    return total, breakdown, graph


def backward(params, graph, stop_template_grad=False):
    """Exact gradient of the batch objective with respect to every trainable parameter."""
    net = graph["net"]
    w = graph["weights"]
    B, T = graph["warped"].shape[-2:]
    wt = graph["wt"]
    resid = graph["resid"]
    g_warped = -2.0 * w.fr / B * wt * resid
    if graph["predict_template"] and not stop_template_grad:
        q_hat = graph["template"]
        g_q = -g_warped.sum(axis=-2)
        g_mean = (g_q - wt * q_hat * np.sum(g_q * q_hat, axis=-1, keepdims=True)) / graph["mean_norm"]
        g_warped = g_warped + g_mean / B
    g_gamma = _warp_grad(g_warped, graph)
    g_s = 2.0 * w.grad / B * graph["gd"] / (T - 1)
    g_dd = 2.0 * w.grad2 / B * graph["dd"]  # d/d(dd) times the (T - 1) of the difference
    g_s[:, 1:] += g_dd
    g_s[:, :-1] -= g_dd
    g_gamma = g_gamma + _slopes_backward(g_s)
    g_v = pi_backward(g_gamma, graph["pi"])
    if not np.all(np.isfinite(g_v)):
        raise NumericError("non-finite gradient", "constraint layer")
    g_mu = w.kl / B * net["mu"]
    g_logvar = w.kl / B * 0.5 * (np.exp(net["logvar"]) - 1.0)
    return network.backward(params, net, g_v, g_mu, g_logvar)


def _warp_grad(g_warped, graph):
    g = warp_backward(g_warped, graph["warp"])
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient", "warp action")
    return g


def _draws(params, B, rng, train):
    noise = rng.standard_normal((B, params.latent_dim))
    masks = network.dropout_masks(rng, B, params.hidden) if train else None
    return noise, masks


def batch_loss_fixed(batch, template, params, weights=None, pi_cfg=None, rng=None, train=True):
    """Batch objective against a fixed template, one fresh latent draw per sample."""
    batch = np.asarray(batch, dtype=float)
    if batch.shape[0] < 2:
        raise PreconditionError("batch size must be >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    noise, masks = _draws(params, batch.shape[0], rng, train)
    total, breakdown, _ = loss_forward(params, batch, weights or LossWeights(), pi_cfg or PiConfig(params.T),
                                       template=template, train=train, noise=noise, masks=masks)
    return float(total), {k: float(v) for k, v in breakdown.items()}


def batch_loss_template(batch, params, weights=None, pi_cfg=None, rng=None, train=True):
    """Batch objective against the normalized mean of the warped batch.

    Returns ``(total, breakdown, q_hat)``.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.shape[0] < 2:
        raise PreconditionError("batch size must be >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    noise, masks = _draws(params, batch.shape[0], rng, train)
    total, breakdown, graph = loss_forward(params, batch, weights or LossWeights(), pi_cfg or PiConfig(params.T),
                                           template=None, train=train, noise=noise, masks=masks)
    return float(total), {k: float(v) for k, v in breakdown.items()}, graph["template"]
