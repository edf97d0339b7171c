"""Encoder/decoder network: parameters, forward pass and reverse pass.

The encoder is three dense -> batch-norm -> ReLU -> dropout blocks followed
by two dense heads giving the posterior mean and log-variance of the latent
code. The decoder is one dense layer whose output is turned into a warp by
the constraint layer in :mod:`srvfnet.diffeo`.

Arrays are float64 and follow a ``(batch, features)`` layout. The forward
pass also accepts extra leading axes created by ``inject`` hooks, which the
finite-difference checker uses to evaluate many perturbed copies at once.
"""
from dataclasses import dataclass, field

import numpy as np

from .diffeo import PiConfig, pi_layer
from .exceptions import DimensionError, NumericError, PreconditionError

HIDDEN = (528, 256, 128)
KEEP_PROB = 0.35
BN_MOMENTUM = 0.99
BN_EPS = 1e-5
LOGVAR_CLIP = 15.0


@dataclass
class ModelParams:
    T: int
    latent_dim: int
    hidden: tuple = HIDDEN
    weights: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def copy(self):
        return ModelParams(self.T, self.latent_dim, tuple(self.hidden),
                           {k: v.copy() for k, v in self.weights.items()},
                           {k: v.copy() for k, v in self.stats.items()})

    @property
    def n_layers(self):
        return len(self.hidden)

    def n_params(self):
        return sum(v.size for v in self.weights.values())

    def check_finite(self):
        for name, arr in {**self.weights, **self.stats}.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError("non-finite parameter", name)
        for i in range(self.n_layers):
            if np.any(self.stats[f"enc{i}.var"] <= 0):
                raise NumericError("non-positive running variance", f"enc{i}.var")


@dataclass
class LatentDraw:
    z: np.ndarray
    eps: np.ndarray


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(T, latent_dim, rng, hidden=HIDDEN):
    """Glorot-uniform weights, zero biases, identity batch-norm."""
    if T < 3 or latent_dim < 1:
        raise PreconditionError(f"need T >= 3 and latent_dim >= 1, got T={T}, latent_dim={latent_dim}")
    p = ModelParams(T, latent_dim, tuple(hidden))
    fan_in = T
    for i, width in enumerate(hidden):
        p.weights[f"enc{i}.W"] = glorot_uniform(rng, fan_in, width)
        p.weights[f"enc{i}.b"] = np.zeros(width)
        p.weights[f"enc{i}.gamma"] = np.ones(width)
        p.weights[f"enc{i}.beta"] = np.zeros(width)
        p.stats[f"enc{i}.mean"] = np.zeros(width)
        p.stats[f"enc{i}.var"] = np.ones(width)
        fan_in = width
    for head in ("mu", "logvar"):
        p.weights[f"{head}.W"] = glorot_uniform(rng, fan_in, latent_dim)
        p.weights[f"{head}.b"] = np.zeros(latent_dim)
    p.weights["dec.W"] = glorot_uniform(rng, latent_dim, T)
    p.weights["dec.b"] = np.zeros(T)
    return p


def dense(x, W, b, name="dense"):
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"{name}: expected input width {W.shape[0]}, got {x.shape[-1]}")
    return x @ W + b


def _finite(x, where):
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite activation", where)
    return x


def dropout_masks(rng, batch, hidden=HIDDEN, keep=KEEP_PROB):
    """Inverted-dropout masks: kept units are scaled by ``1 / keep``."""
    return [(rng.random((batch, w)) < keep) / keep for w in hidden]


def _hook(inject, name, x):
    if inject and name in inject:
        return inject[name](x)
    return x


def forward(params, Q, train=False, noise=None, masks=None, inject=None):
    """Run the network up to the decoder output ``v``.

    ``train`` selects batch statistics and applies ``masks`` (one per hidden
    layer; ``None`` disables dropout). ``noise`` is the standard-normal draw
    of the reparameterization; without it the latent code is the posterior
    mean. ``inject`` maps node names (``enc{i}.pre``, ``enc{i}.affine``,
    ``mu``, ``logvar_raw``, ``v``) to functions applied to that node.
    Returns a cache holding every intermediate needed by :func:`backward`.
    """
    w = params.weights
    Q = np.asarray(Q, dtype=float)
    if Q.shape[-1] != params.T:
        raise DimensionError(f"expected SRVFs of length {params.T}, got {Q.shape[-1]}")
    if train and Q.shape[-2] < 2:
        raise PreconditionError("train mode needs a batch of at least 2 (batch statistics)")
    cache = {"Q": Q, "train": train, "layers": []}
    x = Q
    for i in range(params.n_layers):
        h = _hook(inject, f"enc{i}.pre", dense(x, w[f"enc{i}.W"], w[f"enc{i}.b"], f"enc{i}"))
        if train:
            mean = h.mean(axis=-2, keepdims=True)
            var = h.var(axis=-2, keepdims=True)
        else:
            mean, var = params.stats[f"enc{i}.mean"], params.stats[f"enc{i}.var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (h - mean) * inv_std
        y = _hook(inject, f"enc{i}.affine", w[f"enc{i}.gamma"] * xhat + w[f"enc{i}.beta"])
        r = np.maximum(y, 0.0)
        mask = masks[i] if (train and masks is not None) else None
        out = r * mask if mask is not None else r
        _finite(out, f"encoder layer {i}")
        cache["layers"].append({"x": x, "xhat": xhat, "inv_std": inv_std, "y": y, "mask": mask,
                                "batch_mean": mean, "batch_var": var})
        x = out
    mu = _hook(inject, "mu", dense(x, w["mu.W"], w["mu.b"], "mu"))
    logvar_raw = _hook(inject, "logvar_raw", dense(x, w["logvar.W"], w["logvar.b"], "logvar"))
    logvar = np.clip(logvar_raw, -LOGVAR_CLIP, LOGVAR_CLIP)
    _finite(mu, "mu head")
    _finite(logvar, "logvar head")
    z = mu if noise is None else np.exp(0.5 * logvar) * noise + mu
    v = _hook(inject, "v", dense(z, w["dec.W"], w["dec.b"], "decoder"))
    _finite(v, "decoder")
    cache.update(h_last=x, mu=mu, logvar_raw=logvar_raw, logvar=logvar, noise=noise, z=z, v=v)
    return cache


def backward(params, cache, g_v, g_mu=None, g_logvar=None, check=True):
    """Reverse pass from gradients at ``v`` (and optionally at ``mu``/``logvar``).

    Only train-mode caches are differentiable: the batch-norm gradient
    includes the dependence of the batch statistics on every sample.
    """
    if not cache["train"]:
        raise PreconditionError("backward requires a train-mode forward pass")
    w = params.weights
    grads = {}
    grads["dec.W"] = cache["z"].T @ g_v
    grads["dec.b"] = g_v.sum(axis=0)
    g_z = g_v @ w["dec.W"].T
    g_mu = g_z if g_mu is None else g_mu + g_z
    g_logvar = np.zeros_like(g_mu) if g_logvar is None else g_logvar.copy()
    if cache["noise"] is not None:
        g_logvar += g_z * 0.5 * np.exp(0.5 * cache["logvar"]) * cache["noise"]
    raw = cache["logvar_raw"]
    g_logvar_raw = g_logvar * ((raw > -LOGVAR_CLIP) & (raw < LOGVAR_CLIP))
    h = cache["h_last"]
    grads["mu.W"] = h.T @ g_mu
    grads["mu.b"] = g_mu.sum(axis=0)
    grads["logvar.W"] = h.T @ g_logvar_raw
    grads["logvar.b"] = g_logvar_raw.sum(axis=0)
    g_x = g_mu @ w["mu.W"].T + g_logvar_raw @ w["logvar.W"].T
    for i in reversed(range(params.n_layers)):
        lc = cache["layers"][i]
        g_r = g_x * lc["mask"] if lc["mask"] is not None else g_x
        g_y = g_r * (lc["y"] > 0)
        xhat = lc["xhat"]
        grads[f"enc{i}.gamma"] = np.sum(g_y * xhat, axis=0)
        grads[f"enc{i}.beta"] = g_y.sum(axis=0)
        g_xhat = g_y * w[f"enc{i}.gamma"]
        g_h = lc["inv_std"] * (g_xhat - g_xhat.mean(axis=0) - xhat * np.mean(g_xhat * xhat, axis=0))
        grads[f"enc{i}.W"] = lc["x"].T @ g_h
        grads[f"enc{i}.b"] = g_h.sum(axis=0)
        g_x = g_h @ w[f"enc{i}.W"].T
    if check:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient", name)
    return grads


def update_running_stats(params, cache, momentum=BN_MOMENTUM):
    """Exponential moving average of the batch statistics seen in a train-mode pass."""
    B = cache["Q"].shape[-2]
    for i, lc in enumerate(cache["layers"]):
        params.stats[f"enc{i}.mean"] = momentum * params.stats[f"enc{i}.mean"] + (1 - momentum) * lc["batch_mean"][0]
        unbiased = lc["batch_var"][0] * B / (B - 1)
        params.stats[f"enc{i}.var"] = momentum * params.stats[f"enc{i}.var"] + (1 - momentum) * unbiased


def encode(Q, params, mode="infer", rng=None, masks=None):
    """Posterior mean and log-variance for a batch of SRVFs."""
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    train = mode == "train"
    if train and masks is None:
        masks = dropout_masks(rng, Q.shape[0], params.hidden)
    cache = forward(params, Q, train=train, masks=masks)
    if single:
        return cache["mu"][0], cache["logvar"][0]
    return cache["mu"], cache["logvar"]


def reparameterize(mu, logvar, rng):
    """``z = exp(logvar / 2) * eps + mu`` with ``eps ~ N(0, I)``."""
    mu = np.asarray(mu, dtype=float)
    eps = rng.standard_normal(mu.shape)
    return LatentDraw(np.exp(0.5 * np.asarray(logvar, dtype=float)) * eps + mu, eps)


def decode(z, params, pi_cfg=None):
    pi_cfg = pi_cfg or PiConfig(params.T)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite latent code", "decoder input")
    v = _finite(dense(z, params.weights["dec.W"], params.weights["dec.b"], "decoder"), "decoder")
    return pi_layer(v, pi_cfg)


def sample_warps(params, n, pi_cfg=None, rng=None):
    """Decode ``n`` latent codes drawn from the standard-normal prior."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    return decode(rng.standard_normal((n, params.latent_dim)), params, pi_cfg)


def predict_warps(params, Q, pi_cfg=None):
    """Deterministic warps: inference-mode encoder, latent code at the posterior mean."""
    pi_cfg = pi_cfg or PiConfig(params.T)
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    gamma = pi_layer(forward(params, np.atleast_2d(Q))["v"], pi_cfg)  # forward checks v is finite
    return gamma[0] if single else gamma
