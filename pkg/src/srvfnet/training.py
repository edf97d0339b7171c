"""Adam and the mini-batch training loop for both template regimes."""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import network
from .diffeo import PiConfig
from .exceptions import NumericError, PreconditionError
from .functional import check_unit
from .losses import TERMS, LossWeights, backward, loss_forward

log = logging.getLogger(__name__)

FIXED = "fixed"
TEMPLATE = "template"


@dataclass
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 1e-3
    epochs: int = 100
    latent_dim: int = 150
    tsmooth: int = None
    smooth: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    regime: str = FIXED
    template: np.ndarray = field(default=None, repr=False)
    checkpoint_every: int = 0
    stop_template_grad: bool = False

    def validate(self):
        if self.regime not in (FIXED, TEMPLATE):
            raise PreconditionError(f"unknown regime {self.regime!r}")
        if self.regime == FIXED:
            if self.template is None:
                raise PreconditionError("fixed-template training needs a template")
            check_unit(self.template, "template")
        if self.batch_size < 2:
            raise PreconditionError("batch_size must be >= 2")
        if self.epochs < 0 or self.latent_dim < 1:
            raise PreconditionError("epochs must be >= 0 and latent_dim >= 1")
        if self.weights.fr <= 0:
            raise PreconditionError("the chord-distance weight must be positive")

    def pi_config(self, T):
        return PiConfig(T, self.tsmooth, smooth=self.smooth)

    def to_dict(self):
        d = asdict(self)
        d.pop("template")
        return d

    @classmethod
    def from_dict(cls, d, template=None):
        d = dict(d)
        d["weights"] = LossWeights(**d.get("weights", {}))
        return cls(**d, template=template)


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(w) for k, w in params.weights.items()},
                   {k: np.zeros_like(w) for k, w in params.weights.items()})


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        if g.shape != params.weights[name].shape:
            raise PreconditionError(f"gradient shape mismatch for {name}")
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        params.weights[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TrainReport:
    traces: dict
    initial: dict
    wallclock: list
    params: network.ModelParams
    template: np.ndarray
    config: TrainConfig
    checkpoint: str = None

    @property
    def epochs(self):
        return len(self.traces["total"])


def evaluate(params, data, cfg, batch_stats=False):
    """Full-data objective with latent codes at the posterior mean and no dropout.

    By default batch normalization uses the running statistics (inference
    mode). ``batch_stats=True`` normalizes with the statistics of ``data``
    itself instead, which tracks the current weights exactly and is what the
    per-epoch training log records. In template-prediction mode the template
    is the normalized mean of all warped SRVFs. Returns ``(total, breakdown,
    template)``.
    """
    template = None if cfg.regime == TEMPLATE else cfg.template
    total, breakdown, graph = loss_forward(params, data, cfg.weights, cfg.pi_config(params.T),
                                           template=template, train=batch_stats)
    return float(total), {k: float(v) for k, v in breakdown.items()}, graph["template"]


def _batches(perm, size):
    batches = [perm[i:i + size] for i in range(0, len(perm), size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate(batches[-2:])
        batches.pop()
    return batches


def train(data, cfg, checkpoint_path=None, params=None, callback=None):
    """Fit the encoder/decoder on a stack of unit SRVFs (shape ``(n, T)``).

    Every epoch shuffles the data, takes one Adam step per mini-batch and
    then logs the full-data objective (see :func:`evaluate`). The template
    kept in template-prediction mode is extracted in inference mode. Given a
    seed the run is deterministic. A checkpoint is written at the end (and
    every ``checkpoint_every`` epochs); if a numeric failure aborts training,
    the last written checkpoint is left untouched.
    """
    from .io import save_checkpoint

    data = np.atleast_2d(np.asarray(data, dtype=float))
    if len(data) < 2:
        raise PreconditionError("need at least two training SRVFs")
    cfg.validate()
    T = data.shape[1]
    if cfg.template is not None and np.shape(cfg.template)[-1] != T:
        raise PreconditionError(f"template length {np.shape(cfg.template)[-1]} != data length {T}")
    pi_cfg = cfg.pi_config(T)
    rng = np.random.default_rng(cfg.seed)
    params = params if params is not None else network.init_params(T, cfg.latent_dim, rng)
    state = AdamState.zeros_like(params)

    total, breakdown, _ = evaluate(params, data, cfg, batch_stats=True)
    initial = {"total": total, **breakdown}
    template = evaluate(params, data, cfg)[2]
    traces = {k: [] for k in ("total",) + TERMS}
    wallclock = []

    def checkpoint():
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, cfg, template, pi_cfg)

    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        try:
            for idx in _batches(rng.permutation(len(data)), cfg.batch_size):
                batch = data[idx]
                noise = rng.standard_normal((len(idx), cfg.latent_dim))
                masks = network.dropout_masks(rng, len(idx), params.hidden)
                _, _, graph = loss_forward(params, batch, cfg.weights, pi_cfg,
                                           template=None if cfg.regime == TEMPLATE else cfg.template,
                                           train=True, noise=noise, masks=masks)
                grads = backward(params, graph, stop_template_grad=cfg.stop_template_grad)
                adam_step(params, grads, state, cfg.learning_rate)
                network.update_running_stats(params, graph["net"])
            params.check_finite()
            total, breakdown, _ = evaluate(params, data, cfg, batch_stats=True)
            if cfg.regime == TEMPLATE:
                template = evaluate(params, data, cfg)[2]
        except NumericError:
            log.error("numeric failure in epoch %d; last checkpoint kept", epoch)
            raise
        traces["total"].append(total)
        for k in TERMS:
            traces[k].append(breakdown[k])
        wallclock.append(time.perf_counter() - start)
        log.info("epoch %d total %.6g fr %.6g", epoch, total, breakdown["fr"])
        if callback is not None:
            callback(epoch, total, breakdown)
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoint()
    checkpoint()
    return TrainReport(traces, initial, wallclock, params, template, cfg,
                       None if checkpoint_path is None else str(checkpoint_path))
