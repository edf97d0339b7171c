"""scikit-learn style wrappers.

``SrvfTransformer`` maps sampled functions to unit SRVFs, ``SrvfNet`` learns
warps to a fixed or jointly predicted template, and ``KarcherMean`` is the
dynamic-programming baseline. The two aligners share the interface
``fit(Q)``, ``predict(Q) -> warps`` and ``transform(Q) -> aligned SRVFs``, so
either can follow ``SrvfTransformer`` in a pipeline.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import network
from .diffeo import PiConfig, warp_srvf
from .elastic import DpConfig, dp_align_many, karcher_mean
from .functional import from_srvf, to_srvf
from .losses import LossWeights, fr_loss
from .training import FIXED, TEMPLATE, TrainConfig, train
from .validation import check_functions, check_srvfs, check_template


class SrvfTransformer(TransformerMixin, BaseEstimator):
    def __init__(self, normalize=True):
        self.normalize = normalize

    def fit(self, X, y=None):
        X = check_functions(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return to_srvf(check_functions(X), normalize=self.normalize)

    def inverse_transform(self, Q):
        """Functions starting at 0 whose SRVF is ``Q`` (shape only: scale and offset are lost)."""
        return from_srvf(check_functions(Q), 0.0)


class SrvfNet(TransformerMixin, BaseEstimator):
    """Generative encoder/decoder that predicts a warp per input SRVF.

    With ``template=None`` the template is estimated jointly as the
    normalized mean of the warped training set (available as ``template_``).

    Parameters
    ----------
    template : array of shape (T,), optional
        Unit SRVF to align to.
    latent_dim : int
        Size of the latent code.
    lambda_fr, lambda_kl, lambda_grad, lambda_grad2 : float
        Weights of the chord distance, KL, first- and second-derivative terms.
    tsmooth : int, optional
        Coarse grid size of the warp smoother; ``smooth=False`` disables it.
    """

    def __init__(self, template=None, latent_dim=150, batch_size=512, learning_rate=1e-3, epochs=100,
                 lambda_fr=1.0, lambda_kl=1e-2, lambda_grad=1e-3, lambda_grad2=1e-4, tsmooth=None,
                 smooth=True, stop_template_grad=False, checkpoint_every=0, random_state=0):
        self.template = template
        self.latent_dim = latent_dim
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.lambda_fr = lambda_fr
        self.lambda_kl = lambda_kl
        self.lambda_grad = lambda_grad
        self.lambda_grad2 = lambda_grad2
        self.tsmooth = tsmooth
        self.smooth = smooth
        self.stop_template_grad = stop_template_grad
        self.checkpoint_every = checkpoint_every
        self.random_state = random_state

    def train_config(self):
        return TrainConfig(
            batch_size=self.batch_size, learning_rate=self.learning_rate, epochs=self.epochs,
            latent_dim=self.latent_dim, tsmooth=self.tsmooth, smooth=self.smooth,
            weights=LossWeights(self.lambda_fr, self.lambda_kl, self.lambda_grad, self.lambda_grad2),
            seed=self.random_state, regime=TEMPLATE if self.template is None else FIXED,
            template=None if self.template is None else np.asarray(self.template, dtype=float),
            checkpoint_every=self.checkpoint_every, stop_template_grad=self.stop_template_grad,
        )

    def fit(self, X, y=None, checkpoint_path=None):
        X = check_srvfs(X)
        check_template(self.template, X.shape[1])
        cfg = self.train_config()
        report = train(X, cfg, checkpoint_path=checkpoint_path)
        self.n_features_in_ = X.shape[1]
        self.params_ = report.params
        self.template_ = report.template
        self.report_ = report
        self.pi_config_ = cfg.pi_config(X.shape[1])
        return self

    @classmethod
    def from_checkpoint(cls, params, doc):
        cfg = doc.get("config") or {}
        weights = cfg.get("weights", {})
        est = cls(template=None if cfg.get("regime") == TEMPLATE else doc.get("template"),
                  latent_dim=params.latent_dim, tsmooth=doc["dims"].get("tsmooth"),
                  smooth=doc["dims"].get("smooth", True),
                  **{k: cfg[k] for k in ("batch_size", "learning_rate", "epochs") if k in cfg},
                  **{f"lambda_{k}": v for k, v in weights.items()})
        est.n_features_in_ = params.T
        est.params_ = params
        est.template_ = doc.get("template")
        est.pi_config_ = PiConfig(params.T, est.tsmooth, smooth=est.smooth)
        return est

    def predict(self, X):
        """Warps (one row per input) from the posterior-mean latent code."""
        check_is_fitted(self, "params_")
        X = check_srvfs(X, length=self.n_features_in_)
        return network.predict_warps(self.params_, X, self.pi_config_)

    def transform(self, X):
        X = check_srvfs(X, length=getattr(self, "n_features_in_", None))
        return warp_srvf(X, self.predict(X))

    def sample_warps(self, n, random_state=None):
        check_is_fitted(self, "params_")
        return network.sample_warps(self.params_, n, self.pi_config_, np.random.default_rng(random_state))

    def score(self, X, y=None):
        """Negative mean squared chord distance of the aligned inputs to ``template_``."""
        X = check_srvfs(X, length=self.n_features_in_)
        return -float(np.mean(fr_loss(X, self.predict(X), self.template_)))


class KarcherMean(TransformerMixin, BaseEstimator):
    def __init__(self, slope_window=3, max_iter=50, tol=1e-4, n_jobs=1):
        self.slope_window = slope_window
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_srvfs(X)
        result = karcher_mean(X, DpConfig(self.slope_window), self.max_iter, self.tol, self.n_jobs)
        self.n_features_in_ = X.shape[1]
        self.mean_ = result.mean
        self.warps_ = result.warps
        self.objective_trace_ = np.asarray(result.objective_trace)
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "mean_")
        X = check_srvfs(X, length=self.n_features_in_)
        return dp_align_many(self.mean_, X, DpConfig(self.slope_window), self.n_jobs)[0]

    def transform(self, X):
        X = check_srvfs(X, length=getattr(self, "n_features_in_", None))
        return warp_srvf(X, self.predict(X))
