import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from srvfnet import KarcherMean, SrvfNet, SrvfTransformer
from srvfnet.data import BumpSpec, generate_bumps
from srvfnet.diffeo import is_valid_diffeo
from srvfnet.exceptions import DimensionError, PreconditionError
from srvfnet.functional import inner_product, to_srvf
from srvfnet.io import load_checkpoint


@pytest.fixture(scope="module")
def bumps():
    return generate_bumps(BumpSpec(T=40, seed=8), 40)


def test_transformer(bumps):
    tr = SrvfTransformer().fit(bumps.raw)
    np.testing.assert_allclose(tr.transform(bumps.raw), bumps.srvfs)
    f = tr.inverse_transform(tr.transform(bumps.raw[:2]))
    assert f.shape == (2, 40) and np.all(f[:, 0] == 0)
    with pytest.raises(NotFittedError):
        SrvfTransformer().transform(bumps.raw)
    with pytest.raises(DimensionError):
        SrvfTransformer().fit(np.ones((3, 2)))


def test_get_params_and_clone():
    est = SrvfNet(latent_dim=8, lambda_kl=0.5, tsmooth=7)
    params = est.get_params()
    assert params["latent_dim"] == 8 and params["lambda_kl"] == 0.5 and params["tsmooth"] == 7
    c = clone(est)
    assert c.get_params() == params and c is not est
    assert KarcherMean(slope_window=2).get_params()["slope_window"] == 2


def test_srvfnet_fixed_fit_predict(bumps, tmp_path):
    est = SrvfNet(template=bumps.srvfs[0], latent_dim=3, batch_size=16, epochs=2, random_state=0)
    est.fit(bumps.srvfs, checkpoint_path=tmp_path / "ck.json")
    G = est.predict(bumps.srvfs)
    assert G.shape == (40, 40) and is_valid_diffeo(G)
    W = est.transform(bumps.srvfs)
    np.testing.assert_allclose(W, est.transform(bumps.srvfs))
    assert np.isfinite(est.score(bumps.srvfs)) and est.score(bumps.srvfs) <= 0
    assert is_valid_diffeo(est.sample_warps(5, random_state=1))
    with pytest.raises(DimensionError):
        est.predict(bumps.srvfs[:, :30])
    params, doc = load_checkpoint(tmp_path / "ck.json")
    again = SrvfNet.from_checkpoint(params, doc)
    np.testing.assert_array_equal(again.predict(bumps.srvfs), G)


def test_srvfnet_template_mode(bumps):
    est = SrvfNet(latent_dim=3, batch_size=16, epochs=1).fit(bumps.srvfs)
    assert inner_product(est.template_, est.template_) == pytest.approx(1.0, abs=1e-9)


def test_srvfnet_validation(bumps):
    with pytest.raises(PreconditionError):
        SrvfNet(template=2 * bumps.srvfs[0], epochs=0).fit(bumps.srvfs)
    with pytest.raises(PreconditionError):
        SrvfNet(epochs=0).fit(2 * bumps.srvfs)
    with pytest.raises(NotFittedError):
        SrvfNet().predict(bumps.srvfs)


def test_pipeline_with_karcher(bumps):
    pipe = make_pipeline(SrvfTransformer(), KarcherMean(max_iter=5))
    aligned = pipe.fit_transform(bumps.raw[:10])
    km = pipe[-1]
    assert aligned.shape == (10, 40) and km.n_iter_ >= 1
    assert np.all(np.diff(km.objective_trace_) <= 1e-8)
    assert is_valid_diffeo(km.predict(to_srvf(bumps.raw[:3])))
