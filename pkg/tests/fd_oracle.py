"""Central finite differences of the batch objective, for every parameter entry.

Each parameter enters the network linearly at one node (a dense
pre-activation, a batch-norm affine output, a head output or the decoder
output), so perturbing entry ``(a, c)`` by ``eps`` is the same as adding
``eps * input[:, a]`` to column ``c`` of that node. Many perturbed copies are
stacked on a leading axis and evaluated in one forward pass. The forward
code is shared with the implementation; the reverse pass is not used.
"""
import numpy as np

from srvfnet.losses import loss_forward
from srvfnet.network import forward


def _node_and_input(name, base, params):
    layer, kind = name.split(".")
    if layer.startswith("enc"):
        lc = base["layers"][int(layer[3:])]
        if kind in ("W", "b"):
            return f"{layer}.pre", lc["x"]
        return f"{layer}.affine", lc["xhat"]
    node = {"mu": "mu", "logvar": "logvar_raw", "dec": "v"}[layer]
    source = base["z"] if layer == "dec" else base["h_last"]
    return node, source


def fd_gradients(params, Q, weights, pi_cfg, template, noise, masks, eps=1e-5, chunk=256):
    base = forward(params, Q, train=True, noise=noise, masks=masks)
    grads = {}
    for name, W in params.weights.items():
        node, source = _node_and_input(name, base, params)
        kind = name.split(".")[1]
        flat = np.zeros(W.size)
        for start in range(0, W.size, chunk):
            ids = np.arange(start, min(start + chunk, W.size))
            if W.ndim == 2:
                rows, cols = np.unravel_index(ids, W.shape)
                cols_in = source[:, rows].T  # (k, B)
            else:
                cols = ids
                if kind in ("b", "beta"):
                    cols_in = np.ones((len(ids), Q.shape[0]))
                else:  # batch-norm scale multiplies the normalized activation
                    cols_in = source[:, cols].T
            k = len(ids)

            def perturb(x, cols=cols, cols_in=cols_in, k=k):
                out = np.repeat(x[None], 2 * k, axis=0)
                sign = np.concatenate([np.ones(k), -np.ones(k)])
                idx = np.arange(2 * k)
                cc = np.concatenate([cols, cols])
                out[idx, :, cc] += eps * sign[:, None] * np.concatenate([cols_in, cols_in])
                return out

            total, _, _ = loss_forward(params, Q, weights, pi_cfg, template=template, train=True,
                                       noise=noise, masks=masks, inject={node: perturb})
            flat[ids] = (total[:k] - total[k:]) / (2 * eps)
        grads[name] = flat.reshape(W.shape)
    return grads


def fd_entry(params, Q, weights, pi_cfg, template, noise, masks, name, index, eps=1e-5):
    """Finite difference for a single entry by literally perturbing the parameter."""
    values = []
    for sign in (1, -1):
        p = params.copy()
        p.weights[name][index] += sign * eps
        total, _, _ = loss_forward(p, Q, weights, pi_cfg, template=template, train=True, noise=noise, masks=masks)
        values.append(total)
    return (values[0] - values[1]) / (2 * eps)


def relative_error(a, b, floor=1e-6):
    """``||a - b|| / max(||a||, ||b||, floor)``.

    The floor matters for tensors whose true gradient is zero (a bias that
    feeds batch normalization): there both sides are rounding noise.
    """
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return np.linalg.norm(a - b) / scale
