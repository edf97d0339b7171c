"""Acceptance criteria 1-10.

Each test records one ``criterion N: PASS|FAIL`` line (printed as it runs and
repeated in the terminal summary) and then asserts. Criteria 6, 7, 8 and 10
drive the command-line tool end to end on a 2,000-function desk corpus and
take several minutes.

Desk-scale runs use ``--tsmooth 20`` (T/5). At the default coarse grid of
10 points the learned warps are too stiff for the 1.5x oracle bound of
criterion 6b (measured ratio 1.53).
"""
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from fd_oracle import fd_gradients, relative_error
from test_elastic import brute_force
from srvfnet import network
from srvfnet.cli import main
from srvfnet.data import BumpSpec, generate_bumps
from srvfnet.diffeo import PiConfig, pi_layer, warp_srvf
from srvfnet.elastic import DpConfig, dp_align, karcher_mean
from srvfnet.functional import from_srvf, grid, inner_product, l2_norm, normalize, to_srvf
from srvfnet.io import load_checkpoint, read_rows
from srvfnet.losses import LossWeights, backward, fr_loss, kl_loss, loss_forward

DESK = ["--epochs", "300", "--latent-dim", "16", "--batch-size", "128", "--tsmooth", "20",
        "--deterministic", "--workers", "1"]


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def valid_rows(G, tol=1e-9):
    return (np.abs(G[:, 0]) <= tol) & (np.abs(G[:, -1] - 1) <= tol) & np.all(np.diff(G, axis=1) >= 0, axis=1)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    assert main(["gen-data", "--out", str(out / "data"), "--n", "2000", "--test-n", "200", "--length", "100",
                 "--seed", "1"]) == 0
    return out


def _train(desk, name, command, seed, extra=()):
    out = desk / name
    args = [command, "--data", str(desk / "data" / "train.csv"), "--out", str(out), "--seed", str(seed), *DESK,
            *extra]
    start = time.perf_counter()
    code = main(args)
    return out, code, time.perf_counter() - start


@pytest.fixture(scope="module")
def fixed_run(desk):
    return _train(desk, "fixed", "train-fixed", 0,
                  ["--template", str(desk / "data" / "template.csv"), "--test-data", str(desk / "data" / "test.csv")])


def test_criterion_01_pi_layer_validity():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    G = pi_layer(rng.standard_normal((10_000, 300)), PiConfig(300, 30))
    elapsed = time.perf_counter() - start
    frac = valid_rows(G).mean()
    record(1, frac == 1.0 and elapsed < 5.0, f"valid fraction {frac:.4f} of 10^4, {elapsed:.2f} s (< 5 s)")


def test_criterion_02_kl():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        dim = int(rng.integers(1, 9))
        mu, lv = rng.normal(0, 1, dim), rng.normal(0, 0.7, dim)
        sd = np.exp(0.5 * lv)
        eps = rng.standard_normal((1_000_000, dim))
        z = mu + sd * eps
        log_ratio = np.sum(-0.5 * eps**2 - 0.5 * lv + 0.5 * z**2, axis=1)
        se = log_ratio.std() / np.sqrt(len(log_ratio))
        worst = max(worst, abs(log_ratio.mean() - kl_loss(mu, lv)) / se)
    spots = [kl_loss(np.zeros(4), np.zeros(4)), kl_loss([1.0], [0.0]), kl_loss([0.0], [np.log(2.0)])]
    expect = [0.0, 0.5, 0.5 * (1 - np.log(2))]
    spot_ok = np.allclose(spots, expect, atol=1e-12, rtol=0)
    record(2, worst < 3 and spot_ok,
           f"max |MC - closed form| = {worst:.2f} SE over 20 cases (< 3); spot values {np.round(spots, 5).tolist()}")


def test_criterion_03_gradients():
    rng = np.random.default_rng(3)
    T, latent, B = 30, 4, 4
    p = network.init_params(T, latent, rng)
    Q = normalize(rng.standard_normal((B, T)))
    template = normalize(rng.standard_normal(T))
    noise, masks = rng.standard_normal((B, latent)), network.dropout_masks(rng, B)
    w, cfg = LossWeights(1.0, 0.1, 0.01, 0.001), PiConfig(T)
    # biases feeding batch norm cancel against the batch mean: their true gradient is 0,
    # so relative error is undefined there and the check is against the oracle's rounding bound
    zero = {f"enc{i}.b" for i in range(p.n_layers)}
    start = time.perf_counter()
    worst, raw, zero_ok, zero_fd = {}, {}, True, 0.0
    for label, tmpl in (("fixed", template), ("predicted", None)):
        total, _, graph = loss_forward(p, Q, w, cfg, template=tmpl, noise=noise, masks=masks)
        analytic = backward(p, graph)
        numeric = fd_gradients(p, Q, w, cfg, tmpl, noise, masks, eps=1e-5)
        errs = {k: relative_error(analytic[k], numeric[k]) for k in analytic}
        worst[label] = max(e for k, e in errs.items() if k not in zero)
        raw[label] = max(errs.values())
        bound = 1e3 * np.finfo(float).eps * abs(float(total)) / 1e-5
        for k in zero:
            zero_fd = max(zero_fd, np.abs(numeric[k]).max())
            zero_ok &= np.abs(analytic[k]).max() <= 1e-12 and np.abs(numeric[k]).max() <= bound
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and zero_ok and elapsed < 60
    record(3, ok, f"max relative error fixed {worst['fixed']:.1e}, predicted {worst['predicted']:.1e} "
                  f"(< 1e-4); batch-norm-fed biases zero={zero_ok} (max |FD| {zero_fd:.1e}, "
                  f"floored ratio incl. them {max(raw.values()):.1e}); {elapsed:.1f} s (< 60 s)")


def test_criterion_04_dp_oracle():
    rng = np.random.default_rng(4)
    cases = [(12, 3), (10, 3), (11, 2), (8, 1), (12, 2)]
    worst = 0.0
    for k in range(50):
        T, L = cases[k % len(cases)]
        qf, qg = normalize(rng.standard_normal(T)), normalize(rng.standard_normal(T))
        worst = max(worst, abs(dp_align(qf, qg, DpConfig(L))[1] - brute_force(qf, qg, L)))
    q = generate_bumps(BumpSpec(T=100, seed=4), 1).srvfs[0]
    gamma, cost = dp_align(q, q)
    sup = np.max(np.abs(gamma - grid(100)))
    record(4, worst <= 1e-10 and cost < 1e-6 and sup <= 1 / 99,
           f"max |DP - enumeration| {worst:.1e} on 50 pairs (<= 1e-10); self cost {cost:.1e}, sup|gamma-id| {sup:.1e}")


def test_criterion_05_karcher():
    Q = generate_bumps(BumpSpec(T=100, seed=5), 20).srvfs
    start = time.perf_counter()
    res = karcher_mean(Q, DpConfig(3), max_iter=50, tol=1e-4, workers=1)
    elapsed = time.perf_counter() - start
    rise = float(np.max(np.diff(res.objective_trace), initial=-np.inf))
    ok = rise <= 1e-8 and res.converged and res.n_iter <= 50 and elapsed < 120
    record(5, ok, f"{res.n_iter} iterations, converged={res.converged}, largest trace step {rise:.1e} (<= 1e-8), "
                  f"{elapsed:.1f} s (< 120 s)")


def test_criterion_06_fixed_training(desk, fixed_run):
    out, code, elapsed = fixed_run
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    reduction = 1 - summary["final"]["fr"] / summary["initial"]["fr"]
    ev = desk / "eval"
    assert main(["eval", "--checkpoint", str(out / "checkpoint.json"), "--data", str(desk / "data" / "test.csv"),
                 "--out", str(ev), "--oracle", "--workers", "1"]) == 0
    s = json.loads((ev / "summary.json").read_text())
    ratio = s["after"]["mean"] / s["oracle"]["mean"]
    params, doc = load_checkpoint(out / "checkpoint.json")
    train_q = to_srvf(read_rows(desk / "data" / "train.csv"))
    held_out = read_rows(ev / "gammas.csv")
    trained = network.predict_warps(params, train_q, PiConfig(100, doc["dims"]["tsmooth"]))
    valid = np.concatenate([valid_rows(held_out), valid_rows(trained)]).mean()
    ok = reduction >= 0.5 and ratio <= 1.5 and valid == 1.0 and elapsed < 15 * 60
    record(6, ok, f"(a) FR {summary['initial']['fr']:.3f} -> {summary['final']['fr']:.3f}, reduction "
                  f"{reduction:.1%} (>= 50%); (b) held-out FR {s['after']['mean']:.4f} vs DP {s['oracle']['mean']:.4f}, "
                  f"ratio {ratio:.3f} (<= 1.5); (c) valid warps {valid:.0%}; training {elapsed:.0f} s (< 900 s)")


def test_criterion_07_template_prediction(desk):
    Q = to_srvf(read_rows(desk / "data" / "train.csv"))
    unwarped = fr_loss(Q, np.broadcast_to(grid(100), Q.shape), normalize(Q.mean(axis=0))).mean()
    finals, costs, norms = [], [], []
    for seed in (0, 1):
        out, code, _ = _train(desk, f"template{seed}", "train-template", seed)
        assert code == 0
        q_hat = read_rows(out / "template_srvf.csv")[0]
        params, doc = load_checkpoint(out / "checkpoint.json")
        gammas = network.predict_warps(params, Q, PiConfig(100, doc["dims"]["tsmooth"]))
        costs.append(float(fr_loss(Q, gammas, q_hat).mean()))
        norms.append(abs(l2_norm(q_hat) - 1))
        finals.append(json.loads((out / "summary.json").read_text())["final"]["total"])
    spread = abs(finals[0] - finals[1]) / min(finals)
    ok = max(costs) < unwarped and max(norms) <= 1e-6 and spread <= 0.2
    record(7, ok, f"(a) FR to q_hat {costs[0]:.4f} / {costs[1]:.4f} < unwarped {unwarped:.4f}; "
                  f"(b) max | ||q_hat|| - 1 | {max(norms):.1e}; (c) final losses {finals[0]:.4f} / {finals[1]:.4f}, "
                  f"spread {spread:.1%} (<= 20%)")


def test_criterion_08_prior_sampling(desk, fixed_run):
    out = desk / "samples"
    assert main(["sample-warps", "--checkpoint", str(fixed_run[0] / "checkpoint.json"), "--n", "200", "--seed", "8",
                 "--out", str(out)]) == 0
    W = read_rows(out / "warps.csv")
    lo, hi = np.percentile(W, [5, 95], axis=0)
    band = bool(np.all(np.diff(lo) >= 0) and np.all(np.diff(hi) >= 0))
    frac = valid_rows(W).mean()
    record(8, len(W) == 200 and frac == 1.0 and band,
           f"{len(W)} prior draws, valid {frac:.0%}, 5-95% band monotone={band}")


def test_criterion_09_srvf_identities():
    t5 = grid(5)
    line = np.max(np.abs(to_srvf(t5) - 1.0))
    t = grid(300)
    parabola = np.max(np.abs(to_srvf(t**2) - np.sqrt(2 * t)))
    rng = np.random.default_rng(9)
    iso = 0.0
    for q in generate_bumps(BumpSpec(T=300, seed=9), 100).srvfs:
        out = warp_srvf(q, pi_layer(rng.standard_normal(300), PiConfig(300, 30)))
        iso = max(iso, abs(inner_product(out, out) - 1.0))
    f = generate_bumps(BumpSpec(T=300, seed=19), 20).raw
    rec = from_srvf(to_srvf(f))
    shape = (f - f[:, :1]) / l2_norm(f - f[:, :1])[:, None]
    back = rec / l2_norm(rec)[:, None]
    round_trip = np.max(l2_norm(shape - back))
    ok = line <= 1e-9 and parabola <= 1e-2 and iso <= 5e-3 and round_trip < 1e-2
    record(9, ok, f"f=t: max|q-1| {line:.1e}; f=t^2: max|q-sqrt(2t)| {parabola:.1e} (<= 1e-2); "
                  f"isometry {iso:.1e} (<= 5e-3); round trip {round_trip:.1e} (< 1e-2)")


def test_criterion_10_determinism(desk, fixed_run):
    again, code, _ = _train(desk, "fixed_again", "train-fixed", 0,
                            ["--template", str(desk / "data" / "template.csv"),
                             "--test-data", str(desk / "data" / "test.csv")])
    assert code == 0
    a = (fixed_run[0] / "checkpoint.json").read_bytes()
    b = (again / "checkpoint.json").read_bytes()
    record(10, a == b, f"checkpoints of two runs bitwise identical={a == b} ({len(a)} bytes)")
