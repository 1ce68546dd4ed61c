"""Acceptance criteria 1-8.

Each test prints one ``criterion N: PASS|FAIL ...`` line (outside pytest's
capture) and then asserts. Runtime limits are part of each criterion.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from dyntl import baselines, bounds, cli, meta
from dyntl import divergence as dv
from dyntl import numerics as nm
from dyntl.meta import L2ECfg
from dyntl.taskstream import StreamCfg, gen_stream

from conftest import central_diff

TREND_STREAM = StreamCfg(N=5, m=200, rho_s=-8, rho_t=8, target_noise_slope=0.05)
NO_DRIFT_STREAM = StreamCfg(N=5, m=200, rho_s=0, rho_t=0, base_noise=0.0,
                            target_noise_slope=0.0, shared_base=True)
SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def grad_rel_err(g, fd, abs_floor=1e-7):
    """Worst violation ratio; <= 1 means every coordinate is within tolerance."""
    tol = np.maximum(abs_floor, 1e-4 * np.maximum(np.abs(g), np.abs(fd)))
    return float(np.max(np.abs(g - fd) / tol))


def test_c1_gradient_suite(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        hidden = tuple(int(h) for h in rng.integers(2, 6, size=rng.integers(0, 3)))
        arch = nm.Arch(int(rng.integers(1, 4)), hidden, int(rng.integers(1, 4)),
                       int(rng.integers(2, 4)), embed_activation=["tanh", "identity"][seed % 2])
        params = nm.init_params(arch, seed)
        m = int(rng.integers(2, 8))
        batch = nm.Batch(rng.normal(size=(m, arch.input_dim)),
                         rng.integers(0, arch.num_classes, m))
        gamma = 0.0 if seed % 2 == 0 else float(rng.uniform(0.05, 1.0))
        div = (rng.normal(size=(5, arch.input_dim)), rng.normal(size=(4, arch.input_dim)) + 0.7)
        kern = dv.KernelCfg(bandwidth=float(rng.uniform(0.5, 2.0)))

        def f(vec):
            return nm.loss_and_grad(nm.ModelParams(arch, vec), batch, div, gamma, kern)[0]

        _, g = nm.loss_and_grad(params, batch, div, gamma, kern)
        worst = max(worst, grad_rel_err(g.vector, central_diff(f, params.vector)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 30
    report(1, ok, f"(100 configs, worst err/tol={worst:.3g}, {elapsed:.1f}s < 30s)")
    assert ok


def _brute(X, Y, s):
    k = lambda a, b: math.exp(-float(((a - b) ** 2).sum()) / (2 * s * s))
    mk = lambda A, B: sum(k(a, b) for a in A for b in B) / (len(A) * len(B))
    return mk(X, X) + mk(Y, Y) - 2 * mk(X, Y)


def test_c2_mmd_suite(report):
    t0 = time.perf_counter()
    fails = []
    rng = np.random.default_rng(0)
    one = dv.KernelCfg(bandwidth=1.0)
    for trial in range(50):
        X = rng.normal(size=(rng.integers(1, 21), 3))
        Y = rng.normal(size=(rng.integers(1, 21), 3)) + 0.3
        k = dv.KernelCfg(bandwidth=float(rng.uniform(0.3, 3)))
        if dv.mmd2_biased(X, X, dv.KernelCfg()).value > 1e-12:
            fails.append("self")
        if abs(dv.mmd2_biased(X, Y, k).value - dv.mmd2_biased(Y, X, k).value) > 1e-12:
            fails.append("symmetry")
        if abs(dv.mmd2_biased(X, Y, k).value - _brute(X, Y, k.bandwidth)) > 1e-12:
            fails.append("brute")
    two = dv.mmd2_biased(np.zeros((1, 1)), np.ones((1, 1)), one).value
    if abs(two - (2 - 2 * math.exp(-0.5))) > 1e-12:
        fails.append("closed form")
    Za, Zb = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))
    _, dZa, dZb, _ = dv.mmd2_with_grad(Za, Zb, one)
    fda = central_diff(lambda v: dv.mmd2_with_grad(v.reshape(6, 3), Zb, one)[0], Za.ravel())
    fdb = central_diff(lambda v: dv.mmd2_with_grad(Za, v.reshape(5, 3), one)[0], Zb.ravel())
    if max(np.abs(dZa.ravel() - fda).max(), np.abs(dZb.ravel() - fdb).max()) > 1e-5:
        fails.append("gradient")
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 10
    report(2, ok, f"(failures={sorted(set(fails))}, {elapsed:.1f}s < 10s)")
    assert ok


def test_c3_meta_structure(report):
    t0 = time.perf_counter()
    fails = []
    for N in range(2, 11):
        s = gen_stream(StreamCfg(N=N, m=12, seed=N)).stripped()
        pairs = meta.build_meta_pairs(s, L2ECfg(val_count=4))
        ks = [p.k for p in pairs]
        if len(pairs) != 2 * N or len(meta.training_pairs(pairs, N - 1)) != 2 * N - 1:
            fails.append(f"count N={N}")
        if ks != list(range(1 - N, N + 1)):
            fails.append(f"order N={N}")
        for p in pairs:
            want = (("source", -p.k + 1), (("source", -p.k), ("source", -p.k + 1))) if p.k < 0 else \
                (("source", 1), (("source", 1), ("target", 1))) if p.k == 0 else \
                (("target", p.k), (("target", p.k), ("target", p.k + 1)))
            if (p.cls_ref, p.div_refs) != want:
                fails.append(f"wiring N={N} k={p.k}")

    stream = gen_stream(StreamCfg(N=3, m=40, seed=1))
    cfg = L2ECfg(inner_lr=0.0, outer_lr=0.2, inner_steps=3, val_count=8, hidden_dims=(6,), embed_dim=3)
    init = nm.init_params(cfg.arch(stream), 0)
    pairs = meta.build_meta_pairs(stream.stripped(), cfg, init)
    got = meta.meta_train(pairs, -1, init, cfg, epochs=5)
    theta = init
    for _ in range(5):
        g = sum(meta.zeta(theta, p, "val", cfg)[1].vector for p in meta.training_pairs(pairs, -1))
        theta = nm.ModelParams(theta.arch, theta.vector - cfg.outer_lr * g)
    if np.max(np.abs(got.vector - theta.vector)) >= 1e-9:
        fails.append("alpha=0 collapse")

    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(1, 80))
        p = float(rng.uniform(1, 100))
        ent = rng.choice([0.1, 0.5, 0.9], m) if rng.random() < 0.5 else rng.random(m)
        sel = meta.select_lowest_entropy(ent, p)
        if sel.sum() != min(m, math.ceil(p * m / 100)):
            fails.append("selection count")
        if sel.any() and (~sel).any():
            cut = ent[sel].max()
            if cut > ent[~sel].min():
                fails.append("dominance")
            kept = np.flatnonzero(sel & (ent == cut))
            dropped = np.flatnonzero(~sel & (ent == cut))
            if dropped.size and kept.max() > dropped.min():
                fails.append("tie rule")
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 30
    report(3, ok, f"(failures={sorted(set(fails))[:5]}, {elapsed:.1f}s < 30s)")
    assert ok


def test_c4_bound_oracle(report):
    t0 = time.perf_counter()
    sweep = bounds.oracle_sweep(200, seed=0, coefficient="stated")
    worst_sum = 0.0
    for i in range(200):
        inst = bounds.random_instance(10_000 + i)
        for kind in ("l1", "f_js", "c_div", "mmd"):
            rep = bounds.compute_bound(bounds.exact_errors(inst, inst.H[0]),
                                       bounds.chain_divergences(inst, kind), 0.01, 1.0, 0.05,
                                       30, inst.N)
            worst_sum = max(worst_sum, abs(rep.total - sum(rep.terms.values())))
    elapsed = time.perf_counter() - t0
    ok = sweep["held"] == 200 and worst_sum <= 1e-12 and elapsed < 60
    report(4, ok, f"(holds: {sweep['holds']}, min slack {sweep['min_slack']:.4f}, "
                  f"term-sum err {worst_sum:.1e}, {elapsed:.1f}s < 60s)")
    assert ok


def _mean_metrics(method, stream_cfg, seeds):
    accs, haccs = [], []
    for s in seeds:
        res = baselines.run_method(method, gen_stream(replace(stream_cfg, seed=s)), L2ECfg(seed=s))
        accs.append(res.acc_newest)
        haccs.append(res.h_acc)
    return float(np.mean(accs)), float(np.mean(haccs))


@pytest.mark.slow
def test_c5_trend_reproduction(report):
    t0 = time.perf_counter()
    l2e = _mean_metrics("l2e", TREND_STREAM, SEEDS)
    src = _mean_metrics("source_only", TREND_STREAM, SEEDS)
    noh = _mean_metrics("l2e_no_historical_target", TREND_STREAM, SEEDS)
    elapsed = time.perf_counter() - t0
    ok = (l2e[0] >= src[0] + 0.05 and l2e[0] > noh[0] and l2e[1] >= src[1] and elapsed < 300)
    report(5, ok, f"(acc L2E {l2e[0]:.3f} / SourceOnly {src[0]:.3f} / no-hist {noh[0]:.3f}; "
                  f"h_acc L2E {l2e[1]:.3f} / SourceOnly {src[1]:.3f}; {elapsed:.0f}s < 300s)")
    assert ok


def test_c6_divergence_evolution(report):
    t0 = time.perf_counter()
    chain_ok, rhos = True, []
    for seed in range(10):
        s = gen_stream(replace(TREND_STREAM, seed=seed))
        rows = cli.divergence_table(s)
        T = [t.features for t in s.targets]
        for j in range(s.N - 2):
            if not rows[j][3] < dv.mmd2_biased(T[j], T[j + 3]).value:
                chain_ok = False
        rhos.append(spearmanr(np.arange(s.N), [r[2] for r in rows])[0])
    elapsed = time.perf_counter() - t0
    ok = chain_ok and min(rhos) > 0.8 and elapsed < 60
    report(6, ok, f"(1-step < 3-step on all links: {chain_ok}; min Spearman rho {min(rhos):.3f}; "
                  f"{elapsed:.1f}s < 60s)")
    assert ok


def test_c7_determinism(report, tmp_path):
    doc = {"stream": {"N": 3, "m": 40, "rho_s": -8, "rho_t": 8},
           "l2e": {"inner_steps": 2, "outer_epochs": 4, "val_count": 8},
           "methods": ["l2e", "source_only", "l2e_all_pairs"], "seeds": [0, 1]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    files = []
    for name in ("a", "b"):
        assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / name)]) == 0
        files.append([(tmp_path / name / f).read_bytes() for f in ("summary.csv", "results.json")])
    ok = files[0] == files[1]
    report(7, ok, "(summary.csv and results.json byte-identical across reruns)")
    assert ok


@pytest.mark.slow
def test_c8_no_drift_no_harm(report):
    t0 = time.perf_counter()
    l2e = _mean_metrics("l2e", NO_DRIFT_STREAM, SEEDS)
    src = _mean_metrics("source_only", NO_DRIFT_STREAM, SEEDS)
    gap = src[0] - l2e[0]
    ok = abs(gap) <= 0.05
    report(8, ok, f"(acc L2E {l2e[0]:.3f} vs SourceOnly {src[0]:.3f}, |gap| {abs(gap):.3f}, needs <= 0.05; "
                  f"{time.perf_counter() - t0:.0f}s)")
    assert ok
