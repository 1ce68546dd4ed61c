"""Reference pipelines: SourceOnly, merged-source static adaptation, and the four
pair-construction ablations of the meta-pair pipeline."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import meta
from . import numerics as nm
from .errors import ConfigError
from .meta import EVAL, TEST, TRAIN, L2ECfg, RunResult, make_pair
from .taskstream import SOURCE, TARGET, DynamicStream

KINDS = (
    "source_only",
    "merged_source_da",
    "l2e_no_source_evolution",
    "l2e_merged_source",
    "l2e_no_historical_target",
    "l2e_all_pairs",
)


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    cfg: L2ECfg

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown baseline {self.kind!r}; expected one of {KINDS}")


def step_budget(cfg: L2ECfg, N: int) -> int:
    """Gradient steps given to single-model baselines.

    Matches the update count of the meta-pair pipeline: N + 1 meta-training
    rounds (warm-started) of ``outer_epochs`` epochs, each touching the 2N - 1
    training pairs with ``inner_steps + 1`` gradient evaluations.
    """
    rounds = N + 1 if cfg.warm_start else 1
    return rounds * cfg.outer_epochs * (2 * N - 1) * (cfg.inner_steps + 1)


def _static_train(init, X, y, cfg, div=None, steps=None, lr=None):
    """Plain full-batch gradient descent on CE (+ gamma * MMD^2 when ``div``)."""
    theta = init
    batch = nm.Batch(X, y)
    kernel = cfg.kernel
    if div is not None and kernel.bandwidth == "median":
        from .divergence import median_heuristic
        kernel = kernel.with_bandwidth(median_heuristic(nm.embed(init, div[0]),
                                                        nm.embed(init, div[1])))
    for _ in range(steps):
        _, g = nm.loss_and_grad(theta, batch, div, cfg.gamma if div is not None else 0.0, kernel)
        theta = nm.sgd_step(theta, g, lr)
    return theta


def _static_result(kind, stream, cfg, theta, t0):
    N = stream.N
    acc = meta.evaluate(theta, stream.targets[N])
    hist = {j: meta.evaluate(theta, stream.targets[j - 1]) for j in range(1, N + 1)}
    task = dict(hist)
    task[N + 1] = acc
    return RunResult(kind, cfg.seed, theta, theta, acc, float(np.mean(list(hist.values()))),
                     task, hist, {}, 0, time.perf_counter() - t0)


def _static_lr(cfg):
    return cfg.inner_lr


def run_source_only(stream: DynamicStream, cfg: L2ECfg) -> RunResult:
    """CE on the union of labeled source snapshots; target features never used."""
    t0 = time.perf_counter()
    merged = stream.merged_source()
    init = nm.init_params(cfg.arch(stream), cfg.seed)
    theta = _static_train(init, merged.features, merged.labels, cfg,
                          steps=step_budget(cfg, stream.N), lr=_static_lr(cfg))
    return _static_result("source_only", stream, cfg, theta, t0)


def run_merged_source_da(stream: DynamicStream, cfg: L2ECfg) -> RunResult:
    """Static CE + gamma * MMD^2 between merged source and the newest target."""
    t0 = time.perf_counter()
    merged = stream.merged_source()
    init = nm.init_params(cfg.arch(stream), cfg.seed)
    div = (merged.features, stream.targets[stream.N].features)
    theta = _static_train(init, merged.features, merged.labels, cfg, div=div,
                          steps=step_budget(cfg, stream.N), lr=_static_lr(cfg))
    return _static_result("merged_source_da", stream, cfg, theta, t0)


def _target_chain(stream, cfg, init, first_k=1):
    T = stream.targets
    N = stream.N
    out = []
    for j in range(1, N + 1):
        role = TEST if j == N else TRAIN
        out.append(make_pair(j, T[j - 1], T[j - 1], T[j], cfg, init, role=role,
                             adapter_for=j + 1 if j < N else None))
    return out


def pairs_no_source_evolution(stream, cfg, init):
    S, T = stream.sources, stream.targets
    return [make_pair(0, S[0], S[0], T[0], cfg, init, adapter_for=1)] + _target_chain(stream, cfg, init)


def pairs_merged_source(stream, cfg, init):
    merged = stream.merged_source()
    T = stream.targets
    p0 = make_pair(0, merged, merged, T[0], cfg, init, adapter_for=1,
                   cls_ref=(SOURCE, 0), div_refs=((SOURCE, 0), (TARGET, 1)))
    return [p0] + _target_chain(stream, cfg, init)


def pairs_no_historical_target(stream, cfg, init):
    """Source chain only; the newest source is aligned straight to the newest
    target at test time. Evaluation-only pairs align it to each historical target."""
    N = stream.N
    S, T = stream.sources, stream.targets
    pairs = [make_pair(-j, S[j], S[j - 1], S[j], cfg, init) for j in range(N - 1, 0, -1)]
    pairs.append(make_pair(N, S[N - 1], S[N - 1], T[N], cfg, init, role=TEST))
    for j in range(1, N + 1):
        pairs.append(make_pair(100 + j, S[N - 1], S[N - 1], T[j - 1], cfg, init,
                               role=EVAL, adapter_for=j))
    return pairs


def pairs_all(stream, cfg, init):
    """Every unordered within-role pair of historical tasks plus the cross pair.

    Source pair (a < b) classifies source b; target pair (a < b <= N) classifies
    target a (the only side that can be labeled by then). The consecutive pairs
    double as adaptation pairs and target N -> N+1 stays the meta-test pair.
    Count: 2 * C(N, 2) + 2.
    """
    N = stream.N
    S, T = stream.sources, stream.targets
    pairs = []
    for b in range(N, 1, -1):
        for a in range(b - 1, 0, -1):
            # ordering key: source-only pairs are always trainable
            pairs.append(make_pair(-(N * (N - b) + (b - a)), S[b - 1], S[a - 1], S[b - 1], cfg, init))
    pairs.append(make_pair(0, S[0], S[0], T[0], cfg, init, adapter_for=1))
    for b in range(2, N + 1):
        for a in range(1, b):
            # trainable once target b is labeled, same rule as consecutive pair k=b-1
            pairs.append(make_pair(b - 1, T[a - 1], T[a - 1], T[b - 1], cfg, init,
                                   adapter_for=b if a == b - 1 else None))
    pairs.append(make_pair(N, T[N - 1], T[N - 1], T[N], cfg, init, role=TEST))
    return pairs


def all_pairs_count(N: int) -> int:
    return N * (N - 1) + 2


_PAIR_BUILDERS = {
    "l2e_no_source_evolution": pairs_no_source_evolution,
    "l2e_merged_source": pairs_merged_source,
    "l2e_no_historical_target": pairs_no_historical_target,
    "l2e_all_pairs": pairs_all,
}


def build_pairs(kind, stream, cfg, init):
    return _PAIR_BUILDERS[kind](stream, cfg, init)


def run_baseline(spec: BaselineSpec, stream: DynamicStream) -> RunResult:
    cfg = spec.cfg
    if spec.kind == "source_only":
        return run_source_only(stream, cfg)
    if spec.kind == "merged_source_da":
        return run_merged_source_da(stream, cfg)
    init = nm.init_params(cfg.arch(stream), cfg.seed)
    pairs = meta._stage("build_meta_pairs", None, build_pairs, spec.kind, stream.stripped(), cfg, init)
    return meta.run_pairs(stream, pairs, cfg, init, spec.kind)


def run_method(name: str, stream: DynamicStream, cfg: L2ECfg) -> RunResult:
    if name == "l2e":
        return meta.run_l2e(stream, cfg)
    return run_baseline(BaselineSpec(name, cfg), stream)
