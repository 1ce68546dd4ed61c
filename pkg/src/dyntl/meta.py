"""Meta-pairs of consecutive tasks, first-order meta-training, sequential
pseudo-labeling and fast adaptation to the newest target task.

Pair index convention for a stream with N source and N+1 target snapshots:

    k = -j  (1 <= j <= N-1)  classify source j+1, match (source j, source j+1)
    k = 0                    classify source 1,   match (source 1, target 1)
    k = j   (1 <= j <= N)    classify target j,   match (target j, target j+1)

Pairs with k <= N-1 are used for meta-training; k = N is the meta-test pair.
Target pairs classify pseudo-labeled data, resolved one time stamp at a time.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nm
from .divergence import KernelCfg, median_heuristic
from .errors import ConfigError, DataError, StageError, StateError
from .taskstream import SOURCE, TARGET, DynamicStream, TaskSnapshot, split_indices

TRAIN, TEST, EVAL = "train", "test", "eval"


@dataclass(frozen=True)
class L2ECfg:
    gamma: float = 0.1
    p_percent: float = 80.0
    inner_lr: float = 0.3
    inner_steps: int = 8
    outer_lr: float = 0.4
    outer_epochs: int = 30
    batch_size: int | None = None
    val_count: int = 32
    seed: int = 0
    kernel: KernelCfg = KernelCfg()
    pseudo_weight: float = 1.0
    hidden_dims: tuple[int, ...] = (32,)
    embed_dim: int = 8
    embed_activation: str = "tanh"
    warm_start: bool = True

    def __post_init__(self):
        errs = []
        if self.gamma < 0:
            errs.append("gamma must be >= 0")
        if not 0 < self.p_percent <= 100:
            errs.append("p_percent must be in (0, 100]")
        if self.inner_lr < 0 or self.outer_lr < 0:
            errs.append("learning rates must be >= 0")
        if self.inner_steps < 1:
            errs.append("inner_steps must be >= 1")
        if self.outer_epochs < 0:
            errs.append("outer_epochs must be >= 0")
        if self.val_count < 1:
            errs.append("val_count must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            errs.append("batch_size must be >= 1 when set")
        if self.pseudo_weight < 0:
            errs.append("pseudo_weight must be >= 0")
        if errs:
            raise ConfigError("; ".join(errs))
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if isinstance(self.kernel, dict):
            object.__setattr__(self, "kernel", KernelCfg.from_dict(self.kernel))

    def arch(self, stream: DynamicStream) -> nm.Arch:
        return nm.Arch(stream.feature_dim, self.hidden_dims, self.embed_dim,
                       stream.num_classes, "tanh", self.embed_activation)

    def to_dict(self):
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "kernel" in d:
            d["kernel"] = KernelCfg.from_dict(d["kernel"])
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


@dataclass(eq=False)
class MetaPair:
    """One zeta_k term: a classification set plus a pair of snapshots to align."""

    k: int
    cls_ref: tuple
    div_refs: tuple
    pseudo: bool
    features: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    div_a: np.ndarray
    div_b: np.ndarray
    kernel: KernelCfg
    labels: np.ndarray | None = None
    selected: np.ndarray | None = None
    role: str = TRAIN
    adapter_for: int | None = None

    @property
    def resolved(self):
        return self.labels is not None

    def describe(self):
        return f"pair k={self.k} cls={self.cls_ref} div={self.div_refs}"


@dataclass
class PseudoLabelSet:
    time_index: int
    labels: np.ndarray
    entropies: np.ndarray
    selected: np.ndarray
    p_percent: float
    provenance: dict = field(default_factory=dict)


@dataclass(eq=False)
class RunResult:
    method: str
    seed: int
    theta_final: nm.ModelParams
    theta_init: nm.ModelParams
    acc_newest: float
    h_acc: float
    task_accuracies: dict
    unadapted_accuracies: dict
    pseudo_label_accuracy: dict
    n_pairs: int
    wall_time: float = 0.0
    pseudo_sets: list = field(default_factory=list)

    @property
    def unadapted_h_acc(self):
        vals = list(self.unadapted_accuracies.values())
        return float(np.mean(vals)) if vals else float("nan")

    def to_json_dict(self, include_timing=False):
        d = {
            "method": self.method, "seed": self.seed,
            "acc": self.acc_newest, "h_acc": self.h_acc,
            "unadapted_h_acc": self.unadapted_h_acc,
            "task_accuracies": {str(k): v for k, v in self.task_accuracies.items()},
            "unadapted_accuracies": {str(k): v for k, v in self.unadapted_accuracies.items()},
            "pseudo_label_accuracy": {str(k): v for k, v in self.pseudo_label_accuracy.items()},
            "n_pairs": self.n_pairs,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


def pair_seed(cfg: L2ECfg, ref) -> int:
    role, j = ref
    code = {SOURCE: 1, TARGET: 2}.get(role, 3)
    return int(np.random.SeedSequence([cfg.seed, code, j]).generate_state(1)[0])


def make_pair(k, cls_snap: TaskSnapshot, div_a: TaskSnapshot, div_b: TaskSnapshot,
              cfg: L2ECfg, init: nm.ModelParams | None = None, role=TRAIN,
              adapter_for=None, cls_ref=None, div_refs=None) -> MetaPair:
    """Build a pair; the median bandwidth (if requested) is frozen here.

    With ``init`` the median is taken over the embeddings of the two
    divergence snapshots under ``init``; otherwise over raw features.
    """
    if cfg.val_count >= cls_snap.m:
        raise ConfigError(f"val_count={cfg.val_count} must be < snapshot size {cls_snap.m} "
                          f"({cls_snap.role} {cls_snap.time_index})")
    cls_ref = cls_ref or cls_snap.ref
    tr, va = split_indices(cls_snap.m, cfg.val_count, pair_seed(cfg, cls_ref))
    pseudo = cls_snap.role == TARGET
    if not pseudo and cls_snap.labels is None:
        raise DataError(f"source snapshot {cls_ref} has no labels")
    kernel = cfg.kernel
    if kernel.bandwidth == "median":
        if init is not None:
            bw = median_heuristic(nm.embed(init, div_a.features), nm.embed(init, div_b.features))
        else:
            bw = median_heuristic(div_a.features, div_b.features)
        kernel = kernel.with_bandwidth(bw)
    return MetaPair(
        k=k, cls_ref=cls_ref, div_refs=div_refs or (div_a.ref, div_b.ref), pseudo=pseudo,
        features=cls_snap.features, train_idx=tr, val_idx=va,
        div_a=div_a.features, div_b=div_b.features, kernel=kernel,
        labels=None if pseudo else cls_snap.labels, role=role, adapter_for=adapter_for,
    )


def build_meta_pairs(stream: DynamicStream, cfg: L2ECfg,
                     init: nm.ModelParams | None = None) -> list[MetaPair]:
    """The 2N consecutive meta-pairs, ordered by ascending k."""
    N = stream.N
    S, T = stream.sources, stream.targets
    pairs = []
    for j in range(N - 1, 0, -1):
        pairs.append(make_pair(-j, S[j], S[j - 1], S[j], cfg, init))
    pairs.append(make_pair(0, S[0], S[0], T[0], cfg, init, adapter_for=1))
    for j in range(1, N + 1):
        role = TEST if j == N else TRAIN
        pairs.append(make_pair(j, T[j - 1], T[j - 1], T[j], cfg, init, role=role,
                               adapter_for=j + 1 if j < N else None))
    return pairs


def _rows(pair: MetaPair, split: str):
    if split == "train":
        return pair.train_idx
    if split == "val":
        return pair.val_idx
    if split == "all":
        return np.arange(pair.features.shape[0])
    raise ConfigError(f"unknown split {split!r}")


def cls_batch(pair: MetaPair, split: str, cfg: L2ECfg, rng=None) -> nm.Batch:
    rows = _rows(pair, split)
    weights = None
    if pair.pseudo:
        if not pair.resolved:
            raise StateError(f"{pair.describe()} has unresolved pseudo-labels")
        rows = rows[pair.selected[rows]]
        weights = np.full(rows.shape[0], cfg.pseudo_weight)
    if rng is not None and cfg.batch_size is not None and rows.shape[0] > cfg.batch_size:
        pick = np.sort(rng.choice(rows.shape[0], cfg.batch_size, replace=False))
        rows = rows[pick]
        weights = None if weights is None else weights[pick]
    return nm.Batch(pair.features[rows], pair.labels[rows], weights)


def zeta(params: nm.ModelParams, pair: MetaPair, split: str, cfg: L2ECfg, rng=None):
    """Classification loss on the pair's split plus gamma * MMD^2 between the
    embeddings of the full divergence snapshots. Returns (loss, GradVector)."""
    batch = cls_batch(pair, split, cfg, rng)
    return nm.loss_and_grad(params, batch, (pair.div_a, pair.div_b), cfg.gamma, pair.kernel)


def inner_adapt(params: nm.ModelParams, pair: MetaPair, cfg: L2ECfg, split: str = "train",
                rng=None) -> nm.ModelParams:
    """``cfg.inner_steps`` gradient steps on zeta_k over ``split``."""
    if cfg.inner_lr == 0:
        return params.copy()
    theta = params
    for _ in range(cfg.inner_steps):
        _, g = zeta(theta, pair, split, cfg, rng)
        theta = nm.sgd_step(theta, g, cfg.inner_lr)
    return theta


def training_pairs(pairs, upto_k):
    active = [p for p in pairs if p.role == TRAIN and p.k <= upto_k]
    return sorted(active, key=lambda p: p.k)


def meta_train(pairs, upto_k: int, init: nm.ModelParams, cfg: L2ECfg,
               epochs: int | None = None) -> nm.ModelParams:
    """First-order MAML over the training pairs with k <= upto_k.

    One outer step per epoch: the validation gradients at each pair's adapted
    parameters are summed (ascending k) and applied at ``cfg.outer_lr``.
    """
    active = training_pairs(pairs, upto_k)
    for p in active:
        if p.pseudo and not p.resolved:
            raise StateError(f"{p.describe()} is not resolved for meta-training")
    epochs = cfg.outer_epochs if epochs is None else epochs
    theta = init.copy()
    if not active or epochs == 0:
        return theta
    for epoch in range(epochs):
        g = np.zeros_like(theta.vector)
        for i, pair in enumerate(active):
            rng = None
            if cfg.batch_size is not None:
                rng = np.random.default_rng([cfg.seed, epoch, i, pair.k + 1000])
            adapted = inner_adapt(theta, pair, cfg, rng=rng)
            _, gk = zeta(adapted, pair, "val", cfg)
            g += gk.vector
        theta = nm.ModelParams(theta.arch, theta.vector - cfg.outer_lr * g)
    return theta


def adapter_pair(pairs, j):
    for p in pairs:
        if p.adapter_for == j:
            return p
    raise StateError(f"no adaptation pair for target time stamp {j}")


def needs_pseudo(pairs, j):
    return any(p.pseudo and p.cls_ref == (TARGET, j) and p.role in (TRAIN, TEST) for p in pairs)


def select_lowest_entropy(entropies, p_percent):
    """Boolean mask of the ceil(p% * m) lowest-entropy rows; ties keep lower rows."""
    m = entropies.shape[0]
    n = min(m, math.ceil(p_percent * m / 100.0))
    order = np.argsort(entropies, kind="stable")
    mask = np.zeros(m, dtype=bool)
    mask[order[:n]] = True
    return mask


def pseudo_label(stream: DynamicStream, pairs, j: int, theta_star_prev: nm.ModelParams,
                 cfg: L2ECfg, trained_on=None) -> PseudoLabelSet:
    """Adapt the previous initialization with the pair ending at target j, label
    target j by argmax, keep the lowest-entropy p%, and resolve every pair that
    classifies target j."""
    adapter = adapter_pair(pairs, j)
    if adapter.pseudo and not adapter.resolved:
        raise StateError(f"{adapter.describe()} must be resolved before labeling target {j}")
    adapted = inner_adapt(theta_star_prev, adapter, cfg)
    X = stream.targets[j - 1].features
    _, logits, probs = nm.forward(adapted, X)
    labels = np.argmax(logits, axis=1)
    ent = nm.predict_entropy(probs)
    selected = select_lowest_entropy(ent, cfg.p_percent)
    for p in pairs:
        if p.pseudo and p.cls_ref == (TARGET, j):
            p.labels = labels
            p.selected = selected
    prov = {"adapted_with_k": adapter.k, "adapter_cls": adapter.cls_ref}
    if trained_on is not None:
        prov["trained_on_k"] = list(trained_on)
    return PseudoLabelSet(j, labels, ent, selected, cfg.p_percent, prov)


def meta_test(theta_star_N: nm.ModelParams, pair_N: MetaPair, cfg: L2ECfg) -> nm.ModelParams:
    """Adapt on the full meta-test pair (no validation split)."""
    if pair_N.pseudo and not pair_N.resolved:
        raise StateError(f"{pair_N.describe()} is not resolved for meta-testing")
    return inner_adapt(theta_star_N, pair_N, cfg, split="all")


def evaluate(params: nm.ModelParams, snapshot: TaskSnapshot) -> float:
    y = snapshot.truth()
    if y is None:
        raise DataError(f"snapshot {snapshot.ref} has no labels to evaluate against")
    return float(np.mean(nm.predict(params, snapshot.features) == y))


def historical_accuracies(theta_init, stream: DynamicStream, pairs, cfg: L2ECfg):
    """Per-target accuracies after adapting ``theta_init`` with each task's pair,
    plus the unadapted accuracies."""
    adapted, raw = {}, {}
    for j in range(1, stream.N + 1):
        pair = adapter_pair(pairs, j)
        snap = stream.targets[j - 1]
        adapted[j] = evaluate(inner_adapt(theta_init, pair, cfg), snap)
        raw[j] = evaluate(theta_init, snap)
    return adapted, raw


def evaluate_historical(theta_init, stream: DynamicStream, pairs, cfg: L2ECfg) -> float:
    adapted, _ = historical_accuracies(theta_init, stream, pairs, cfg)
    return float(np.mean(list(adapted.values())))


def _stage(name, idx, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, idx, exc) from exc


def run_pairs(stream: DynamicStream, pairs, cfg: L2ECfg, init: nm.ModelParams,
              method: str = "l2e") -> RunResult:
    """Sequential meta-training / pseudo-labeling / meta-testing over ``pairs``.

    ``stream`` keeps its evaluation labels; training stages only see pairs
    built from a stripped copy.
    """
    t0 = time.perf_counter()
    N = stream.N
    theta = init
    pl_sets = []
    for j in range(1, N + 1):
        start = theta if cfg.warm_start else init
        theta = _stage("meta_train", j - 2, meta_train, pairs, j - 2, start, cfg)
        if needs_pseudo(pairs, j):
            seen = [p.k for p in training_pairs(pairs, j - 2)]
            pl = _stage("pseudo_label", j, pseudo_label, stream.stripped(), pairs, j, theta,
                        cfg, trained_on=seen)
            pl_sets.append(pl)
    start = theta if cfg.warm_start else init
    theta_star = _stage("meta_train", N - 1, meta_train, pairs, N - 1, start, cfg)
    tests = [p for p in pairs if p.role == TEST]
    if len(tests) != 1:
        raise StageError("meta_test", N, StateError(f"expected one meta-test pair, got {len(tests)}"))
    theta_final = _stage("meta_test", tests[0].k, meta_test, theta_star, tests[0], cfg)
    acc = _stage("evaluate", N + 1, evaluate, theta_final, stream.targets[N])
    adapted, raw = _stage("evaluate_historical", None, historical_accuracies,
                          theta_star, stream, pairs, cfg)
    pl_acc = {}
    for pl in pl_sets:
        truth = stream.targets[pl.time_index - 1].eval_labels
        if truth is not None:
            pl_acc[pl.time_index] = float(np.mean(pl.labels[pl.selected] == truth[pl.selected]))
    adapted[N + 1] = acc
    return RunResult(
        method=method, seed=cfg.seed, theta_final=theta_final, theta_init=theta_star,
        acc_newest=acc, h_acc=float(np.mean([adapted[j] for j in range(1, N + 1)])),
        task_accuracies=adapted, unadapted_accuracies=raw, pseudo_label_accuracy=pl_acc,
        n_pairs=len(pairs), wall_time=time.perf_counter() - t0, pseudo_sets=pl_sets,
    )


def run_l2e(stream: DynamicStream, cfg: L2ECfg) -> RunResult:
    """The full pipeline on the consecutive meta-pairs."""
    init = nm.init_params(cfg.arch(stream), cfg.seed)
    pairs = _stage("build_meta_pairs", None, build_meta_pairs, stream.stripped(), cfg, init)
    return run_pairs(stream, pairs, cfg, init, "l2e")
