"""Synthetic drifting task streams, CSV I/O and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError, ShapeError

SOURCE = "source"
TARGET = "target"


@dataclass(frozen=True, eq=False)
class TaskSnapshot:
    """One task at one time stamp.

    Target snapshots keep their true labels in ``eval_labels`` only; training
    code receives streams passed through :meth:`DynamicStream.stripped`.
    """

    features: np.ndarray
    labels: np.ndarray | None
    time_index: int
    role: str
    eval_labels: np.ndarray | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ShapeError(f"snapshot features must be a nonempty 2-D array, got {X.shape}")
        object.__setattr__(self, "features", X)
        m = X.shape[0]
        for name in ("labels", "eval_labels"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.int64)
                if v.shape != (m,):
                    raise ShapeError(f"{name} has shape {v.shape}, expected ({m},)")
                object.__setattr__(self, name, v)
        ids = np.arange(m) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        object.__setattr__(self, "row_ids", ids)
        if self.role not in (SOURCE, TARGET):
            raise ConfigError(f"role must be 'source' or 'target', got {self.role!r}")
        if int(self.time_index) < 0:
            raise ConfigError("time_index must be >= 0")

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def ref(self):
        return (self.role, self.time_index)

    def truth(self):
        """Labels for metric computation: eval labels when present, else labels."""
        return self.eval_labels if self.eval_labels is not None else self.labels

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return TaskSnapshot(
            self.features[idx],
            None if self.labels is None else self.labels[idx],
            self.time_index, self.role,
            None if self.eval_labels is None else self.eval_labels[idx],
            self.row_ids[idx],
        )

    def equals(self, other) -> bool:
        def same(a, b):
            return (a is None and b is None) or (a is not None and b is not None
                                                 and np.array_equal(a, b))
        return (self.time_index == other.time_index and self.role == other.role
                and np.array_equal(self.features, other.features)
                and same(self.labels, other.labels) and same(self.eval_labels, other.eval_labels))


@dataclass(frozen=True, eq=False)
class DynamicStream:
    sources: tuple[TaskSnapshot, ...]
    targets: tuple[TaskSnapshot, ...]
    num_classes: int
    feature_dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "targets", tuple(self.targets))
        self.validate()

    @property
    def N(self):
        return len(self.sources)

    def validate(self):
        N = len(self.sources)
        if N < 1:
            raise ConfigError("stream needs at least one source snapshot")
        if len(self.targets) != N + 1:
            raise ConfigError(f"stream needs N+1={N + 1} target snapshots, got {len(self.targets)}")
        for role, snaps in ((SOURCE, self.sources), (TARGET, self.targets)):
            for j, s in enumerate(snaps, start=1):
                if s.role != role or s.time_index != j:
                    raise ConfigError(f"{role} snapshot {j} has role {s.role!r}, "
                                      f"time index {s.time_index}")
                if s.d != self.feature_dim:
                    raise ShapeError(f"{role} snapshot {j} has d={s.d}, stream d={self.feature_dim}")
                for lab in (s.labels, s.eval_labels):
                    if lab is not None and (lab.min() < 0 or lab.max() >= self.num_classes):
                        raise DataError(f"{role} snapshot {j}: label outside [0, {self.num_classes})")
            if role == SOURCE and any(s.labels is None for s in snaps):
                raise DataError("every source snapshot must carry labels")
        if any(t.labels is not None for t in self.targets):
            raise DataError("target snapshots must not carry training labels")

    def snapshot(self, ref):
        role, j = ref
        return (self.sources if role == SOURCE else self.targets)[j - 1]

    def stripped(self) -> "DynamicStream":
        """Copy with every target ``eval_labels`` removed."""
        return replace(self, targets=tuple(replace(t, eval_labels=None) for t in self.targets))

    def merged_source(self) -> TaskSnapshot:
        """All source snapshots concatenated into one labeled pseudo-snapshot (time 0)."""
        return TaskSnapshot(np.vstack([s.features for s in self.sources]),
                            np.concatenate([s.labels for s in self.sources]), 0, SOURCE)


@dataclass(frozen=True)
class StreamCfg:
    """Drift generator settings.

    Rotation per step is ``rho_* * scale`` degrees (defaults -30 and +15).
    Noise std at step j is ``*_noise_base + *_noise_slope * (j - 1)``, where the
    target slope defaults to ``0.05 * noise_unit``.
    """

    generator: str = "two_moons"
    m: int = 200
    N: int = 5
    rho_s: float | None = None
    rho_t: float | None = None
    scale: float = 1.0
    base_noise: float = 0.1
    source_noise_base: float = 0.0
    source_noise_slope: float = 0.0
    target_noise_base: float = 0.0
    target_noise_slope: float | None = None
    noise_unit: float = 1.0
    seed: int = 0
    num_classes: int = 2
    radius: float = 2.0
    shared_base: bool = False
    resample_per_step: bool = False
    csv_dir: str | None = None

    def __post_init__(self):
        errs = []
        if self.generator not in ("two_moons", "gaussian_mixture", "csv"):
            errs.append(f"generator must be two_moons|gaussian_mixture|csv, got {self.generator!r}")
        if self.N < 2:
            errs.append(f"N must be >= 2, got {self.N}")
        if self.m < 8:
            errs.append(f"m must be >= 8, got {self.m}")
        for name in ("base_noise", "source_noise_base", "target_noise_base", "noise_unit"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        for name in ("source_noise_slope", "target_noise_slope"):
            v = getattr(self, name)
            if v is not None and v < 0:
                errs.append(f"{name} must be >= 0 (noise schedules are nondecreasing)")
        if self.generator == "gaussian_mixture" and self.num_classes < 2:
            errs.append("gaussian_mixture needs num_classes >= 2")
        if self.generator == "gaussian_mixture" and self.radius <= 0:
            errs.append("radius must be > 0")
        if self.generator == "two_moons" and self.num_classes != 2:
            errs.append("two_moons has exactly 2 classes")
        if self.generator == "csv" and not self.csv_dir:
            errs.append("csv generator needs csv_dir")
        if errs:
            raise ConfigError("; ".join(errs))

    @property
    def source_rotation(self):
        return (-30.0 if self.rho_s is None else self.rho_s) * self.scale

    @property
    def target_rotation(self):
        return (15.0 if self.rho_t is None else self.rho_t) * self.scale

    def source_noise(self, j):
        return self.source_noise_base + self.source_noise_slope * (j - 1)

    def target_noise(self, j):
        slope = 0.05 * self.noise_unit if self.target_noise_slope is None else self.target_noise_slope
        return self.target_noise_base + slope * (j - 1)

    def to_dict(self):
        from dataclasses import asdict
        return asdict(self)


def make_moons(m: int, noise: float, seed: int):
    """Two interleaving half circles: outer arc label 0, inner arc label 1."""
    if m < 2:
        raise ConfigError("make_moons needs m >= 2")
    n0, n1 = math.ceil(m / 2), m // 2
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    X = np.vstack([np.c_[np.cos(t0), np.sin(t0)],
                   np.c_[1.0 - np.cos(t1), 0.5 - np.sin(t1)]])
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    if noise > 0:
        X = X + np.random.default_rng(seed).normal(scale=noise, size=X.shape)
    return X, y


def make_gaussian_mixture(m: int, C: int, radius: float, sigma: float, seed: int):
    if C < 2:
        raise ConfigError("make_gaussian_mixture needs C >= 2")
    if radius <= 0:
        raise ConfigError("radius must be > 0")
    y = np.arange(m, dtype=np.int64) % C
    ang = 2.0 * np.pi * y / C
    X = radius * np.c_[np.cos(ang), np.sin(ang)]
    if sigma > 0:
        X = X + np.random.default_rng(seed).normal(scale=sigma, size=X.shape)
    return X, y


def rotate(features, degrees: float):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ShapeError(f"rotate needs (m, 2) features, got {X.shape}")
    if degrees == 0:
        return X.copy()
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    R = np.array([[c, -s], [s, c]])
    return X @ R.T


def _base(cfg: StreamCfg, seed):
    if cfg.generator == "two_moons":
        return make_moons(cfg.m, cfg.base_noise, seed)
    return make_gaussian_mixture(cfg.m, cfg.num_classes, cfg.radius, cfg.base_noise, seed)


def gen_stream(cfg: StreamCfg) -> DynamicStream:
    """N source and N+1 target snapshots drifting by rotation plus Gaussian noise."""
    if cfg.generator == "csv":
        return load_stream_dir(cfg.csv_dir)
    N = cfg.N
    ss = np.random.SeedSequence(cfg.seed)
    base_seeds, noise_seeds = ss.spawn(2)
    bs, bt = (int(s.generate_state(1)[0]) for s in base_seeds.spawn(2))
    if cfg.shared_base:
        bt = bs
    noise_rngs = [np.random.default_rng(s) for s in noise_seeds.spawn(2 * N + 1)]
    base = {SOURCE: _base(cfg, bs), TARGET: _base(cfg, bt)}

    def snap(role, j, rng):
        if cfg.resample_per_step:
            X, y = _base(cfg, int(rng.integers(2**31)))
        else:
            X, y = base[role]
        rho = cfg.source_rotation if role == SOURCE else cfg.target_rotation
        sd = cfg.source_noise(j) if role == SOURCE else cfg.target_noise(j)
        X = rotate(X, rho * (j - 1))
        if sd > 0:
            X = X + rng.normal(scale=sd, size=X.shape)
        if role == SOURCE:
            return TaskSnapshot(X, y.copy(), j, SOURCE)
        return TaskSnapshot(X, None, j, TARGET, eval_labels=y.copy())

    sources = [snap(SOURCE, j, noise_rngs[j - 1]) for j in range(1, N + 1)]
    targets = [snap(TARGET, j, noise_rngs[N + j - 1]) for j in range(1, N + 2)]
    C = 2 if cfg.generator == "two_moons" else cfg.num_classes
    return DynamicStream(sources, targets, C, 2, {"config": cfg.to_dict()})


def save_csv(snapshot: TaskSnapshot, path, include_labels: bool = True):
    """Write ``f0..f{d-1}[,label]`` rows at 17 significant digits.

    For target snapshots the label column carries ``eval_labels``.
    """
    labels = snapshot.labels if snapshot.labels is not None else snapshot.eval_labels
    include_labels = include_labels and labels is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(snapshot.d)] + (["label"] if include_labels else []))
        for i in range(snapshot.m):
            row = [format(v, ".17g") for v in snapshot.features[i]]
            if include_labels:
                row.append(str(int(labels[i])))
            w.writerow(row)


def load_csv(path, has_labels: bool, num_classes: int | None = None,
             role: str = SOURCE, time_index: int = 1) -> TaskSnapshot:
    """Read a snapshot written in the ``f0,...,f{d-1}[,label]`` format.

    Role and time index are assigned by the caller. For ``role='target'`` a
    label column is stored as ``eval_labels``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    has_label_col = bool(header) and header[-1] == "label"
    if has_labels and not has_label_col:
        raise ParseError("expected a trailing 'label' column", line=1)
    d = len(header) - (1 if has_label_col else 0)
    if d < 1 or header[:d] != [f"f{i}" for i in range(d)]:
        raise ParseError(f"header must be f0,...,f{{d-1}}[,label]; got {rows[0]}", line=1)
    feats, labs = [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}", line=ln)
        try:
            feats.append([float(c) for c in row[:d]])
        except ValueError as exc:
            raise ParseError(f"non-numeric feature cell ({exc})", line=ln) from None
        if has_label_col:
            try:
                lab = int(row[d])
            except ValueError:
                raise ParseError(f"non-integer label {row[d]!r}", line=ln) from None
            if lab < 0 or (num_classes is not None and lab >= num_classes):
                raise ParseError(f"label {lab} out of range", line=ln)
            labs.append(lab)
    if not feats:
        raise ParseError("no data rows", line=2)
    X = np.asarray(feats, dtype=np.float64)
    y = np.asarray(labs, dtype=np.int64) if has_label_col and has_labels else None
    if role == TARGET:
        return TaskSnapshot(X, None, time_index, TARGET, eval_labels=y)
    return TaskSnapshot(X, y, time_index, role)


def load_stream_dir(directory) -> DynamicStream:
    """Load ``{role}_{j}.csv`` files plus ``stream.json`` written by ``generate``."""
    import json
    directory = Path(directory)
    manifest = json.loads((directory / "stream.json").read_text())
    N, C = int(manifest["N"]), int(manifest["C"])
    sources = [load_csv(directory / f"source_{j}.csv", True, C, SOURCE, j) for j in range(1, N + 1)]
    targets = []
    for j in range(1, N + 2):
        p = directory / f"target_{j}.csv"
        with open(p) as fh:
            has = fh.readline().strip().endswith("label")
        targets.append(load_csv(p, has, C, TARGET, j))
    return DynamicStream(sources, targets, C, int(manifest["d"]), {"manifest": manifest})


def split_indices(m: int, val_count: int, seed: int):
    if not 1 <= val_count < m:
        raise ConfigError(f"val_count must be in [1, {m}), got {val_count}")
    perm = np.random.default_rng(seed).permutation(m)
    return np.sort(perm[val_count:]), np.sort(perm[:val_count])


def split(snapshot: TaskSnapshot, val_count: int, seed: int):
    """Seeded disjoint train/validation split of a snapshot's rows."""
    tr, va = split_indices(snapshot.m, val_count, seed)
    return snapshot.take(tr), snapshot.take(va)
