"""Domain discrepancy estimators.

Kernel MMD (biased and unbiased) with an analytic gradient with respect to the
embedded samples, a proxy-A-distance style domain-classifier measurement, a
class-conditional MMD surrogate for joint-distribution discrepancy, and exact
divergences between discrete distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError

NEG_CLAMP = -1e-12


@dataclass(frozen=True)
class KernelCfg:
    """RBF kernel settings.

    ``bandwidth`` is either a positive float or the string ``"median"``.
    ``multi_bandwidth`` multiplies the resolved bandwidth; the estimate is the
    mean over the resulting kernels.
    """

    kind: str = "rbf"
    bandwidth: float | str = "median"
    multi_bandwidth: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind != "rbf":
            raise ConfigError(f"unsupported kernel kind {self.kind!r}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ConfigError(f"bandwidth tag must be 'median', got {self.bandwidth!r}")
        elif not float(self.bandwidth) > 0:
            raise ConfigError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.multi_bandwidth is not None:
            mults = tuple(float(c) for c in self.multi_bandwidth)
            if not mults or any(c <= 0 for c in mults):
                raise ConfigError("multi_bandwidth must be a nonempty list of positive multipliers")
            object.__setattr__(self, "multi_bandwidth", mults)

    def with_bandwidth(self, bandwidth: float) -> "KernelCfg":
        return KernelCfg(self.kind, float(bandwidth), self.multi_bandwidth)

    def to_dict(self):
        return {"kind": self.kind, "bandwidth": self.bandwidth,
                "multi_bandwidth": None if self.multi_bandwidth is None else list(self.multi_bandwidth)}

    @classmethod
    def from_dict(cls, d):
        mb = d.get("multi_bandwidth")
        return cls(d.get("kind", "rbf"), d.get("bandwidth", "median"), None if mb is None else tuple(mb))


@dataclass
class DivergenceEstimate:
    value: float
    estimator: str
    sizes: tuple[int, int]
    bandwidth: float | None = None
    extras: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _as2d(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def sq_dists(A, B):
    """Pairwise squared Euclidean distances, clipped at zero."""
    A = _as2d(A)
    B = _as2d(B)
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def median_heuristic(X, Y) -> float:
    """Median pairwise distance over the pooled sample, ignoring zero distances.

    Falls back to 1.0 when every pairwise distance is zero.
    """
    X = _as2d(X)
    Y = _as2d(Y)
    P = np.vstack([X, Y]) if X.size or Y.size else np.empty((0, 1))
    if P.shape[0] == 0:
        raise DataError("median_heuristic: pooled sample is empty")
    if P.shape[0] < 2:
        return 1.0
    iu = np.triu_indices(P.shape[0], k=1)
    diff = P[iu[0]] - P[iu[1]]
    dist = np.sqrt((diff * diff).sum(1))
    dist = dist[dist > 0]
    if dist.size == 0:
        return 1.0
    return float(np.median(dist))


def resolve_bandwidth(kernel: KernelCfg, X, Y) -> float:
    if kernel.bandwidth == "median":
        return median_heuristic(X, Y)
    return float(kernel.bandwidth)


def _sigmas(kernel, base):
    if kernel.multi_bandwidth is None:
        return (base,)
    return tuple(base * c for c in kernel.multi_bandwidth)


def _gram(D2, sigma):
    return np.exp(-D2 / (2.0 * sigma * sigma))


def _mmd2_biased_value(X, Y, sigmas):
    ma, mb = X.shape[0], Y.shape[0]
    Dxx, Dyy, Dxy = sq_dists(X, X), sq_dists(Y, Y), sq_dists(X, Y)
    vals = []
    for s in sigmas:
        v = (_gram(Dxx, s).sum() / ma**2 + _gram(Dyy, s).sum() / mb**2
             - 2.0 * _gram(Dxy, s).sum() / (ma * mb))
        vals.append(v)
    return float(np.mean(vals))


def _clamp(value, name):
    if value < NEG_CLAMP:
        raise NumericalError(f"{name} returned {value!r} < {NEG_CLAMP}", term=name)
    return max(value, 0.0)


def mmd2_biased(X, Y, kernel: KernelCfg = KernelCfg()) -> DivergenceEstimate:
    """Biased (V-statistic) squared MMD; nonnegative by construction."""
    X, Y = _as2d(X), _as2d(Y)
    if X.shape[0] < 1 or Y.shape[0] < 1:
        raise DataError("mmd2_biased needs at least one row on each side")
    if X.shape[1] != Y.shape[1]:
        raise DataError(f"mmd2_biased: column mismatch {X.shape[1]} vs {Y.shape[1]}")
    bw = resolve_bandwidth(kernel, X, Y)
    val = _clamp(_mmd2_biased_value(X, Y, _sigmas(kernel, bw)), "mmd2_biased")
    return DivergenceEstimate(val, "mmd2_biased", (X.shape[0], Y.shape[0]), bw)


def mmd2_unbiased(X, Y, kernel: KernelCfg = KernelCfg()) -> DivergenceEstimate:
    """Unbiased U-statistic: within-sample diagonals excluded. May be negative."""
    X, Y = _as2d(X), _as2d(Y)
    ma, mb = X.shape[0], Y.shape[0]
    if ma < 2 or mb < 2:
        raise DataError(f"mmd2_unbiased needs >= 2 rows per side, got ({ma}, {mb})")
    bw = resolve_bandwidth(kernel, X, Y)
    Dxx, Dyy, Dxy = sq_dists(X, X), sq_dists(Y, Y), sq_dists(X, Y)
    vals = []
    for s in _sigmas(kernel, bw):
        Kxx, Kyy = _gram(Dxx, s), _gram(Dyy, s)
        vals.append((Kxx.sum() - np.trace(Kxx)) / (ma * (ma - 1))
                    + (Kyy.sum() - np.trace(Kyy)) / (mb * (mb - 1))
                    - 2.0 * _gram(Dxy, s).sum() / (ma * mb))
    return DivergenceEstimate(float(np.mean(vals)), "mmd2_unbiased", (ma, mb), bw)


def mmd2_with_grad(Za, Zb, kernel: KernelCfg = KernelCfg()):
    """Biased squared MMD together with its gradient w.r.t. every row.

    The bandwidth is treated as a constant (a ``"median"`` tag is resolved on
    the inputs and then held fixed for differentiation).

    Returns:
        (value, dZa, dZb, bandwidth)
    """
    Za, Zb = _as2d(Za), _as2d(Zb)
    ma, mb = Za.shape[0], Zb.shape[0]
    if ma < 1 or mb < 1:
        raise DataError("mmd2 gradient needs at least one row on each side")
    bw = resolve_bandwidth(kernel, Za, Zb)
    sigmas = _sigmas(kernel, bw)
    Daa, Dbb, Dab = sq_dists(Za, Za), sq_dists(Zb, Zb), sq_dists(Za, Zb)
    value = 0.0
    dZa = np.zeros_like(Za)
    dZb = np.zeros_like(Zb)
    for s in sigmas:
        Kaa, Kbb, Kab = _gram(Daa, s), _gram(Dbb, s), _gram(Dab, s)
        value += Kaa.sum() / ma**2 + Kbb.sum() / mb**2 - 2.0 * Kab.sum() / (ma * mb)
        inv = 1.0 / (s * s)
        # d k(u, v) / du = -k(u, v) (u - v) / s^2; Gram matrices are symmetric
        # so each within-sample pair contributes twice.
        Waa = Kaa * (2.0 / ma**2)
        Wab = Kab * (-2.0 / (ma * mb))
        Wbb = Kbb * (2.0 / mb**2)
        dZa -= inv * (Waa.sum(1)[:, None] * Za - Waa @ Za)
        dZa -= inv * (Wab.sum(1)[:, None] * Za - Wab @ Zb)
        dZb -= inv * (Wbb.sum(1)[:, None] * Zb - Wbb @ Zb)
        dZb -= inv * (Wab.sum(0)[:, None] * Zb - Wab.T @ Za)
    n = len(sigmas)
    return value / n, dZa / n, dZb / n, bw


def mmd2_grad_embeddings(Za, Zb, kernel: KernelCfg = KernelCfg()):
    """Gradient of the biased squared MMD with respect to each embedding row."""
    _, dZa, dZb, _ = mmd2_with_grad(Za, Zb, kernel)
    return dZa, dZb


def proxy_domain_divergence(X, Y, seed: int = 0, steps: int = 300, lr: float = 0.5,
                            l2: float = 1e-3) -> DivergenceEstimate:
    """Proxy-A-distance: 2 * (1 - 2 * err) of a logistic domain classifier.

    Each side is split in half (seeded); the classifier is trained with a fixed
    number of full-batch gradient steps on the pooled first halves and scored on
    the pooled second halves. Measurement only.
    """
    X, Y = _as2d(X), _as2d(Y)
    ma, mb = X.shape[0], Y.shape[0]
    if ma < 4 or mb < 4:
        raise DataError(f"proxy_domain_divergence needs >= 4 rows per side, got ({ma}, {mb})")
    rng = np.random.default_rng(seed)
    pa, pb = rng.permutation(ma), rng.permutation(mb)
    ha, hb = ma // 2, mb // 2
    Xtr = np.vstack([X[pa[:ha]], Y[pb[:hb]]])
    ytr = np.r_[np.zeros(ha), np.ones(hb)]
    Xte = np.vstack([X[pa[ha:]], Y[pb[hb:]]])
    yte = np.r_[np.zeros(ma - ha), np.ones(mb - hb)]
    if len(np.unique(ytr)) < 2 or len(np.unique(yte)) < 2:
        raise DataError("proxy_domain_divergence: degenerate split")

    mu = Xtr.mean(0)
    sd = Xtr.std(0)
    sd[sd == 0] = 1.0
    A = (Xtr - mu) / sd
    B = (Xte - mu) / sd
    w = np.zeros(A.shape[1])
    b = 0.0
    # balanced weighting so unequal sizes do not bias the separator
    sw = np.where(ytr == 1, 0.5 / hb, 0.5 / ha)
    for _ in range(steps):
        z = A @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        r = (p - ytr) * sw
        w -= lr * (A.T @ r + l2 * w)
        b -= lr * r.sum()
    pred = (B @ w + b) > 0
    err = 0.5 * (np.mean(pred[yte == 0]) + np.mean(~pred[yte == 1]))
    value = float(np.clip(2.0 * (1.0 - 2.0 * err), 0.0, 2.0))
    return DivergenceEstimate(value, "proxy_domain_classifier", (ma, mb), None,
                              {"test_error": float(err)})


def cond_mmd(Xa, ya, Xb, yb, kernel: KernelCfg = KernelCfg()) -> DivergenceEstimate:
    """Class-conditional MMD: frequency-weighted mean of per-class biased MMD.

    Classes present on only one side are skipped; the fraction of rows they
    hold is reported as ``extras['skipped_mass']``.
    """
    Xa, Xb = _as2d(Xa), _as2d(Xb)
    ya = np.asarray(ya, dtype=np.int64)
    yb = np.asarray(yb, dtype=np.int64)
    if len(ya) != Xa.shape[0] or len(yb) != Xb.shape[0]:
        raise DataError("cond_mmd: label count does not match rows")
    ca, cb = set(np.unique(ya).tolist()), set(np.unique(yb).tolist())
    shared = sorted(ca & cb)
    if not shared:
        raise DataError("cond_mmd: no class is present on both sides")
    skipped = sorted((ca | cb) - set(shared))
    total = len(ya) + len(yb)
    weights, values, bws = [], [], []
    for c in shared:
        est = mmd2_biased(Xa[ya == c], Xb[yb == c], kernel)
        weights.append(np.sum(ya == c) + np.sum(yb == c))
        values.append(est.value)
        bws.append(est.bandwidth)
    weights = np.asarray(weights, dtype=np.float64)
    value = float(np.dot(weights, values) / weights.sum())
    skipped_mass = 1.0 - weights.sum() / total
    return DivergenceEstimate(value, "cond_mmd", (Xa.shape[0], Xb.shape[0]), None,
                              {"per_class": dict(zip(shared, values)), "bandwidths": bws,
                               "skipped_classes": skipped, "skipped_mass": float(skipped_mass)})


def _check_prob(p, name, tol=1e-9):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise DataError(f"{name} is not a probability vector (sum={p.sum()!r})")
    return p


def l1_divergence_discrete(p: Sequence[float], q: Sequence[float]) -> float:
    """L1 distance between discrete distributions, i.e. twice total variation."""
    p = _check_prob(p, "p")
    q = _check_prob(q, "q")
    if p.shape != q.shape:
        raise DataError("l1_divergence_discrete: supports differ in size")
    return float(np.abs(p - q).sum())


def _kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js_divergence_discrete(p, q) -> float:
    """Jensen-Shannon divergence in nats; bounded by ln 2."""
    p = _check_prob(p, "p")
    q = _check_prob(q, "q")
    m = 0.5 * (p + q)
    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)
