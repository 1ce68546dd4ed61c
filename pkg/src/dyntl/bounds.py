"""Generalization bound for the newest target task, its divergence variants,
Monte-Carlo Rademacher estimates over finite hypothesis classes, and an exact
population-level check of the deterministic part of the bound on discrete
instances.

All discrete computations use the 0-1 loss (mu = 1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .divergence import js_divergence_discrete, l1_divergence_discrete
from .errors import ConfigError, DataError

KINDS = ("l1", "f_js", "c_div", "mmd")
LAMBDA_VARIANTS = ("theorem", "corollary", "disc", "zero")
_DEFAULT_LAMBDA = {"l1": "theorem", "f_js": "corollary", "c_div": "zero", "mmd": "disc"}


@dataclass
class DiscreteInstance:
    """Tasks over the support {0..K-1} with binary labeling functions.

    Rows of ``source_p``/``source_f`` are source tasks 1..N, rows of
    ``target_p``/``target_f`` are target tasks 1..N+1; ``H`` holds one
    hypothesis per row.
    """

    source_p: np.ndarray
    source_f: np.ndarray
    target_p: np.ndarray
    target_f: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.source_p = np.atleast_2d(np.asarray(self.source_p, dtype=np.float64))
        self.target_p = np.atleast_2d(np.asarray(self.target_p, dtype=np.float64))
        self.source_f = np.atleast_2d(np.asarray(self.source_f, dtype=np.int64))
        self.target_f = np.atleast_2d(np.asarray(self.target_f, dtype=np.int64))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=np.int64))
        N, K = self.source_p.shape
        if self.target_p.shape != (N + 1, K):
            raise DataError(f"target_p must be ({N + 1}, {K}), got {self.target_p.shape}")
        if self.source_f.shape != (N, K) or self.target_f.shape != (N + 1, K):
            raise DataError("labeling function arrays do not match the distributions")
        if self.H.shape[0] < 1 or self.H.shape[1] != K:
            raise DataError(f"H must be (|H| >= 1, {K})")
        for name in ("source_p", "target_p"):
            P = getattr(self, name)
            if np.any(P < 0) or np.any(np.abs(P.sum(1) - 1.0) > 1e-12):
                raise DataError(f"{name} rows must be probability vectors")
        for arr in (self.source_f, self.target_f, self.H):
            if not np.all((arr == 0) | (arr == 1)):
                raise DataError("labels and hypotheses must be binary")

    @property
    def N(self):
        return self.source_p.shape[0]

    @property
    def K(self):
        return self.source_p.shape[1]

    def links(self):
        """(side A, side B) task tuples over the source chain, cross link and
        target chain, in that order. A task is (p, f)."""
        S = list(zip(self.source_p, self.source_f))
        T = list(zip(self.target_p, self.target_f))
        src = [(S[j], S[j + 1]) for j in range(self.N - 1)]
        return src, (S[0], T[0]), [(T[j], T[j + 1]) for j in range(self.N)]

    def to_dict(self):
        return {k: v.tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["source_p"], d["source_f"], d["target_p"], d["target_f"], d["H"])


def task_error(p, f, h) -> float:
    """Expected 0-1 loss of ``h`` under distribution ``p`` labeled by ``f``."""
    return float(np.dot(p, np.asarray(h) != np.asarray(f)))


def exact_errors(instance: DiscreteInstance, h):
    """Returns (source errors[N], target errors[N+1])."""
    h = np.asarray(h, dtype=np.int64)
    src = np.array([task_error(p, f, h) for p, f in zip(instance.source_p, instance.source_f)])
    tgt = np.array([task_error(p, f, h) for p, f in zip(instance.target_p, instance.target_f)])
    return src, tgt


def _joint(p, f):
    J = np.zeros((p.shape[0], 2))
    J[np.arange(p.shape[0]), f] = p
    return J.ravel()


def link_divergence(a, b, kind: str) -> float:
    (pa, fa), (pb, fb) = a, b
    if kind == "l1":
        return l1_divergence_discrete(pa, pb)
    if kind == "f_js":
        return js_divergence_discrete(pa, pb)
    if kind == "c_div":
        return l1_divergence_discrete(_joint(pa, fa), _joint(pb, fb))
    if kind == "mmd":
        # delta kernel on symbols: MMD = ||p - q||_2
        return float(np.linalg.norm(pa - pb))
    raise ConfigError(f"unknown divergence kind {kind!r}")


def link_lambda(a, b, H, variant: str) -> float:
    (pa, fa), (pb, fb) = a, b
    if variant == "theorem":
        dis = (fa != fb).astype(np.float64)
        return float(min(np.dot(pa, dis), np.dot(pb, dis)))
    if variant == "corollary":
        return float(min(task_error(pa, fa, h) + task_error(pb, fb, h) for h in H))
    if variant == "disc":
        ha = min(H, key=lambda h: task_error(pa, fa, h))
        hb = min(H, key=lambda h: task_error(pb, fb, h))
        return task_error(pa, fa, ha) + task_error(pb, fb, hb) + task_error(pb, ha, hb)
    if variant == "zero":
        return 0.0
    raise ConfigError(f"unknown lambda variant {variant!r}")


@dataclass
class ChainDivergences:
    kind: str
    lambda_variant: str
    source_chain: list
    cross: float
    target_chain: list
    source_lambda: list
    cross_lambda: float
    target_lambda: list

    def __post_init__(self):
        if len(self.source_chain) != len(self.target_chain) - 1:
            raise DataError("chain lengths must be N-1 (source) and N (target)")

    @property
    def N(self):
        return len(self.target_chain)

    @property
    def d_max(self):
        return float(max([self.cross, *self.source_chain, *self.target_chain]))

    @property
    def lambda_max(self):
        return float(max([self.cross_lambda, *self.source_lambda, *self.target_lambda]))

    def to_dict(self):
        return asdict(self)


def chain_divergences(instance: DiscreteInstance, kind: str = "l1",
                      lambda_variant: str | None = None) -> ChainDivergences:
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    lv = lambda_variant or _DEFAULT_LAMBDA[kind]
    if lv not in LAMBDA_VARIANTS:
        raise ConfigError(f"lambda_variant must be one of {LAMBDA_VARIANTS}")
    src, cross, tgt = instance.links()
    H = list(instance.H)
    return ChainDivergences(
        kind, lv,
        [link_divergence(a, b, kind) for a, b in src], link_divergence(*cross, kind),
        [link_divergence(a, b, kind) for a, b in tgt],
        [link_lambda(a, b, H, lv) for a, b in src], link_lambda(*cross, H, lv),
        [link_lambda(a, b, H, lv) for a, b in tgt],
    )


def rademacher_mc(H, sample, n_draws: int, seed: int) -> float:
    """Monte-Carlo empirical Rademacher complexity of the 0-1 loss class of H.

    ``sample`` is (x, y) with integer symbols x. Each draw takes the sup over H
    of (2/m) sum_i sigma_i * 1[h(x_i) != y_i].
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.int64))
    if H.size == 0 or H.shape[0] == 0:
        raise ConfigError("hypothesis set is empty")
    x, y = (np.asarray(a, dtype=np.int64) for a in sample)
    m = x.shape[0]
    if m < 1 or n_draws < 1:
        raise ConfigError("need m >= 1 and n_draws >= 1")
    losses = (H[:, x] != y[None, :]).astype(np.float64)
    sigma = np.random.default_rng(seed).choice(np.array([-1.0, 1.0]), size=(n_draws, m))
    return float(((2.0 / m) * sigma @ losses.T).max(axis=1).mean())


@dataclass
class BoundReport:
    mean_empirical_error: float
    d_tilde: float
    lambda_tilde: float
    drift_coefficient: float
    drift_term: float
    divergence_kind: str
    lambda_variant: str
    rademacher_estimate: float
    concentration: float
    mu: float
    delta: float
    m_tilde: int
    N: int
    total: float
    flags: list = field(default_factory=list)

    @property
    def terms(self):
        return {"mean_empirical_error": self.mean_empirical_error, "drift_term": self.drift_term,
                "rademacher_estimate": self.rademacher_estimate,
                "concentration": self.concentration}

    def to_dict(self):
        return asdict(self)


def concentration_term(mu, delta, m_tilde, N):
    return (mu / N) * math.sqrt(math.log(1.0 / delta) / (2.0 * m_tilde))


def compute_bound(errors, chain: ChainDivergences, R: float | None = 0.0, mu: float = 1.0,
                  delta: float = 0.05, m_tilde: int = 1, N: int | None = None,
                  L: float = 1.0) -> BoundReport:
    """Assemble the bound from empirical errors, chain divergences and terms.

    ``errors`` is (source errors, target errors); only the first N of each are
    used. The divergence maximum is scaled by mu (L1 and joint variants), 1
    (f-divergence) or L (MMD); the labeling maximum by mu (theorem variant),
    1 (corollary variants) or 0 (joint variant).
    """
    if not 0 < delta < 1:
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    if m_tilde < 1:
        raise ConfigError(f"m_tilde must be >= 1, got {m_tilde}")
    if mu <= 0 or L <= 0:
        raise ConfigError("mu and L must be > 0")
    N = chain.N if N is None else int(N)
    if N != chain.N:
        raise DataError(f"N={N} does not match chain length {chain.N}")
    src, tgt = (np.asarray(e, dtype=np.float64)[:N] for e in errors)
    if src.shape != (N,) or tgt.shape != (N,):
        raise DataError("need N source and N historical target errors")
    flags = []
    if R is None:
        R = 0.0
        flags.append("reported without complexity term")
    mean_err = float((src.sum() + tgt.sum()) / (2 * N))
    d_scale = {"l1": mu, "c_div": mu, "f_js": 1.0, "mmd": L}.get(chain.kind, 1.0)
    lam_scale = {"theorem": mu, "zero": 0.0}.get(chain.lambda_variant, 1.0)
    if chain.kind == "f_js":
        flags.append("raw JS divergence value used for d_f")
    d_t = d_scale * chain.d_max
    lam_t = lam_scale * chain.lambda_max
    coef = (N + 2) / 2.0
    drift = coef * (d_t + lam_t)
    conc = concentration_term(mu, delta, m_tilde, N)
    total = mean_err + drift + float(R) + conc
    return BoundReport(mean_err, d_t, lam_t, coef, drift, chain.kind, chain.lambda_variant,
                       float(R), conc, mu, delta, int(m_tilde), N, total, flags)


@dataclass
class ChainCheck:
    holds: np.ndarray
    slack: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    coefficient: float

    @property
    def all_hold(self):
        return bool(self.holds.all())


COEFFICIENTS = {
    "stated": lambda N: (N + 2) / 2.0,
    # chaining target j costs N+1-j links, source j costs j+N; summed over the
    # 2N tasks that is N(2N+1), averaged (2N+1)/2
    "corrected": lambda N: (2 * N + 1) / 2.0,
}


def verify_chain_inequality(instance: DiscreteInstance, coefficient: str = "stated",
                            tol: float = 1e-12) -> ChainCheck:
    """Check, for every h in H, the population inequality

        eps_{N+1}^t(h) <= mean_j (eps_j^s(h) + eps_j^t(h)) / 2 + c_N (d~ + lambda~)

    with exact L1 divergences and expected-disagreement lambda (mu = 1). The
    sampling terms are zero at population level and are left out.
    ``coefficient`` selects c_N: "stated" = (N+2)/2, "corrected" = (2N+1)/2.
    """
    N = instance.N
    chain = chain_divergences(instance, "l1", "theorem")
    c = COEFFICIENTS[coefficient](N)
    drift = c * (chain.d_max + chain.lambda_max)
    lhs, rhs = [], []
    for h in instance.H:
        src, tgt = exact_errors(instance, h)
        lhs.append(tgt[N])
        rhs.append((src.sum() + tgt[:N].sum()) / (2 * N) + drift)
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    slack = rhs - lhs
    return ChainCheck(slack >= -tol, slack, lhs, rhs, c)


def random_instance(seed: int, K_max: int = 6, H_max: int = 32, N_max: int = 4) -> DiscreteInstance:
    """Uniform-Dirichlet marginals, uniform random labelings and hypotheses."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, K_max + 1))
    N = int(rng.integers(1, N_max + 1))
    n_h = int(rng.integers(1, min(H_max, 2**K) + 1))
    codes = rng.choice(2**K, size=n_h, replace=False)
    H = (codes[:, None] >> np.arange(K)[None, :]) & 1
    return DiscreteInstance(
        rng.dirichlet(np.ones(K), size=N), rng.integers(0, 2, size=(N, K)),
        rng.dirichlet(np.ones(K), size=N + 1), rng.integers(0, 2, size=(N + 1, K)), H,
    )


def drift_instance(seed: int, K_max: int = 6, H_max: int = 32, N_max: int = 4,
                   step: float = 0.1, flip: float = 0.15) -> DiscreteInstance:
    """Slowly drifting chain: each link mixes in a little fresh mass and flips
    few labels, so d~ + lambda~ is small and the drift term is actually tested."""
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, K_max + 1))
    N = int(rng.integers(1, N_max + 1))
    n_h = int(rng.integers(1, min(H_max, 2**K) + 1))
    codes = rng.choice(2**K, size=n_h, replace=False)
    H = (codes[:, None] >> np.arange(K)[None, :]) & 1

    def walk(p, f, n):
        ps, fs = [p], [f]
        for _ in range(n - 1):
            p = (1 - step) * p + step * rng.dirichlet(np.ones(K))
            f = np.where(rng.random(K) < flip, 1 - f, f)
            ps.append(p / p.sum())
            fs.append(f)
        return ps, fs

    p0 = rng.dirichlet(np.ones(K))
    f0 = rng.integers(0, 2, size=K)
    sp, sf = walk(p0, f0, N)
    tp, tf = walk(p0, f0, N + 1)
    return DiscreteInstance(np.array(sp), np.array(sf), np.array(tp), np.array(tf), H)


def oracle_sweep(n_instances: int = 200, seed: int = 0, coefficient: str = "stated",
                 generator: str = "random") -> dict:
    gen = {"random": random_instance, "drift": drift_instance}[generator]
    seeds = np.random.SeedSequence(seed).generate_state(n_instances)
    failures = []
    min_slack = math.inf
    for i, s in enumerate(seeds):
        chk = verify_chain_inequality(gen(int(s)), coefficient)
        min_slack = min(min_slack, float(chk.slack.min()))
        if not chk.all_hold:
            failures.append({"instance": i, "seed": int(s), "min_slack": float(chk.slack.min())})
    held = n_instances - len(failures)
    return {"instances": n_instances, "held": held, "holds": f"{held}/{n_instances}",
            "coefficient": coefficient, "generator": generator, "min_slack": min_slack,
            "failures": failures}
