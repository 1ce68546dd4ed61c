"""Command line entry point: ``dyntl {generate,run,divergence,bound}``.

Every subcommand reads one JSON config (validated against the bundled schema)
and writes deterministic files into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import baselines, bounds, meta
from . import numerics as nm
from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .divergence import mmd2_biased, mmd2_unbiased, proxy_domain_divergence
from .errors import ConfigError, DyntlError, StageError
from .meta import L2ECfg
from .taskstream import DynamicStream, StreamCfg, gen_stream, save_csv

log = logging.getLogger("dyntl")

METHODS = ("l2e",) + baselines.KINDS


def load_schema() -> dict:
    return json.loads(resources.files("dyntl").joinpath("config.schema.json").read_text())


@dataclass
class ExperimentConfig:
    stream: StreamCfg = field(default_factory=StreamCfg)
    l2e: L2ECfg = field(default_factory=L2ECfg)
    methods: tuple = ("l2e", "source_only")
    seeds: tuple = (0,)
    out: str = "out"
    report: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def hash(self) -> str:
        return config_hash(self.raw)


def validate_config(doc) -> list[str]:
    """All schema violations as ``path: message`` strings (empty when valid)."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errs = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errs]


def parse_config(doc: dict, seed_override: int | None = None,
                 methods: list[str] | None = None, out: str | None = None) -> ExperimentConfig:
    errs = validate_config(doc)
    if errs:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errs))
    doc = json.loads(json.dumps(doc))
    if seed_override is not None:
        doc["seeds"] = [int(seed_override)]
    if methods:
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; expected any of {list(METHODS)}")
        doc["methods"] = list(methods)
    if out is not None:
        doc["out"] = out
    # dataclass validation catches cross-field rules the schema cannot express
    stream = StreamCfg(**doc.get("stream", {}))
    l2e = L2ECfg.from_dict(doc.get("l2e", {}))
    # where results land is not part of the experiment's identity
    raw = {k: v for k, v in doc.items() if k != "out"}
    return ExperimentConfig(stream, l2e, tuple(doc.get("methods", ["l2e", "source_only"])),
                            tuple(doc.get("seeds", [0])), doc.get("out", "out"),
                            dict(doc.get("report", {})), dict(doc.get("bound", {})), raw)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc, **overrides)


def stream_for(cfg: ExperimentConfig, seed: int) -> DynamicStream:
    return gen_stream(replace(cfg.stream, seed=seed))


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, newline="")


# ---------------------------------------------------------------- generate

def cmd_generate(cfg: ExperimentConfig, out_dir=None) -> Path:
    out = Path(out_dir or cfg.out)
    seed = cfg.seeds[0]
    stream = stream_for(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    for s in stream.sources:
        save_csv(s, out / f"source_{s.time_index}.csv")
    for t in stream.targets:
        save_csv(t, out / f"target_{t.time_index}.csv")
    sc = replace(cfg.stream, seed=seed)
    manifest = {
        "N": stream.N, "C": stream.num_classes, "d": stream.feature_dim, "seed": seed,
        "generator": sc.generator,
        "schedules": {
            "source_rotation_deg": [sc.source_rotation * (j - 1) for j in range(1, stream.N + 1)],
            "target_rotation_deg": [sc.target_rotation * (j - 1) for j in range(1, stream.N + 2)],
            "source_noise": [sc.source_noise(j) for j in range(1, stream.N + 1)],
            "target_noise": [sc.target_noise(j) for j in range(1, stream.N + 2)],
        },
        "config": sc.to_dict(),
    }
    _write_text(out / "stream.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


# ---------------------------------------------------------------- run

def _run_one(cfg: ExperimentConfig, method: str, seed: int):
    stream = stream_for(cfg, seed)
    return meta._stage("run", None, baselines.run_method, method, stream, replace(cfg.l2e, seed=seed))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def summary_rows(runs: list[dict], methods) -> list[list[str]]:
    rows = []
    for m in methods:
        mine = [r for r in runs if r["method"] == m]
        for r in mine:
            rows.append([m, str(r["seed"]), _fmt(r["acc"]), _fmt(r["h_acc"])])
        if mine:
            agg = []
            for key in ("acc", "h_acc"):
                v = np.array([r[key] for r in mine])
                sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
                agg.append(f"{_fmt(v.mean())}±{_fmt(sd)}")
            rows.append([m, "mean±std", *agg])
    return rows


def cmd_run(cfg: ExperimentConfig, workers: int = 1) -> int:
    out = Path(cfg.out)
    jobs = [(m, s) for m in cfg.methods for s in cfg.seeds]
    chash = cfg.hash()

    def job(ms):
        m, s = ms
        try:
            return ms, _run_one(cfg, m, s), None
        except StageError as exc:
            log.error("%s seed %d failed: %s", m, s, exc)
            return ms, None, exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(job, jobs))
    else:
        outcomes = [job(j) for j in jobs]

    runs, failures = [], []
    for (m, s), res, err in outcomes:
        if err is not None:
            failures.append({"method": m, "seed": s, "stage": err.stage,
                             "pair_index": err.pair_index, "error": str(err.cause)})
            continue
        d = res.to_json_dict()
        d["config_hash"] = chash
        runs.append(d)
        if cfg.report.get("save_checkpoints", True):
            ck = out / "checkpoints"
            info = {"config_hash": chash, "seed": s, "method": m}
            save_checkpoint(ck / f"{m}_seed{s}_theta_star.json", res.theta_init, {**info, "role": "theta_star_N"})
            save_checkpoint(ck / f"{m}_seed{s}_theta_final.json", res.theta_final, {**info, "role": "theta_N+1"})

    doc = {"config_hash": chash, "config": cfg.raw, "runs": runs, "failures": failures}
    _write_text(out / "results.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "acc", "h_acc"])
    w.writerows(summary_rows(runs, cfg.methods))
    _write_text(out / "summary.csv", buf.getvalue())
    return 1 if failures else 0


# ---------------------------------------------------------------- divergence

def _estimator(name, seed):
    if name == "mmd2_unbiased":
        return lambda a, b: mmd2_unbiased(a, b).value
    if name == "proxy":
        return lambda a, b: proxy_domain_divergence(a, b, seed=seed).value
    return lambda a, b: mmd2_biased(a, b).value


def divergence_table(stream: DynamicStream, estimator="mmd2_biased", seed=0, transform=None):
    """Rows (j, source_chain, source_target, target_chain) for j = 1..N.

    source_chain is d(s_j, s_{j+1}) (blank at j = N), source_target is
    d(s_j, t_j) and target_chain is d(t_j, t_{j+1}).
    """
    est = _estimator(estimator, seed)
    f = transform or (lambda X: X)
    S = [f(s.features) for s in stream.sources]
    T = [f(t.features) for t in stream.targets]
    N = stream.N
    rows = []
    for j in range(N):
        rows.append([j + 1, est(S[j], S[j + 1]) if j < N - 1 else None,
                     est(S[j], T[j]), est(T[j], T[j + 1])])
    return rows


def cmd_divergence(cfg: ExperimentConfig, checkpoint=None) -> Path:
    out = Path(cfg.out)
    seed = cfg.seeds[0]
    stream = stream_for(cfg, seed)
    est = cfg.report.get("estimator", "mmd2_biased")
    rows = divergence_table(stream, est, seed)
    header = ["j", "source_chain", "source_target", "target_chain"]
    ck = checkpoint or cfg.report.get("checkpoint")
    if ck:
        params = load_checkpoint(ck).params()
        emb = divergence_table(stream, est, seed, lambda X: nm.embed(params, X))
        header += ["emb_source_chain", "emb_source_target", "emb_target_chain"]
        rows = [r + e[1:] for r, e in zip(rows, emb)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[0]] + ["" if v is None else _fmt(v) for v in r[1:]])
    _write_text(out / "divergence.csv", buf.getvalue())
    return out / "divergence.csv"


# ---------------------------------------------------------------- bound

def plugin_bound(stream: DynamicStream, params: nm.ModelParams, bcfg: dict,
                 estimator="mmd2_biased", seed=0) -> bounds.BoundReport:
    """Bound for a trained model on a continuous stream.

    Link divergences are sample estimates, errors use source labels and target
    evaluation labels, and the labeling discrepancy is taken from the config
    (default 0, flagged) since it cannot be estimated without target labels.
    """
    N = stream.N
    rows = divergence_table(stream, estimator, seed)
    lam = float(bcfg.get("lambda_tilde", 0.0))
    chain = bounds.ChainDivergences(
        "mmd", "disc",
        [r[1] for r in rows[:N - 1]], rows[0][2], [r[3] for r in rows],
        [lam] * (N - 1), lam, [lam] * N,
    )
    src = [1.0 - meta.evaluate(params, s) for s in stream.sources]
    tgt = [1.0 - meta.evaluate(params, t) for t in stream.targets[:N]]
    m_tilde = min(s.m for s in (*stream.sources, *stream.targets[:N]))
    rep = bounds.compute_bound((src, tgt), chain, bcfg.get("rademacher"), bcfg.get("mu", 1.0),
                               bcfg.get("delta", 0.05), m_tilde, N, bcfg.get("L", 1.0))
    if "lambda_tilde" not in bcfg:
        rep.flags.append("labeling discrepancy not estimated (lambda_tilde = 0)")
    return rep


def cmd_bound(cfg: ExperimentConfig, checkpoint=None) -> Path:
    out = Path(cfg.out)
    b = cfg.bound
    mode = b.get("mode", "oracle")
    if mode == "oracle":
        coef = b.get("coefficient", "stated")
        if b.get("instance_file"):
            docs = json.loads(Path(b["instance_file"]).read_text())
            docs = docs if isinstance(docs, list) else [docs]
            checks = [bounds.verify_chain_inequality(bounds.DiscreteInstance.from_dict(d), coef)
                      for d in docs]
            held = sum(c.all_hold for c in checks)
            doc = {"instances": len(checks), "held": held, "holds": f"{held}/{len(checks)}",
                   "coefficient": coef,
                   "min_slack": min(float(c.slack.min()) for c in checks),
                   "failures": [i for i, c in enumerate(checks) if not c.all_hold]}
        else:
            doc = bounds.oracle_sweep(b.get("instances", 200), b.get("seed", 0), coef,
                                      b.get("generator", "random"))
    else:
        ck = checkpoint or b.get("checkpoint")
        if not ck:
            raise ConfigError("plug-in bound mode needs a checkpoint (bound.checkpoint or --checkpoint)")
        seed = cfg.seeds[0]
        rep = plugin_bound(stream_for(cfg, seed), load_checkpoint(ck).params(), b,
                           cfg.report.get("estimator", "mmd2_biased"), seed)
        doc = rep.to_dict()
    _write_text(out / "bound.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return out / "bound.json"


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyntl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "write stream snapshots as CSV"),
                        ("run", "train and evaluate methods over seeds"),
                        ("divergence", "report divergence evolution along the stream"),
                        ("bound", "compute the generalization bound or run the oracle sweep")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed-override", type=int, help="run this single seed instead")
        sp.add_argument("--method", help="comma-separated method names")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("divergence", "bound"):
            sp.add_argument("--checkpoint", help="model checkpoint for embedding-level values")
        if name == "run":
            sp.add_argument("--workers", type=int, default=1, help="parallel runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    methods = args.method.split(",") if args.method else None
    try:
        cfg = load_config(args.config, seed_override=args.seed_override, methods=methods, out=args.out)
        if args.command == "generate":
            cmd_generate(cfg)
            return 0
        if args.command == "run":
            return cmd_run(cfg, workers=args.workers)
        if args.command == "divergence":
            cmd_divergence(cfg, args.checkpoint)
            return 0
        cmd_bound(cfg, args.checkpoint)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DyntlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
