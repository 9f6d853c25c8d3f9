"""``plugrl`` command line: train, eval, compare, hub, deploy."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import deploy, evaluation, hub
from .agents import TrainingError, build_agent
from .approx import Layer, ParamSet
from .config import ConfigError, HUB_ENV_VAR, hub_store_path, parse_config
from .core import RegistryError, SpaceError
from .env import make

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def curve_csv(curve) -> str:
    return "step,score\n" + "".join(f"{s},{v!r}\n" for s, v in curve)


def save_params(path: Path, params: ParamSet, log_std=None) -> None:
    arrays = {}
    for i, layer in enumerate(params.layers):
        arrays[f"w{i}"] = layer.weight
        arrays[f"b{i}"] = layer.bias
    arrays["activations"] = np.array([l.activation for l in params.layers])
    if log_std is not None:
        arrays["log_std"] = np.asarray(log_std)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path: Path) -> ParamSet:
    with np.load(path) as data:
        acts = [str(a) for a in data["activations"]]
        return ParamSet([Layer(data[f"w{i}"], data[f"b{i}"], a) for i, a in enumerate(acts)])


# --------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    out_dir = Path(args.out) if args.out else None
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"train.seed={int(args.seed)}")
    cfg = parse_config(args.config, overrides, str(out_dir) if out_dir else None)
    if out_dir is None:
        out_dir = Path("runs") / f"{cfg.algo}-{cfg.env_id}-seed{cfg.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "config.toml", cfg.to_toml())

    agent = build_agent(cfg.algo, cfg.agent_params())
    log = sys.stdout if not args.quiet else None
    if log is not None:
        print(f"# {cfg.algo} on {cfg.env_id}, seed {cfg.seed}, {cfg.total_steps} steps", file=log, flush=True)
        print("step\teval_mean\tlosses", file=log, flush=True)
    agent.fit(cfg.env_id, cfg.total_steps, env_config=cfg.env_config, eval_every=cfg.eval_every, log=log)
    report = agent.report_

    _write(out_dir / "curve.csv", curve_csv(report.curve))
    policy = agent.policy()
    save_params(out_dir / "policy.npz", policy.params, policy.log_std)
    summary = {
        "algo": cfg.algo,
        "env_id": cfg.env_id,
        "seed": cfg.seed,
        "total_steps": report.total_steps,
        "curve": [[s, v] for s, v in report.curve],
        "episodes": len(report.episodes),
        "final_losses": {k: v[-1] for k, v in sorted(report.losses.items()) if v},
        "wall_clock_seconds": report.wall_clock,
    }
    store = hub_store_path(args.store or cfg.hub_store)
    if store and cfg.hub_ingest:
        if report.curve:
            record = hub.RunRecord.create(cfg.algo, cfg.env_id, cfg.seed, report.curve)
            summary["run_id"] = hub.ingest_run(store, record)
            print(f"# ingested run {summary['run_id']} into {store}", flush=True)
        else:
            print("# empty curve; nothing ingested", flush=True)
    _write(out_dir / "report.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"# wrote {out_dir}", flush=True)
    return EXIT_OK


# --------------------------------------------------------------------------
# eval / compare


def _require_store(arg) -> str:
    store = hub_store_path(arg)
    if not store:
        raise CliError(f"no hub store given; pass --store or set {HUB_ENV_VAR}")
    return store


def _parse_normalize(items) -> dict | None:
    if not items:
        return None
    out = {}
    for item in items:
        env, _, rng = item.partition("=")
        lo, _, hi = rng.partition(":")
        try:
            out[env] = (float(lo), float(hi))
        except ValueError:
            raise CliError(f"--normalize expects env=low:high, got {item!r}") from None
    return out


def _matrices(args, store) -> list[tuple[str, evaluation.ScoreMatrix]]:
    mats = []
    seen: dict[str, int] = {}
    for algo in args.algo:
        m = hub.to_score_matrix(store, algo, args.env, at_step=args.at_step, normalize=_parse_normalize(args.normalize))
        seen[algo] = seen.get(algo, 0) + 1
        name = algo if seen[algo] == 1 else f"{algo}#{seen[algo]}"
        mats.append((name, m))
    return mats


def build_report(args, store, pairwise: bool) -> evaluation.Report:
    mats = dict(_matrices(args, store))
    metrics = [evaluation.parse_metric(m) for m in (args.metric or ["mean", "median", "iqm", "optimality_gap"])]
    taus = np.linspace(args.tau_min, args.tau_max, args.taus) if args.tau_min is not None else None
    return evaluation.report(mats, metrics, args.reps, args.confidence, args.seed, taus, pairwise)


def _emit_report(rep: evaluation.Report, out_dir: Path | None, pairwise: bool) -> None:
    sys.stdout.write(rep.metrics_csv())
    if pairwise:
        sys.stdout.write(rep.poi_csv())
    if out_dir is not None:
        _write(out_dir / "metrics.csv", rep.metrics_csv())
        _write(out_dir / "profile.csv", rep.profile_csv())
        _write(out_dir / "report.json", json.dumps(rep.to_dict(), indent=1) + "\n")
        if pairwise:
            _write(out_dir / "poi.csv", rep.poi_csv())


def cmd_eval(args) -> int:
    store = _require_store(args.store)
    rep = build_report(args, store, pairwise=False)
    _emit_report(rep, Path(args.out) if args.out else None, False)
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.algo) < 2:
        raise CliError("compare needs at least two --algo values")
    store = _require_store(args.store)
    rep = build_report(args, store, pairwise=True)
    _emit_report(rep, Path(args.out) if args.out else None, True)
    return EXIT_OK


# --------------------------------------------------------------------------
# hub


def cmd_hub(args) -> int:
    store = _require_store(args.store)
    if args.hub_cmd == "ingest":
        text = sys.stdin.read() if args.file == "-" else Path(args.file).read_text(encoding="utf-8")
        ids = hub.import_text(store, text, args.format)
        print(f"{len(ids)} record(s) ingested into {store}")
        return EXIT_OK
    if args.hub_cmd == "export":
        text = hub.export_jsonl(store) if args.format == "jsonl" else hub.export_csv(store)
        if args.out:
            _write(Path(args.out), text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    try:
        records = hub.query(store, algo=args.algo, env_id=args.env, seed=args.seed)
    except hub.NoStoreError:
        records = []
    w = csv.writer(sys.stdout, lineterminator="\n", delimiter="\t")
    w.writerow(["run_id", "algo", "env_id", "seed", "points", "final_score"])
    for r in records:
        w.writerow([r.run_id[:12], r.algo, r.env_id, r.seed, len(r.curve), repr(r.final_score)])
    return EXIT_OK


# --------------------------------------------------------------------------
# deploy


def cmd_deploy(args) -> int:
    if args.deploy_cmd == "export":
        run = Path(args.run)
        cfg = parse_config(run / "config.toml")
        env = make(cfg.env_id, cfg.env_config)
        params = load_params(run / "policy.npz")
        out = Path(args.out) if args.out else run / "policy.lte"
        manifest = deploy.export_model(params, env.observation_space, env.action_space, out)
        print(json.dumps(manifest, sort_keys=True))
        return EXIT_OK
    policy = deploy.load_model(args.model)
    ws = policy.new_workspace()
    out = sys.stdout
    for k, line in enumerate(sys.stdin, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obs = np.array([float(v) for v in next(csv.reader(io.StringIO(line)))], dtype=np.float32)
        except ValueError as exc:
            raise CliError(f"stdin line {k}: {exc}") from None
        try:
            action = policy.infer(obs, ws)
        except ValueError as exc:
            raise CliError(f"stdin line {k}: {exc}") from None
        if isinstance(action, int):
            out.write(f"{action}\n")
        else:
            out.write(",".join(repr(float(a)) for a in action) + "\n")
    out.flush()
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_eval_args(p):
    p.add_argument("--store", help=f"hub store directory (default: ${HUB_ENV_VAR})")
    p.add_argument("--algo", action="append", required=True, help="algorithm name; repeatable")
    p.add_argument("--env", action="append", required=True, help="env id; repeatable")
    p.add_argument("--metric", action="append", help="mean, median, iqm, optimality_gap[:threshold]; repeatable")
    p.add_argument("--reps", type=int, default=2000, help="bootstrap replicates")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--at-step", type=int, default=None, help="read curves at this step instead of final scores")
    p.add_argument("--normalize", action="append", help="per-env min-max range, env=low:high; repeatable")
    p.add_argument("--tau-min", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--taus", type=int, default=51, help="number of profile thresholds")
    p.add_argument("--out", help="directory for metrics.csv, profile.csv, report.json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plugrl", description="Composable RL training, evaluation and deployment.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train an agent from a config file")
    p.add_argument("--config", help="TOML config file (omit for all defaults)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value; repeatable")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="run output directory")
    p.add_argument("--store", help=f"hub store to ingest into (default: config, then ${HUB_ENV_VAR})")
    p.add_argument("--quiet", action="store_true", help="no progress lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics with bootstrap CIs from hub runs")
    _add_eval_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="eval plus pairwise probability of improvement")
    _add_eval_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("hub", help="manage a local run store")
    p.add_argument("--store", help=f"store directory (default: ${HUB_ENV_VAR})")
    hs = p.add_subparsers(dest="hub_cmd", required=True)
    q = hs.add_parser("ingest", help="add records from a JSONL or CSV file ('-' for stdin)")
    q.add_argument("file")
    q.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    q = hs.add_parser("export", help="write all records")
    q.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    q.add_argument("--out", help="output file (default: stdout)")
    q = hs.add_parser("list", help="tabulate records")
    q.add_argument("--algo")
    q.add_argument("--env")
    q.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_hub)

    p = sub.add_parser("deploy", help="export or run a portable policy file")
    ds = p.add_subparsers(dest="deploy_cmd", required=True)
    q = ds.add_parser("export", help="write a model file from a training run directory")
    q.add_argument("--run", required=True, help="run directory written by train")
    q.add_argument("--out", help="model path (default: RUN/policy.lte)")
    q = ds.add_parser("run", help="read CSV observations on stdin, print actions")
    q.add_argument("--model", required=True)
    p.set_defaults(func=cmd_deploy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RegistryError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (hub.HubError, deploy.DeployError, evaluation.EvalError, TrainingError, SpaceError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
