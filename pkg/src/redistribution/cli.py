"""Command-line runner: ``train``, ``evaluate``, ``oracle`` and ``table``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .batch import TEST_STREAM, TRAIN_STREAM, prepare_batch, stream_seed
from .errors import ConfigurationError, SolverError, TrainingError, UndefinedIndexError, UsageError
from .evaluation import INDEX_KIND, TableRow, emit_table, evaluate, read_table
from .oracle import OPTIMAL, build_oe_lp, build_ow_lp, format_tableau, simplex_solve
from .profiles import HETEROGENEOUS, HOMOGENEOUS, INPUT_SCHEMES, UTILITY_KEYS, BatchSpec, check_sizes
from .rebate_net import dumps_checkpoint, load_checkpoint, save_checkpoint
from .training import OE, OW, TrainConfig, config_dict, train

log = logging.getLogger("redistribution")

SCHEMA_VERSION = 1
OUT_ENV = "REDISTRIBUTION_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# accepted JSON types per TrainConfig field; None means the field may be null
_INT, _NUM, _STR = (int,), (int, float), (str,)
TRAIN_FIELDS = {
    "n": (_INT, False), "p": (_INT, False), "setting": (_STR, False), "objective": (_STR, False),
    "architecture": (_STR, False), "input_scheme": (_STR, False), "hidden": (_INT, True),
    "rho": (_NUM, False), "lr": (_NUM, False), "lr_final": (_NUM, True), "epochs": (_INT, False),
    "batch_size": (_INT, True), "eval_size": (_INT, False), "seed": (_INT, False),
    "ir_selector": (_STR, False), "plateau_window": (_INT, False), "plateau_tol": (_NUM, False),
    "log_every": (_INT, False), "checkpoint_every": (_INT, False), "k_warmup": (_INT, False),
    "k_update": (_STR, False), "grad_clip": (_NUM, True),
}
EVAL_FIELDS = {
    "n": (_INT, False), "p": (_INT, False), "setting": (_STR, False), "input_scheme": (_STR, False),
    "eval_size": (_INT, False), "seed": (_INT, False),
}
assert set(TRAIN_FIELDS) == {f.name for f in fields(TrainConfig)}


# -- config parsing -----------------------------------------------------------

def _check_fields(doc, schema, source):
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{source}: config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"{source}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    out = {}
    for key, value in doc.items():
        if key == "schema_version":
            continue
        if key not in schema:
            raise ConfigurationError(f"{source}: unknown field {key!r}")
        types, nullable = schema[key]
        if value is None and nullable:
            out[key] = None
            continue
        # bool is an int subclass in Python but never a valid number here
        if isinstance(value, bool) or not isinstance(value, types):
            kind = " or ".join(t.__name__ for t in types)
            raise ConfigurationError(f"{source}: field {key!r} must be {kind}, got {value!r}")
        out[key] = value
    return out


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno}, column {exc.colno})") from exc


def preset_names():
    folder = resources.files(__package__).joinpath("presets")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    path = resources.files(__package__).joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text(encoding="utf-8"))


def parse_train_config(doc, source="config"):
    """Validated :class:`TrainConfig` from a parsed JSON document."""
    values = _check_fields(doc, TRAIN_FIELDS, source)
    config = TrainConfig(**values)
    try:
        config.validate()
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    return config


def config_document(config):
    return {"schema_version": SCHEMA_VERSION, **config_dict(config)}


# -- output helpers -----------------------------------------------------------

def out_root(arg):
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def run_name(setting, objective, architecture, n, p, seed):
    return f"{setting}-{objective}-{architecture}-n{n}-p{p}-s{seed}"


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- subcommands --------------------------------------------------------------

def cmd_train(args):
    if bool(args.config) == bool(args.preset):
        raise UsageError("train needs exactly one of --config or --preset")
    doc = read_json(args.config) if args.config else load_preset(args.preset)
    doc = dict(doc)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.epochs is not None:
        doc["epochs"] = args.epochs
    config = parse_train_config(doc, args.config or f"preset {args.preset}")
    run_dir = out_root(args.out) / run_name(
        config.setting, config.objective, config.architecture, config.n, config.p, config.seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: run_dir / f"{name}.json" for name in ("checkpoint", "manifest")}
    paths["log"] = run_dir / "run.log"
    manifest = {
        "config": config_document(config),
        "version": __version__,
        "seed": config.seed,
        "started": _now(),
        "outputs": {k: v.name for k, v in paths.items() if k != "manifest"},
    }

    def progress(rec):
        if not args.quiet:
            extra = f" k={rec['k']:.6f}" if "k" in rec else ""
            print(f"epoch {rec['epoch']:>7d}  loss {rec['loss']:.6f}  penalty {rec['penalty_sum']:.3e}{extra}")

    try:
        net, k, report = train(config, log_path=paths["log"], checkpoint_path=paths["checkpoint"], progress=progress)
    except TrainingError as exc:
        if exc.checkpoint is not None:
            save_checkpoint(paths["checkpoint"], exc.checkpoint)
        manifest.update(status="diverged", error=str(exc), finished=_now())
        atomic_write(paths["manifest"], _dump(manifest))
        raise
    manifest.update(
        status="ok", finished=_now(), epochs_run=report.epochs_run,
        stopped_early=report.stopped_early, final_loss=report.final_loss, k=k,
    )
    atomic_write(paths["manifest"], _dump(manifest))
    if not args.quiet:
        print(f"wrote {run_dir}")
    return EXIT_OK


def _eval_settings(args, ckpt):
    settings = {
        "n": ckpt["n"], "p": ckpt["p"], "setting": ckpt.get("setting", HOMOGENEOUS),
        "input_scheme": ckpt.get("input_scheme", UTILITY_KEYS), "eval_size": 10000,
        "seed": ckpt.get("seed") or 0,
    }
    if args.config:
        given = _check_fields(read_json(args.config), EVAL_FIELDS, args.config)
        for key in ("n", "p", "setting", "input_scheme"):
            if key in given and given[key] != settings[key]:
                raise ConfigurationError(
                    f"{args.config}: field {key!r} is {given[key]!r} but the checkpoint has {settings[key]!r}")
        settings.update(given)
    if args.seed is not None:
        settings["seed"] = args.seed
    if settings["eval_size"] < 1:
        raise ConfigurationError("eval_size must be positive")
    return settings


def cmd_evaluate(args):
    ckpt, net = load_checkpoint(args.checkpoint)
    settings = _eval_settings(args, ckpt)
    objective = ckpt.get("objective")
    if objective not in INDEX_KIND:
        raise ConfigurationError(f"{args.checkpoint}: checkpoint has no valid objective ({objective!r})")
    spec = BatchSpec(
        count=settings["eval_size"], n=settings["n"], p=settings["p"],
        setting=settings["setting"], seed=stream_seed(settings["seed"], TEST_STREAM),
    )
    batch = prepare_batch(spec, settings["input_scheme"])
    report = evaluate(net, batch)
    value = report.e_oe if objective == OE else report.e_ow
    row = TableRow(n=spec.n, p=spec.p, setting=spec.setting, architecture=net.architecture,
                   objective=objective, value=value)
    root = out_root(args.out)
    run_dir = root / run_name(spec.setting, objective, net.architecture, spec.n, spec.p, ckpt.get("seed"))
    atomic_write(run_dir / "report.csv", emit_table([row]))
    atomic_write(run_dir / "report.json", _dump({"eval": settings, "checkpoint_k": ckpt.get("k"), **report.as_dict()}))
    atomic_write(run_dir / "evaluation.json", _dump({
        "checkpoint": str(Path(args.checkpoint).resolve()), "eval": settings,
        "version": __version__, "timestamp": _now(),
    }))
    table_text = write_table(root)
    if not args.quiet:
        print(emit_table([row]), end="")
        log.debug("aggregate table now has %d rows", table_text.count("\n") - 1)
    return EXIT_OK


def cmd_oracle(args):
    check_sizes(args.n, args.p, args.setting)
    if args.setting == HETEROGENEOUS and args.p > 1 and args.objective == OE:
        raise ConfigurationError("the OE LP is only defined for homogeneous objects or p = 1")
    if args.samples < 1:
        raise ConfigurationError("--samples must be positive")
    seed = 0 if args.seed is None else args.seed
    spec = BatchSpec(args.samples, args.n, args.p, args.setting, seed=stream_seed(seed, TRAIN_STREAM))
    batch = prepare_batch(spec, args.input_scheme)
    lp = build_ow_lp(batch) if args.objective == OW else build_oe_lp(batch)
    if args.dump:
        atomic_write(args.dump, format_tableau(lp))
    result = simplex_solve(lp)
    record = {
        "setting": args.setting, "objective": args.objective, "n": args.n, "p": args.p,
        "samples": args.samples, "seed": seed, "input_scheme": args.input_scheme, **result.as_dict(),
    }
    if result.status == OPTIMAL:
        if args.objective == OW:
            record["k_star"] = result.value
        else:
            record["normalized_objective"] = result.value / float(batch.totals.mean())
    name = f"oracle-{args.setting}-{args.objective}-n{args.n}-p{args.p}-s{seed}.json"
    text = dumps_checkpoint(record)
    atomic_write(out_root(args.out) / name, text)
    if not args.quiet:
        print(text, end="")
    if result.status != OPTIMAL:
        raise SolverError(f"LP is {result.status}")
    return EXIT_OK


def collect_rows(root):
    """Report rows under ``root``; for a repeated configuration the row with
    the latest evaluation timestamp wins."""
    root = Path(root)
    best = {}
    for report in sorted(root.glob("*/report.csv")):
        stamp_path = report.parent / "evaluation.json"
        stamp = read_json(stamp_path).get("timestamp", "") if stamp_path.exists() else ""
        for row in read_table(report.read_text(encoding="utf-8")):
            key = (row.n, row.p, row.setting, row.architecture, row.objective)
            if key in best:
                kept, dropped = sorted([best[key], (stamp, str(report), row)], key=lambda x: x[:2])[::-1]
                log.info("duplicate %s: keeping %s, dropping %s", key, kept[1], dropped[1])
                best[key] = kept
            else:
                best[key] = (stamp, str(report), row)
    return [best[key][2] for key in sorted(best)]


def write_table(root):
    text = emit_table(collect_rows(root), abs_diff=True)
    atomic_write(Path(root) / "table.csv", text)
    return text


def cmd_table(args):
    root = Path(args.results) if args.results else out_root(args.out)
    if not root.is_dir():
        raise ConfigurationError(f"{root}: no such results directory")
    text = write_table(root)
    if not args.quiet:
        print(text, end="")
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="redistribution", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")

    p = sub.add_parser("train", help="train a rebate network")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--preset", help="name of a bundled config: " + ", ".join(preset_names()))
    p.add_argument("--epochs", type=int, help="override the epoch budget")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a fresh test batch")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="JSON evaluation config (eval_size, seed, ...)")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="solve the sampled LP for the best linear rebate")
    p.add_argument("--setting", choices=(HOMOGENEOUS, HETEROGENEOUS), default=HOMOGENEOUS)
    p.add_argument("--objective", choices=(OE, OW), default=OW)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--samples", type=int, default=50000, help="number of sampled profiles T")
    p.add_argument("--input-scheme", choices=INPUT_SCHEMES, default=UTILITY_KEYS)
    p.add_argument("--dump", help="also write the LP as a plain-text tableau")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("table", help="merge report rows into a comparison table")
    p.add_argument("results", nargs="?", help="results directory (default: the output root)")
    p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, SolverError, UndefinedIndexError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
