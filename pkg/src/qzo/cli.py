"""``qzo run | tune | report`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import harness, reporting
from .errors import ConfigurationError
from .optimizers import ALGORITHMS, HyperParams

log = logging.getLogger("qzo")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    """Invalid or unreadable experiment config; maps to exit code 2."""


def load_schema() -> dict:
    return json.loads(resources.files("qzo").joinpath("experiment.schema.json").read_text())


def validate(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {err.message}")


def default_out_dir() -> str:
    return os.environ.get("QZO_OUT", "qzo-out")


def effective_config(args) -> dict:
    """Config file contents with command-line flags layered on top."""
    config: dict = {}
    if args.config is not None:
        try:
            config = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found")
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
    if args.task is not None:
        if config.get("task", {}).get("id") not in (None, args.task):
            config["task"] = {}
        config["task"] = {**config.get("task", {}), "id": args.task}
    if "task" not in config:
        raise ConfigError("no task given: pass --task or a config with a task block")

    blocks = config.get("optimizer", [])
    blocks = [blocks] if isinstance(blocks, dict) else list(blocks)
    if args.optimizer is not None:
        wanted = ALGORITHMS if args.optimizer == "all" else tuple(args.optimizer.split(","))
        by_name = {b.get("algorithm"): b for b in blocks}
        blocks = [by_name.get(name, {"algorithm": name}) for name in wanted]
    if not blocks:
        blocks = [{"algorithm": "SPSA"}]
    config["optimizer"] = blocks

    run = dict(config.get("run", {}))
    for flag, key in (("runs", "n_runs"), ("steps", "n_steps"), ("base_key", "base_key"), ("threads", "threads")):
        value = getattr(args, flag, None)
        if value is not None:
            run[key] = value
    config["run"] = run

    out = dict(config.get("output", {}))
    if args.out is not None:
        out["directory"] = args.out
    out.setdefault("directory", default_out_dir())
    config["output"] = out
    validate(config)
    return config


def _task_spec(config: dict) -> harness.TaskSpec:
    sizes = dict(config["task"])
    return harness.TaskSpec(sizes.pop("id"), sizes)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    config = effective_config(args)
    task = _task_spec(config)
    run = config["run"]
    hps = [HyperParams(b["algorithm"], b.get("hyperparams", {})) for b in config["optimizer"]]
    out_dir = Path(config["output"]["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "effective_config.json", config)

    all_records, n_failed = [], 0
    for hp in hps:
        records = harness.run_suite(
            task,
            hp,
            n_runs=run.get("n_runs", 100),
            base_key=run.get("base_key", 0),
            n_steps=run.get("n_steps"),
            threads=run.get("threads", 1),
        )
        reporting.write_records(records, out_dir / f"records_{task.task}_{hp.algorithm}.jsonl")
        n_failed += sum(r.status != "ok" for r in records)
        all_records += records
    reporting.report(all_records, out_dir)
    if n_failed:
        log.error("%d run(s) failed; see the status field in the JSONL records", n_failed)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_tune(args) -> int:
    config = effective_config(args)
    task = _task_spec(config)
    run = config["run"]
    out_dir = Path(config["output"]["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for block in config["optimizer"]:
        if "search" not in block:
            raise ConfigError(f"optimizer {block['algorithm']} has no search block to tune")
    for block in config["optimizer"]:
        search = block["search"]
        space = harness.SearchSpace.from_json(search)
        best = harness.random_search(
            task,
            block["algorithm"],
            space,
            tuning_keys=tuple(search.get("tuning_keys", harness.DEFAULT_TUNING_KEYS)),
            n_steps=search.get("n_steps", run.get("n_steps")),
            threads=run.get("threads", 1),
        )
        path = out_dir / f"tuned_{task.task}_{block['algorithm']}.json"
        _write_json(path, best.to_json())
        print(f"{block['algorithm']}: {json.dumps(best.values, sort_keys=True)} -> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.records_dir)
    files = sorted(src.glob("*.jsonl")) if src.is_dir() else []
    if not files:
        log.error("no JSONL record files in %s", src)
        return EXIT_RUNTIME
    records = []
    for f in files:
        records += reporting.read_records(f)
    out_dir = Path(args.out) if args.out is not None else src
    for path in reporting.report(records, out_dir):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qzo", description="Zeroth-order optimizer benchmarks on variational quantum tasks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p):
        p.add_argument("--config", help="experiment JSON config")
        p.add_argument("--task", choices=harness.TASKS, help="task preset (overrides config)")
        p.add_argument("--optimizer", help="algorithm name, comma list, or 'all'")
        p.add_argument("--out", help="output directory (default $QZO_OUT or ./qzo-out)")
        p.add_argument("--steps", type=int)
        p.add_argument("--threads", type=int)

    run = sub.add_parser("run", help="execute a benchmark suite")
    experiment_flags(run)
    run.add_argument("--runs", type=int)
    run.add_argument("--base-key", type=int)
    run.set_defaults(func=cmd_run)

    tune = sub.add_parser("tune", help="random-search hyperparameters on the tuning keys")
    experiment_flags(tune)
    tune.set_defaults(func=cmd_tune)

    rep = sub.add_parser("report", help="rebuild CSV/SVG from JSONL records")
    rep.add_argument("records_dir")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"qzo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"qzo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
