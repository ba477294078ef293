"""Command-line entry point: one batch run per invocation.

Exit codes: 0 success, 1 modeling or data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .pipeline import RUNNERS
from .reports import csv_text, read_manifest, sha256_file, write_manifest

THREADS_ENV = "COUNTYSPATIAL_THREADS"
EXIT_OK, EXIT_MODEL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("ingest", "weights", "model1", "model2", "model3", "model4", "select", "importance",
            "report")


def resolve_threads(flag: int | None, cfg: RunConfig) -> int:
    """Flag, then config, then the environment variable, then 1."""
    if flag is not None:
        return flag
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    return 1


def _input_hashes(cfg: RunConfig) -> dict[str, str]:
    inp = cfg.inputs
    paths = [inp.geometry, *inp.attributes, *inp.daily, *(p.path for p in inp.points)]
    return {p: sha256_file(p) for p in paths}


def execute(command: str, cfg: RunConfig, out_dir: str | Path, threads: int = 1) -> dict:
    """Run ``command`` and write its files plus a manifest; returns the manifest fields."""
    runner = RUNNERS[command]
    with threadpool_limits(limits=threads):
        bundle = runner(cfg, n_jobs=threads) if command == "importance" else runner(cfg)
    outputs = bundle.write(out_dir)
    inputs = _input_hashes(cfg)
    write_manifest(out_dir, command=command, config=cfg.canonical(), config_hash=cfg.digest(),
                   seed=cfg.seed, version=__version__, inputs=inputs, outputs=outputs,
                   extra={"notes": bundle.notes, **bundle.meta})
    return {"outputs": outputs, "notes": bundle.notes}


def _report(manifest_path: str, out: str | None, threads: int | None) -> int:
    try:
        man = read_manifest(manifest_path)
        command, stored = man["command"], man["outputs"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from None
    cfg = parse_config(man["config"])
    if cfg.digest() != man.get("config_hash"):
        raise ConfigError("manifest config does not match its recorded hash")
    for path, digest in man.get("inputs", {}).items():
        if not Path(path).exists():
            raise ConfigError(f"input {path} recorded in the manifest no longer exists")
        if sha256_file(path) != digest:
            print(f"warning: input {path} changed since the recorded run", file=sys.stderr)
    if man.get("version") != __version__:
        print(f"warning: manifest written by version {man.get('version')}, running {__version__}",
              file=sys.stderr)
    out_dir = Path(out) if out else Path(tempfile.mkdtemp(prefix="countyspatial-report-"))
    result = execute(command, cfg, out_dir, resolve_threads(threads, cfg))
    rows, same = [], True
    for name in sorted(set(stored) | set(result["outputs"])):
        a, b = stored.get(name), result["outputs"].get(name)
        status = "identical" if a == b else "differs"
        same &= a == b
        rows.append((name, a or "", b or "", status))
        print(f"{status:9s} {name}")
    (out_dir / "report.csv").write_text(csv_text(["file", "recorded", "rerun", "status"], rows),
                                        encoding="utf-8")
    print(f"re-ran {command} into {out_dir}: " + ("all outputs identical" if same else
                                                   "outputs differ"))
    return EXIT_OK if same else EXIT_MODEL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countyspatial", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, metavar="PATH",
                        help="run config (YAML); for 'report', a manifest file or its directory")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, metavar="N", help="random seed (overrides config)")
    parser.add_argument("--threads", type=int, metavar="N",
                        help=f"worker threads (default: config, then ${THREADS_ENV}, then 1)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "report":
            return _report(args.config, args.out, args.threads)
        cfg = load_config(args.config)
        if args.command not in ("ingest", "weights") and cfg.model != args.command:
            raise ConfigError(f"model: config is for {cfg.model!r}, not {args.command!r}")
        if args.seed is not None:
            cfg = parse_config({**cfg.canonical(), "seed": args.seed})
        out = args.out or cfg.output_dir
        result = execute(args.command, cfg, out, resolve_threads(args.threads, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    for note in result["notes"]:
        print(note)
    print(f"wrote {len(result['outputs'])} files to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
