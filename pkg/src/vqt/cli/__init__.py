"""Command-line experiment driver (``vqt <command>``).

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
Each run writes its CSVs, ``config.txt`` (the resolved configuration in the
config-file grammar) and ``manifest.json`` (config hash, seed, wall time,
output checksums) into ``--out``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from vqt.cli.commands import COMMANDS
from vqt.cli.config import ConfigError, ExperimentConfig, load_config
from vqt.corpus import ingest_corpus
from vqt.errors import NumericError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

__all__ = ["main", "build_parser", "ingest_corpus", "ExperimentConfig", "load_config"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--shots", type=int, help="shot budget (per circuit; per address for train)")
    common.add_argument("--mode", choices=("exact", "sampled"))
    common.add_argument("--noise-p2q", type=float, dest="noise_p2q")
    common.add_argument("--noise-ro", type=float, dest="noise_ro")
    common.add_argument("--out", type=Path, default=Path("results"))
    common.add_argument("--svg", action="store_true", help="also render an SVG plot")

    parser = argparse.ArgumentParser(prog="vqt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "product-accuracy": "VQDP product accuracy over the batch-size grid",
        "attention-compare": "quantum vs classical Q K^T",
        "train": "train the toy transformer on a corpus",
        "resources": "qubits, CX count and depth per batch size",
        "ingest-check": "tokenize a corpus and report its vocabulary",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "resources":
            p.add_argument("--sizes", type=int, nargs="*", help="extra batch sizes")
        if name in ("train", "ingest-check"):
            p.add_argument("--corpus", help="UTF-8 text file (default: bundled toy corpus)")
        if name == "train":
            p.add_argument("--epochs", type=int)
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(args: argparse.Namespace) -> int:
    overrides = {
        "seed": args.seed, "shots": args.shots, "mode": args.mode,
        "noise_p2q": args.noise_p2q, "noise_ro": args.noise_ro,
        "corpus": getattr(args, "corpus", None), "epochs": getattr(args, "epochs", None),
        "sizes": tuple(args.sizes) if getattr(args, "sizes", None) else None,
    }
    try:
        cfg = load_config(args.command, args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo(), encoding="utf-8")
    start = time.perf_counter()
    try:
        result = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    files = dict(result["files"])
    if args.svg and "plot" in result:
        from vqt.cli.plots import render

        kind, data = result["plot"]
        files["plot"] = render(kind, data, out / "plot.svg")
    manifest = {
        "command": args.command,
        "config_sha256": cfg.digest(),
        "seeds": [cfg.seed],
        "wall_time_s": time.perf_counter() - start,
        "q_dim": cfg.model.q_dim,
        "outputs": {name: {"file": p.name, "sha256": _sha256(p)} for name, p in sorted(files.items())},
    }
    manifest.update(result.get("extra", {}))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    if "table" in result:
        header, rows = result["table"]
        print("\t".join(header))
        for row in rows:
            print("\t".join(str(v) for v in row))
    for name, p in sorted(files.items()):
        print(f"wrote {p}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)
