"""Command-line runner: ``randsense run <config.json> [--out DIR] [--seed N] [--threads K]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, InfeasibleError, ValidationError
from .experiments import EXPERIMENTS, Document, Table, parse_params

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3


@dataclass
class ExperimentConfig:
    schema_version: int
    kind: str
    seed: int
    params: object
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a JSON object")
        allowed = {"schema_version", "kind", "seed", "params", "output_dir"}
        for key in data:
            if key not in allowed:
                raise ConfigError(key, "unknown field")
        for key in ("schema_version", "kind", "seed"):
            if key not in data:
                raise ConfigError(key, "required field missing")
        if data["schema_version"] != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"unsupported version {data['schema_version']!r}, expected {SCHEMA_VERSION}")
        kind = data["kind"]
        if kind not in EXPERIMENTS:
            raise ConfigError("kind", f"unknown experiment {kind!r}; choose from {sorted(EXPERIMENTS)}")
        seed = data["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        out = data.get("output_dir")
        if out is not None and not isinstance(out, str):
            raise ConfigError("output_dir", "must be a string")
        params = parse_params(EXPERIMENTS[kind][0], data.get("params", {}))
        return cls(SCHEMA_VERSION, kind, seed, params, out, data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunManifest:
    config_sha256: str
    version: str
    kind: str
    seed: int
    wall_time_s: float
    files: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list:
    """Execute a parsed configuration and return its result objects."""
    runner = EXPERIMENTS[config.kind][1]
    if threads <= 1:
        return runner(config.params, config.seed, None)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return runner(config.params, config.seed, pool)


# ---------------------------------------------------------------- serialization


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if not math.isfinite(v) else format(v, ".17g")
    return str(v)


def _flatten(table: Table) -> tuple[list[str], list[list]]:
    """Split complex columns into ``_re`` / ``_im`` pairs."""
    cplx = [any(isinstance(r[i], (complex, np.complexfloating)) for r in table.rows) for i in range(len(table.header))]
    header = []
    for name, c in zip(table.header, cplx):
        header += [f"{name}_re", f"{name}_im"] if c else [name]
    rows = []
    for r in table.rows:
        out = []
        for v, c in zip(r, cplx):
            out += [complex(v).real, complex(v).imag] if c else [v]
        rows.append(out)
    return header, rows


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no NaN/Inf; encode them as null
        return v if math.isfinite(v) else None
    return v


def emit_outputs(results: list, fmt: str, directory) -> list[Path]:
    """Write tables (CSV or JSON) and documents (JSON) into ``directory``.

    Floats are written with 17 significant digits, so values round-trip
    exactly. Complex columns become ``<name>_re`` / ``<name>_im``.

    Raises
    ------
    ValidationError
        If ``results`` is empty or ``fmt`` is unknown.
    OSError
        If a file cannot be written; the message names the path.
    """
    if not results:
        raise ValidationError("no results to write")
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown output format {fmt!r}")
    directory = Path(directory)
    written = []
    for res in results:
        if isinstance(res, Table):
            header, rows = _flatten(res)
            path = directory / f"{res.name}.{fmt}"
            try:
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    if fmt == "csv":
                        w = csv.writer(fh, lineterminator="\n")
                        w.writerow(header)
                        w.writerows([_fmt(v) for v in r] for r in rows)
                    else:
                        json.dump([dict(zip(header, _jsonable(r))) for r in rows], fh, indent=1)
            except OSError as exc:
                raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
        elif isinstance(res, Document):
            path = directory / f"{res.name}.json"
            try:
                path.write_text(json.dumps(_jsonable(res.data), indent=2, sort_keys=True), encoding="utf-8")
            except OSError as exc:
                raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
        else:
            raise ValidationError(f"cannot serialize result of type {type(res).__name__}")
        written.append(path)
    return written


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_to_directory(config_path, out=None, seed=None, threads: int = 1, fmt: str = "csv") -> RunManifest:
    """Run a config file and write results plus ``manifest.json`` into the output directory.

    Files are staged in a sibling temporary directory and moved into place
    only after every write succeeds, so failures leave no partial output.
    """
    raw = Path(config_path).read_bytes()
    data = json.loads(raw)
    if seed is not None and isinstance(data, dict):
        data["seed"] = seed
    config = ExperimentConfig.from_dict(data)
    target = Path(out or config.output_dir or f"out/{config.kind}")
    t0 = time.perf_counter()
    results = run_experiment(config, threads)
    wall = time.perf_counter() - t0
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=target.parent))
    try:
        files = emit_outputs(results, fmt, stage)
        manifest = RunManifest(
            config_sha256=hashlib.sha256(raw).hexdigest(),
            version=__version__,
            kind=config.kind,
            seed=config.seed,
            wall_time_s=wall,
            files={p.name: _sha256(p) for p in files},
        )
        (stage / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
        target.mkdir(parents=True, exist_ok=True)
        for p in sorted(stage.iterdir()):
            os.replace(p, target / p.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return manifest


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="randsense", description="Run sensing experiments from JSON configs.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", help="path to a JSON experiment config")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    run.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        manifest = run_to_directory(args.config, args.out, args.seed, args.threads, args.format)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"invalid JSON in {args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"did not converge: {exc} (residual {exc.residual:.3g})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps({"kind": manifest.kind, "files": sorted(manifest.files), "wall_time_s": round(manifest.wall_time_s, 3)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
