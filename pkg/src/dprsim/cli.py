"""Command-line front end.

    dprsim run --experiment placement --workload bram --difficulty easy --seed 1
    dprsim run --sweep --seed 1 --out results/
    dprsim rerun results/manifest.json --out again/
    dprsim tables results/results.csv --out tables/
    dprsim layouts --workload dsp --seed 1 --out pool.json
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .devices import BUNDLED, bundled_device
from .experiments import (
    ExperimentResult,
    OverheadModel,
    layout_pool,
    run_overhead_experiment,
    run_placement_experiment,
)
from .fabric import ConfigError, Device, ResourceKind, build_device, load_device_config
from .footprint import DEFAULT_SIZE_MODEL, SizeModel
from .layouts import Layout, LayoutError, check_layout, dump_layouts, load_layouts
from .workloads import Difficulty, Family, SequenceError, WorkloadSpec

log = logging.getLogger("dprsim")

SCHEMA = "dprsim-results/1"
CSV_FIELDS = ["experiment", "workload", "difficulty", "afuDelta", "system", "metric", "value", "seed"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SEQUENCE = 3
EXIT_LAYOUT = 4

SWEEP_DELTAS = (1, 2, 3, 4)


@dataclass
class RunConfig:
    experiment: str = "placement"
    workload: str = "bram"
    difficulty: str = "easy"
    seed: int | None = None
    device: str | None = None
    layouts: str | None = None
    n_combos: int = 1000
    n_layouts: int = 1000
    length: int = 1000
    afu_delta: int = 1
    routability_cap: float = 0.70
    header_bytes: int = DEFAULT_SIZE_MODEL.header_bytes
    bytes_per_cell: dict = field(
        default_factory=lambda: {k.value: v for k, v in DEFAULT_SIZE_MODEL.bytes_per_cell.items()}
    )
    pcap_bandwidth: float = 128 * 2**20
    energy_per_byte: float | None = None
    sweep: bool = False
    greedy: bool = False

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("--seed is required")
        if self.experiment not in ("placement", "overhead"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        Family(self.workload)
        Difficulty(self.difficulty)
        for name in ("n_combos", "length", "afu_delta"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_layouts < 0:
            raise ConfigError("n_layouts must be non-negative")
        if not 0 < self.routability_cap <= 1:
            raise ConfigError("routability cap must lie in (0, 1]")
        if self.pcap_bandwidth <= 0:
            raise ConfigError("PCAP bandwidth must be positive")
        self.size_model()

    def size_model(self) -> SizeModel:
        try:
            per = {ResourceKind(k): int(v) for k, v in self.bytes_per_cell.items()}
            return SizeModel(per, self.header_bytes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


# -- execution -------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """One unit of work in a run."""

    experiment: str
    family: str
    difficulty: str
    afu_delta: int = 0


def _device_for(cfg: RunConfig, family: str) -> Device:
    if cfg.device:
        return build_device(load_device_config(cfg.device))
    return bundled_device(family)


def _pool_for(cfg: RunConfig, device: Device) -> list[Layout] | None:
    if not cfg.layouts:
        return None
    pool = load_layouts(Path(cfg.layouts).read_text(), device.name)
    if not pool:
        raise ConfigError(f"{cfg.layouts}: empty layout pool")
    for i, layout in enumerate(pool):
        problems = check_layout(device, layout)
        if problems:
            raise ConfigError(f"{cfg.layouts}: layout {i} does not fit {device.name}: {problems[0]}")
    return pool


def _run_cell(cfg: RunConfig, cell: Cell) -> dict:
    """Run one cell; returns a JSON-able record (result or failure)."""
    device = _device_for(cfg, cell.family)
    spec = WorkloadSpec(Family(cell.family), Difficulty(cell.difficulty))
    pool = _pool_for(cfg, device)
    if cell.experiment == "placement":
        result = run_placement_experiment(
            device, spec, cfg.n_combos, cfg.n_layouts, cfg.seed,
            cfg.routability_cap, cfg.size_model(), cfg.greedy, pool,
        )
        return {"cell": asdict(cell), "result": result}
    try:
        result = run_overhead_experiment(
            device, spec, cfg.length, cell.afu_delta, cfg.seed,
            n_combos=cfg.n_combos, n_layouts=cfg.n_layouts,
            model=OverheadModel(cfg.pcap_bandwidth, cfg.energy_per_byte),
            routability_cap=cfg.routability_cap, size_model=cfg.size_model(), pool=pool,
        )
    except SequenceError as exc:
        if not cfg.sweep:
            raise
        return {"cell": asdict(cell), "failure": str(exc), "progress": exc.progress}
    return {"cell": asdict(cell), "result": result}


def plan(cfg: RunConfig) -> list[Cell]:
    if not cfg.sweep:
        delta = cfg.afu_delta if cfg.experiment == "overhead" else 0
        return [Cell(cfg.experiment, cfg.workload, cfg.difficulty, delta)]
    cells = [Cell("placement", f.value, d.value) for f in Family for d in Difficulty]
    cells += [
        Cell("overhead", f.value, d.value, k)
        for f in Family
        for d in Difficulty
        for k in SWEEP_DELTAS
    ]
    return cells


def _run_worker(args: tuple[dict, Cell]) -> dict:
    cfg_dict, cell = args
    record = _run_cell(RunConfig(**cfg_dict), cell)
    if "result" in record:
        record["result"] = _result_record(record["result"])
    return record


def _result_record(result: ExperimentResult) -> dict:
    return {"dict": result.to_dict(), "rows": result.rows()}


def execute(cfg: RunConfig, jobs: int = 1) -> list[dict]:
    """Run every planned cell; output order follows the plan, not completion."""
    cells = plan(cfg)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_worker, [(cfg.to_dict(), c) for c in cells]))
    out = []
    for cell in cells:
        log.info("running %s", cell)
        record = _run_cell(cfg, cell)
        if "result" in record:
            record["result"] = _result_record(record["result"])
        out.append(record)
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def write_outputs(cfg: RunConfig, records: list[dict], out: Path) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA}\n")
        writer = csv.DictWriter(fh, CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            if "result" in rec:
                for row in rec["result"]["rows"]:
                    writer.writerow({k: _fmt(v) for k, v in row.items()})
            else:
                c = rec["cell"]
                writer.writerow({
                    "experiment": c["experiment"], "workload": c["family"],
                    "difficulty": c["difficulty"], "afuDelta": c["afu_delta"],
                    "system": "sequence", "metric": "constructionFailedAfter",
                    "value": rec["progress"], "seed": cfg.seed,
                })
    manifest = {
        "schema": SCHEMA,
        "config": cfg.to_dict(),
        "cells": [
            {"cell": r["cell"], "result": r["result"]["dict"]} if "result" in r
            else {"cell": r["cell"], "failure": r["failure"], "progress": r["progress"]}
            for r in records
        ],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return csv_path, manifest_path


# -- tables ----------------------------------------------------------------

def write_tables(results_csv: Path, out: Path) -> list[Path]:
    """Plot-ready tables: placement rate by difficulty, mean transition ms by afuDelta."""
    with open(results_csv) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out.mkdir(parents=True, exist_ok=True)
    written = []
    placement = [r for r in rows if r["metric"] == "placementRate"]
    if placement:
        path = out / "placement_rates.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["workload", "difficulty", "system", "seed", "placementRate"])
            for r in placement:
                w.writerow([r["workload"], r["difficulty"], r["system"], r["seed"], r["value"]])
        written.append(path)
    times = [r for r in rows if r["metric"] == "meanTransitionSeconds"]
    if times:
        path = out / "transition_times.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["workload", "afuDelta", "difficulty", "system", "seed", "meanTransitionMs"])
            for r in times:
                ms = repr(round(float(r["value"]) * 1000, 9))
                w.writerow([r["workload"], r["afuDelta"], r["difficulty"], r["system"], r["seed"], ms])
        written.append(path)
    return written


# -- argument parsing ------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--experiment", choices=["placement", "overhead"], default="placement")
    p.add_argument("--workload", choices=[f.value for f in Family], default="bram")
    p.add_argument("--difficulty", choices=[d.value for d in Difficulty], default="easy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sweep", action="store_true",
                   help="all workloads x difficulties, plus overhead for afuDelta 1..4")
    p.add_argument("--device", help=f"device config JSON (default: bundled {'/'.join(BUNDLED)})")
    p.add_argument("--layouts", help="layout pool JSON written by `dprsim layouts`")
    p.add_argument("--n-combos", type=int, default=1000)
    p.add_argument("--n-layouts", type=int, default=1000, help="random layouts besides the naive one")
    p.add_argument("--length", type=int, default=1000, help="overhead sequence length")
    p.add_argument("--afu-delta", type=int, default=1)
    p.add_argument("--routability-cap", type=float, default=0.70)
    p.add_argument("--header-bytes", type=int, default=DEFAULT_SIZE_MODEL.header_bytes)
    p.add_argument("--bytes-per-cell", metavar="KIND=BYTES", action="append", default=[],
                   help="size-model override, e.g. bram=63024 (repeatable)")
    p.add_argument("--pcap-bandwidth", type=float, default=128 * 2**20, help="bytes/second")
    p.add_argument("--energy-per-byte", type=float, default=None)
    p.add_argument("--greedy", action="store_true", help="non-exhaustive amorphous search")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dprsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment or the full sweep")
    _add_run_flags(run)
    run.add_argument("--out", default="results", help="output directory")

    rerun = sub.add_parser("rerun", help="repeat a run from its manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("--out", default="results")

    tables = sub.add_parser("tables", help="plot-ready tables from results.csv")
    tables.add_argument("results")
    tables.add_argument("--out", default="tables")

    lay = sub.add_parser("layouts", help="generate and dump a layout pool")
    lay.add_argument("--workload", choices=[f.value for f in Family], default="bram")
    lay.add_argument("--device")
    lay.add_argument("--seed", type=int, required=True)
    lay.add_argument("--n-layouts", type=int, default=1000)
    lay.add_argument("--out", required=True)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(
        experiment=args.experiment, workload=args.workload, difficulty=args.difficulty,
        seed=args.seed, device=args.device, layouts=args.layouts,
        n_combos=args.n_combos, n_layouts=args.n_layouts, length=args.length,
        afu_delta=args.afu_delta, routability_cap=args.routability_cap,
        header_bytes=args.header_bytes, pcap_bandwidth=args.pcap_bandwidth,
        energy_per_byte=args.energy_per_byte, sweep=args.sweep, greedy=args.greedy,
    )
    for item in args.bytes_per_cell:
        kind, sep, value = item.partition("=")
        if not sep or not value.isdigit():
            raise ConfigError(f"bad --bytes-per-cell {item!r}; expected KIND=BYTES")
        cfg.bytes_per_cell[kind] = int(value)
    return cfg


def _run(cfg: RunConfig, out: str, jobs: int) -> int:
    cfg.validate()
    records = execute(cfg, jobs)
    csv_path, manifest = write_outputs(cfg, records, Path(out))
    print(f"wrote {csv_path} and {manifest}")
    for rec in records:
        if "failure" in rec:
            print(f"  {rec['cell']}: {rec['failure']}", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(_config_from_args(args), args.out, args.jobs)
        if args.command == "rerun":
            try:
                data = json.loads(Path(args.manifest).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read manifest: {exc}") from exc
            return _run(RunConfig.from_dict(data["config"]), args.out, args.jobs)
        if args.command == "tables":
            for path in write_tables(Path(args.results), Path(args.out)):
                print(f"wrote {path}")
            return EXIT_OK
        if args.command == "layouts":
            device = (build_device(load_device_config(args.device)) if args.device
                      else bundled_device(args.workload))
            pool = layout_pool(device, args.n_layouts, args.seed)
            Path(args.out).write_text(dump_layouts(pool) + "\n")
            print(f"wrote {len(pool)} layouts to {args.out}")
            return EXIT_OK
    except SequenceError as exc:
        print(f"error: sequence construction failed: {exc}", file=sys.stderr)
        return EXIT_SEQUENCE
    except LayoutError as exc:
        print(f"error: layout generation failed: {exc}", file=sys.stderr)
        return EXIT_LAYOUT
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG
