from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

from django.core.management.base import BaseCommand, CommandError

from skyrelay.exceptions import ConfigError, error_record
from skyrelay.params import SystemParams, load_params, with_overrides
from skyrelay.reporting import FORMATS, manifest, write_json, write_manifest, write_table


EXIT_FAILED_TRIALS = 1
EXIT_ERROR = 2
FAILED_FRACTION_LIMIT = 0.5

COMMON_OPTIONS = ("config", "seed", "trials", "format", "step", "strict")


@dataclass
class Table:
    name: str
    header: Sequence[str]
    rows: List[Mapping[str, Any]] = field(default_factory=list)


@dataclass
class Outcome:
    tables: List[Table]
    failed_fraction: float = 0.0
    summary: str = ""


def parse_floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from e


class SimulationCommand(BaseCommand):
    """
    Shared surface of the experiment commands: parameter loading and
    overrides, output directory, manifest, error record and exit codes.
    Any failure inside resolve_params or run exits 2 with error.json.
    """

    command_name = ""
    extra_options: Sequence[str] = ()

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="Parameter document (YAML)")
        parser.add_argument("--seed", type=int, default=None, help="Root RNG seed")
        parser.add_argument("--trials", type=int, default=None, help="Monte-Carlo trials")
        parser.add_argument("--out", default="results", help="Output directory")
        parser.add_argument("--format", choices=FORMATS, default="csv", help="Table format")
        parser.add_argument("--step", type=float, default=None, help="Planner radius grid step (m)")
        parser.add_argument(
            "--strict",
            action="store_true",
            default=None,
            help="Reject unknown keys in the parameter document",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def run(self, params: SystemParams, opts: Dict[str, Any]) -> Outcome:
        raise NotImplementedError

    def resolve_params(self, opts: Dict[str, Any]) -> SystemParams:
        params = load_params(opts["config"], strict=opts["strict"])
        run: Dict[str, Any] = {}
        if opts["seed"] is not None:
            run["seed"] = opts["seed"]
        if opts["trials"] is not None:
            run["trials"] = opts["trials"]
        if opts["step"] is not None:
            run["grid_step_m"] = opts["step"]
        return with_overrides(params, run=run) if run else params

    def handle(self, *args, **opts):
        out_dir = Path(opts["out"])
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CommandError(
                f"cannot create output directory {out_dir}: {e}", returncode=EXIT_ERROR
            ) from e

        arguments = {k: opts.get(k) for k in (*COMMON_OPTIONS, *self.extra_options)}
        try:
            params = self.resolve_params(opts)
            outcome = self.run(params, opts)
        except Exception as e:
            record = error_record(e, {"command": self.command_name, "arguments": arguments})
            write_json(out_dir / "error.json", record)
            self.stderr.write(json.dumps(record, sort_keys=True))
            raise CommandError(str(e), returncode=EXIT_ERROR) from e

        for table in outcome.tables:
            path = write_table(out_dir, table.name, table.header, table.rows, opts["format"])
            self.stdout.write(f"Wrote {path}")
        write_manifest(
            out_dir, manifest(self.command_name, params, params.run.seed, arguments)
        )

        if outcome.failed_fraction > FAILED_FRACTION_LIMIT:
            raise CommandError(
                f"{outcome.failed_fraction:.0%} of trials infeasible or skipped",
                returncode=EXIT_FAILED_TRIALS,
            )
        self.stdout.write(self.style.SUCCESS(outcome.summary or f"{self.command_name} done"))
