from __future__ import annotations

from skyrelay.management.commands._base import Outcome, SimulationCommand, Table, parse_floats
from skyrelay.montecarlo import METRICS, run_bound_study, run_direct_study

STUDIES = {"bound": run_bound_study, "direct": run_direct_study}

SWEEP_HEADER = (
    "study",
    "L2",
    "M_over_bw",
    "trials",
    "completed",
    "infeasible",
    "skipped",
    *(f"{name}_{stat}" for name in METRICS for stat in ("mean", "se")),
    "xi_mean",
    "xi_se",
    "xi_min",
    "xi_max",
    "full_delivery_fraction",
)


class Command(SimulationCommand):
    help = "Mean trip metrics over (L2, M/b_w) for the bound and/or direct study."

    command_name = "sweep"
    extra_options = ("l2_km", "m_grid", "study")

    def add_command_arguments(self, parser):
        parser.add_argument("--l2-km", default="3,5,7", help="Comma-separated S-D lengths (km)")
        parser.add_argument(
            "--m-grid",
            default="0,1000,2000,4000,6000,8000,10000",
            help="Comma-separated data amounts (bit/Hz)",
        )
        parser.add_argument("--study", choices=("bound", "direct", "both"), default="both")

    def run(self, params, opts):
        studies = ("bound", "direct") if opts["study"] == "both" else (opts["study"],)
        rows = []
        worst = 0.0
        for L2_km in parse_floats(opts["l2_km"]):
            for M in parse_floats(opts["m_grid"]):
                for study in studies:
                    metrics = STUDIES[study](
                        params, L2_km * 1000.0, M, params.run.trials, params.run.seed
                    )
                    rows.append(metrics.as_row())
                    worst = max(worst, metrics.failed_fraction)
                    self.stdout.write(
                        f"{study} L2={L2_km:g} km M={M:g}: "
                        f"{metrics.completed}/{metrics.trials} trials planned"
                    )
        return Outcome(
            [Table("sweep", SWEEP_HEADER, rows)],
            failed_fraction=worst,
            summary=f"sweep done ({len(rows)} points)",
        )
