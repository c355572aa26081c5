from __future__ import annotations

from skyrelay.management.commands._base import Outcome, SimulationCommand, Table
from skyrelay.montecarlo import run_bound_study, run_direct_study

HISTOGRAM_HEADER = ("metric", "bin_low", "bin_high", "count")


class Command(SimulationCommand):
    help = "Histograms of delivery time and delivery efficiency at one (L2, M/b_w) point."

    command_name = "histogram"
    extra_options = ("l2_km", "m", "study")

    def add_command_arguments(self, parser):
        parser.add_argument("--l2-km", type=float, default=5.0, help="S-D length (km)")
        parser.add_argument("--m", type=float, default=6000.0, help="Data to move (bit/Hz)")
        parser.add_argument("--study", choices=("bound", "direct"), default="direct")

    def run(self, params, opts):
        study = run_direct_study if opts["study"] == "direct" else run_bound_study
        metrics = study(
            params, opts["l2_km"] * 1000.0, opts["m"], params.run.trials, params.run.seed
        )

        rows = []
        for name in ("T_delivery", "xi"):
            hist = metrics.histograms[name]
            edges, counts = hist["edges"], hist["counts"]
            for i, count in enumerate(counts):
                rows.append(
                    {"metric": name, "bin_low": edges[i], "bin_high": edges[i + 1], "count": count}
                )
        xi_mean = metrics.xi.get("mean")
        summary = f"{metrics.completed}/{metrics.trials} trials planned"
        if xi_mean is not None:
            summary += f", mean delivery efficiency {xi_mean:.4f}"
        return Outcome(
            [Table("histogram", HISTOGRAM_HEADER, rows)],
            failed_fraction=metrics.failed_fraction,
            summary=summary,
        )
