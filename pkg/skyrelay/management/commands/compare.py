from __future__ import annotations

from skyrelay.management.commands._base import Outcome, SimulationCommand, Table, parse_floats
from skyrelay.montecarlo import compare_methods

COMPARE_HEADER = (
    "M_over_bw",
    "trials",
    "completed",
    "opt_E_total_mean",
    "opt_M_t_over_bw_mean",
    "opt_T_total_mean",
    "df_E_total_mean",
    "df_M_t_over_bw_mean",
    "df_T_total_mean",
    "data_dominance_rate",
    "both_full",
    "time_dominance_rate",
)


class Command(SimulationCommand):
    help = "Optimal versus deliver-first plans on the same random instances."

    command_name = "compare"
    extra_options = ("l2_km", "m_grid")

    def add_command_arguments(self, parser):
        parser.add_argument("--l2-km", type=float, default=5.0, help="S-D length (km)")
        parser.add_argument(
            "--m-grid", default="1000,4000,6000,10000", help="Comma-separated data amounts (bit/Hz)"
        )

    def run(self, params, opts):
        rows = compare_methods(
            params,
            opts["l2_km"] * 1000.0,
            parse_floats(opts["m_grid"]),
            params.run.trials,
            params.run.seed,
        )
        trials = params.run.trials
        completed = rows[0]["completed"] if rows else 0
        return Outcome(
            [Table("compare", COMPARE_HEADER, rows)],
            failed_fraction=(trials - completed) / trials,
            summary=f"compare done ({completed}/{trials} instances planned)",
        )
