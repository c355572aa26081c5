from __future__ import annotations

from skyrelay.exceptions import InfeasibleTripError
from skyrelay.geometry import Point2
from skyrelay.management.commands._base import Outcome, SimulationCommand, Table
from skyrelay.params import with_overrides
from skyrelay.planner import deliver_first_plan, plan_record, plan_route

PLAN_HEADER = (
    "status",
    "route",
    "h1_x",
    "h1_y",
    "h2_x",
    "h2_y",
    "R_c2u",
    "R_u2b",
    "T_total",
    "T_delivery",
    "E_total",
    "M_t_over_bw",
    "feasible_full_delivery",
)


class Command(SimulationCommand):
    help = "Plan one trip for explicit S, D, IoT cluster and TBS coordinates."

    command_name = "plan"
    extra_options = (
        "s_x",
        "s_y",
        "d_x",
        "d_y",
        "iot_x",
        "iot_y",
        "tbs_x",
        "tbs_y",
        "m",
        "deliver_first",
    )

    def add_command_arguments(self, parser):
        parser.add_argument("--s-x", type=float, default=0.0)
        parser.add_argument("--s-y", type=float, default=0.0)
        parser.add_argument("--d-x", type=float, default=None, help="Default: L2")
        parser.add_argument("--d-y", type=float, default=0.0)
        parser.add_argument("--iot-x", type=float, required=True)
        parser.add_argument("--iot-y", type=float, required=True)
        parser.add_argument("--tbs-x", type=float, required=True)
        parser.add_argument("--tbs-y", type=float, required=True)
        parser.add_argument("--m", type=float, default=None, help="Data to move (bit/Hz)")
        parser.add_argument(
            "--deliver-first",
            action="store_true",
            help="Plan the deliver-first baseline instead of the optimum",
        )

    def run(self, params, opts):
        if opts["m"] is not None:
            params = with_overrides(params, M_over_bw=opts["m"])
        S = Point2(opts["s_x"], opts["s_y"])
        D = Point2(opts["d_x"] if opts["d_x"] is not None else S.x + params.L2, opts["d_y"])
        iot = Point2(opts["iot_x"], opts["iot_y"])
        tbs = Point2(opts["tbs_x"], opts["tbs_y"])

        planner = deliver_first_plan if opts["deliver_first"] else plan_route
        try:
            plan = planner(S, D, iot, tbs, params)
        except InfeasibleTripError as e:
            self.stderr.write(str(e))
            row = {"status": "infeasible"}
            return Outcome([Table("plan", PLAN_HEADER, [row])], failed_fraction=1.0)

        row = {"status": "ok", **plan_record(plan)}
        summary = (
            f"route {row['route']}: T = {plan.T_total:.1f} s, E = {plan.E_total:.4g} J, "
            f"M_t = {plan.M_t_over_bw:.4g} bit/Hz"
        )
        return Outcome([Table("plan", PLAN_HEADER, [row])], summary=summary)
