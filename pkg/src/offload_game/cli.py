"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 equilibrium non-convergence,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import equilibrium as eq
from . import leader, sim
from .model import ApProfile, MnoParams, Offer, Scheme, make_profiles

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_NOT_NE = 0, 1, 2, 3

SCHEME_FLAGS = {"spb": Scheme.SALARY_PLUS_BONUS, "salary": Scheme.SALARY_ONLY, "bonus": Scheme.BONUS_ONLY}
TOP_KEYS = {"aps", "gain_coefficient", "scheme", "offer"}
AP_KEYS = {"cost", "quality", "capacity", "penalty"}
OFFER_KEYS = {"p", "B"}


class InputError(Exception):
    pass


@dataclass
class ScenarioFile:
    profiles: list[ApProfile]
    params: MnoParams
    scheme: Scheme | None = None
    offer: Offer | None = None

    def to_dict(self) -> dict:
        out: dict = {
            "aps": [{"cost": ap.cost, "quality": ap.quality, "capacity": ap.capacity, "penalty": ap.penalty}
                    for ap in self.profiles],
            "gain_coefficient": self.params.gain_coefficient,
        }
        if self.scheme is not None:
            out["scheme"] = self.scheme.value
        if self.offer is not None:
            out["offer"] = {"p": self.offer.salary_rate, "B": self.offer.bonus}
        return out


def _number(value, where: str, *, allow_none: bool = False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_keys(obj, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise InputError(f"{where}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise InputError(f"{where}: missing key(s) {', '.join(missing)}")


def parse_scenario(doc) -> ScenarioFile:
    _check_keys(doc, TOP_KEYS, {"aps", "gain_coefficient"}, "scenario")
    aps = doc["aps"]
    if not isinstance(aps, list) or not aps:
        raise InputError("aps: expected a non-empty list")
    profiles = []
    for i, ap in enumerate(aps):
        where = f"aps[{i}]"
        _check_keys(ap, AP_KEYS, {"cost", "quality", "capacity"}, where)
        try:
            profiles.append(ApProfile(
                i,
                _number(ap["cost"], f"{where}.cost"),
                _number(ap["quality"], f"{where}.quality"),
                _number(ap["capacity"], f"{where}.capacity"),
                _number(ap.get("penalty"), f"{where}.penalty", allow_none=True),
            ))
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from None
    try:
        params = MnoParams(_number(doc["gain_coefficient"], "gain_coefficient"))
    except ValueError as exc:
        raise InputError(f"gain_coefficient: {exc}") from None
    scheme = None
    if doc.get("scheme") is not None:
        try:
            scheme = Scheme.parse(doc["scheme"])
        except ValueError as exc:
            raise InputError(f"scheme: {exc}") from None
    offer = None
    if doc.get("offer") is not None:
        _check_keys(doc["offer"], OFFER_KEYS, OFFER_KEYS, "offer")
        try:
            offer = Offer(_number(doc["offer"]["p"], "offer.p"), _number(doc["offer"]["B"], "offer.B"))
        except ValueError as exc:
            raise InputError(f"offer: {exc}") from None
    return ScenarioFile(profiles, params, scheme, offer)


def load_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(doc)


def parse_offer(text: str) -> Offer:
    """Parse ``p=2,B=10``."""
    vals = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in OFFER_KEYS:
            raise InputError(f"--offer: expected p=<rate>,B=<bonus>, got {text!r}")
        try:
            vals[key] = float(val)
        except ValueError:
            raise InputError(f"--offer: {key} is not a number: {val!r}") from None
    if set(vals) != OFFER_KEYS:
        raise InputError(f"--offer: both p and B are required, got {text!r}")
    try:
        return Offer(vals["p"], vals["B"])
    except ValueError as exc:
        raise InputError(f"--offer: {exc}") from None


def parse_grid(text: str) -> tuple[int, int]:
    a, sep, b = text.lower().partition("x")
    try:
        p_steps, b_steps = int(a), int(b)
    except ValueError:
        raise InputError(f"--grid: expected PxQ such as 101x101, got {text!r}") from None
    if not sep or p_steps < 2 or b_steps < 2:
        raise InputError(f"--grid: both dimensions must be >= 2, got {text!r}")
    return p_steps, b_steps


def _floats(text: str, flag: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _is_homogeneous(profiles) -> bool:
    first = profiles[0]
    return all((ap.cost, ap.quality, ap.capacity) == (first.cost, first.quality, first.capacity)
               for ap in profiles)


# ---------------------------------------------------------------------------
# solve


def _follower_only(sf: ScenarioFile, scheme: Scheme, offer: Offer, solver: str, tol: float):
    prof = sf.profiles
    n = len(prof)
    if scheme is Scheme.SALARY_ONLY:
        return eq.ne_salary(prof, offer)
    if scheme is Scheme.BONUS_ONLY:
        if n < 2:
            raise InputError("bonus-only scheme needs at least two APs")
        return eq.ne_bonus_only(prof, offer.bonus)
    if solver == "auto":
        if n >= 2 and _is_homogeneous(prof):
            return eq.ne_homogeneous(n, prof[0].cost, prof[0].quality, prof[0].capacity, offer)
        solver = "cases" if n == 2 and prof[0].cost != prof[1].cost else "iterative"
    if solver == "cases":
        if n != 2:
            raise InputError("--ne-solver cases needs exactly 2 APs")
        return eq.ne_two_ap(prof, offer)
    if solver == "algo3":
        return eq.ne_spb_suboptimal(prof, offer)
    if n < 2:
        raise InputError(f"--ne-solver {solver} needs at least two APs")
    if solver == "aggregate":
        return eq.ne_aggregate(prof, offer)
    return eq.ne_iterative(prof, offer, tol=tol)


def _leader(sf: ScenarioFile, scheme: Scheme, solver: str, grid: tuple[int, int] | None,
            early_stop: bool) -> leader.MnoSolution:
    prof, params = sf.profiles, sf.params
    n = len(prof)
    if scheme is Scheme.SALARY_ONLY:
        return leader.optimal_price_salary_only(prof, params, early_stop=early_stop)
    if scheme is Scheme.BONUS_ONLY:
        if n < 2:
            raise InputError("bonus-only scheme needs at least two APs")
        return leader.optimal_bonus_only(prof, params)
    p_steps, b_steps = grid or (101, 101)
    if solver == "auto":
        if n >= 2 and _is_homogeneous(prof):
            ap = prof[0]
            return leader.optimal_homogeneous(n, ap.cost, ap.quality, ap.capacity, params, p_grid=p_steps)
        solver = "cases" if n == 2 else "algo3"
    if solver == "algo3":
        return leader.optimal_spb_suboptimal(prof, params, p_grid=p_steps)
    if solver == "cases" and n != 2:
        raise InputError("--ne-solver cases needs exactly 2 APs")
    if n < 2:
        raise InputError(f"--ne-solver {solver} needs at least two APs")
    return leader.grid_search_spb(prof, params, p_steps, b_steps, ne_solver=solver)


def _print_solution(scheme: Scheme, offer: Offer, report: eq.EquilibriumReport, utility: float | None,
                    out) -> None:
    print(f"scheme        {scheme.value}", file=out)
    print(f"offer         p = {offer.salary_rate:.4f}   B = {offer.bonus:.4f}", file=out)
    if utility is not None:
        print(f"MNO utility   {utility:.4f}", file=out)
    print(f"equilibrium   {report.method}  converged={report.converged}  iterations={report.iterations}",
          file=out)
    print(f"active APs    {len(report.active_set)}: {list(report.active_set)}", file=out)
    print(f"total data    {report.total_data:.4f}", file=out)
    print(f"{'AP':>4} {'d':>12} {'utility':>12}", file=out)
    for i, (d, u) in enumerate(zip(report.allocation, report.per_ap_utility)):
        print(f"{i:>4} {d:>12.4f} {u:>12.4f}", file=out)


def cmd_solve(args, out=None) -> int:
    out = out or sys.stdout
    sf = load_scenario(args.scenario)
    scheme = SCHEME_FLAGS[args.scheme] if args.scheme else (sf.scheme or Scheme.SALARY_PLUS_BONUS)
    grid = parse_grid(args.grid) if args.grid else None
    offer = parse_offer(args.offer) if args.offer else sf.offer
    if offer is not None:
        report = _follower_only(sf, scheme, offer, args.ne_solver, args.tol)
        utility = None
    else:
        try:
            sol = _leader(sf, scheme, args.ne_solver, grid, not args.no_early_stop)
        except RuntimeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NONCONVERGED
        offer, report, utility = sol.offer, sol.follower_report, sol.utility
    if args.json:
        echo = ScenarioFile(sf.profiles, sf.params, scheme, offer)
        payload = {"scenario": echo.to_dict(), "equilibrium": report.to_dict()}
        if utility is not None:
            payload["utility"] = utility
        print(json.dumps(payload, indent=2), file=out)
    else:
        _print_solution(scheme, offer, report, utility, out)
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# compare


def _summary(report: sim.ComparisonReport, out) -> None:
    print(f"{report.runs} runs per cell, N = {report.n}, master seed {report.master_seed}", file=out)
    print(f"{'regime':<7}{'gain':>7}  {'scheme':<8}{'active':>9}{'utility':>12}{'+/-':>10}{'data':>11}{'skip':>6}",
          file=out)
    for c in report.cells:
        print(f"{c.cost_regime:<7}{c.gain_coefficient:>7.1f}  {c.scheme:<8}{c.mean_active_aps:>9.2f}"
              f"{c.mean_mno_utility:>12.4f}{c.ci_halfwidth_utility:>10.4f}{c.mean_offloaded_data:>11.4f}"
              f"{c.runs_skipped:>6d}", file=out)


def cmd_compare(args, out=None) -> int:
    out = out or sys.stdout
    if args.n < 2:
        raise InputError(f"--n must be >= 2, got {args.n}")
    if args.runs < 1:
        raise InputError(f"--runs must be >= 1, got {args.runs}")
    regimes = [r.strip() for r in args.regimes.split(",") if r.strip()]
    for r in regimes:
        if r not in sim.REGIMES:
            raise InputError(f"--regimes: unknown cost regime {r!r} (choose from low, high)")
    gains = _floats(args.gains, "--gains")
    if not gains or min(gains) <= 0:
        raise InputError("--gains: need at least one positive value")
    report = sim.run_comparison(args.n, regimes, gains, args.runs, args.seed, workers=args.workers)
    try:
        sim.export_csv(report, args.out)
        if args.trace:
            sim.write_trace(report, args.trace)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _summary(report, out)
    print(f"wrote {args.out}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args, out=None) -> int:
    out = out or sys.stdout
    sf = load_scenario(args.scenario)
    scheme = SCHEME_FLAGS[args.scheme] if args.scheme else (sf.scheme or Scheme.SALARY_PLUS_BONUS)
    offer = parse_offer(args.offer) if args.offer else sf.offer
    if offer is None:
        raise InputError("no offer given: pass --offer p=..,B=.. or put an offer in the scenario file")
    d = np.array(_floats(args.allocation, "--allocation"))
    if len(d) != len(sf.profiles):
        raise InputError(f"--allocation has {len(d)} entries but the scenario has {len(sf.profiles)} APs")
    if (d < 0).any():
        raise InputError("--allocation entries must be >= 0")
    res = eq.verify_ne(d, offer, sf.profiles, scheme, grid_points=args.grid_points)
    if res.is_ne:
        print(f"NE verified: max deviation gain {res.max_gain:.3e}", file=out)
        return EXIT_OK
    print(f"not an NE: AP {res.worst_ap} gains {res.max_gain:.6g} by deviating", file=out)
    return EXIT_NOT_NE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="offload-game",
                                 description="MNO / WiFi-AP data offloading incentive game solver")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver diagnostics to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one scenario file")
    s.add_argument("scenario", help="JSON scenario file")
    s.add_argument("--scheme", choices=sorted(SCHEME_FLAGS))
    s.add_argument("--ne-solver", choices=["auto", "cases", "iterative", "algo3", "aggregate"], default="auto")
    s.add_argument("--grid", help="leader search grid PxQ (salary steps x bonus steps)")
    s.add_argument("--tol", type=float, default=1e-8, help="iterative solver tolerance")
    s.add_argument("--offer", help="fixed offer p=<rate>,B=<bonus>; skips the leader search")
    s.add_argument("--no-early-stop", action="store_true", help="salary-only: scan every cost candidate")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="Monte-Carlo comparison of the three schemes")
    c.add_argument("--n", type=int, default=100, help="APs per scenario")
    c.add_argument("--runs", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--regimes", default="low,high")
    c.add_argument("--gains", default=",".join(str(g) for g in sim.DEFAULT_GAINS))
    c.add_argument("--out", default="comparison.csv")
    c.add_argument("--trace", help="optional JSON-lines file with one record per solve")
    c.add_argument("--workers", type=int, default=1, help="worker processes")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="check an allocation for profitable unilateral deviations")
    v.add_argument("scenario")
    v.add_argument("--allocation", required=True, help="comma-separated d values")
    v.add_argument("--offer")
    v.add_argument("--scheme", choices=sorted(SCHEME_FLAGS))
    v.add_argument("--grid-points", type=int, default=1001)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
