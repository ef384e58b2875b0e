"""Random AP populations and the Monte-Carlo comparison of the three schemes.

Scenario seeds depend on (master seed, cost regime, run index) only, so every
gain value is evaluated on the same populations. This keeps the bonus-only
active count exactly flat across gains and makes gain trends paired
comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .leader import MnoSolution, optimal_bonus_only, optimal_price_salary_only, optimal_spb_suboptimal
from .model import ApProfile, MnoParams, Scheme, make_profiles

REGIMES = {"low": 0, "high": 1}
DEFAULT_GAINS = (10.0, 20.0, 30.0, 40.0, 50.0)
SCHEME_ORDER = (Scheme.SALARY_PLUS_BONUS, Scheme.SALARY_ONLY, Scheme.BONUS_ONLY)
CSV_COLUMNS = (
    "scheme",
    "cost_regime",
    "gain_coefficient",
    "mean_active_aps",
    "mean_mno_utility",
    "mean_offloaded_data",
    "ci_halfwidth_utility",
    "runs_ok",
    "runs_skipped",
)
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class Scenario:
    profiles: tuple[ApProfile, ...]
    params: MnoParams
    seed: int
    cost_regime: str


def _open_unit(rng: np.random.Generator, size: int) -> np.ndarray:
    # 1 - U[0, 1) lies in (0, 1]
    return 1.0 - rng.random(size)


def generate_scenario(n: int, cost_regime: str, seed: int, gain_coefficient: float = 10.0) -> Scenario:
    """Draw ``n`` APs: capacity in (0, 5], quality in (0, 1], penalty 1/capacity.

    Costs are (0, 1] for the ``low`` regime and [1, 10] for ``high``.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 APs, got {n}")
    if cost_regime not in REGIMES:
        raise ValueError(f"cost_regime must be one of {sorted(REGIMES)}, got {cost_regime!r}")
    rng = np.random.default_rng(seed)
    capacity = 5.0 * _open_unit(rng, n)
    quality = _open_unit(rng, n)
    cost = _open_unit(rng, n) if cost_regime == "low" else rng.uniform(1.0, 10.0, n)
    profiles = tuple(make_profiles(cost, quality, capacity, 1.0 / capacity))
    return Scenario(profiles, MnoParams(gain_coefficient), int(seed), cost_regime)


def scenario_seed(master_seed: int, cost_regime: str, run: int) -> int:
    """64-bit seed for one run, derived by counter from the master seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(REGIMES[cost_regime], run))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RunRecord:
    cost_regime: str
    gain_coefficient: float
    run: int
    seed: int
    scheme: str
    p: float
    B: float
    active_set: list[int]
    utility: float
    offloaded: float
    ok: bool = True


@dataclass
class CellStats:
    scheme: str
    cost_regime: str
    gain_coefficient: float
    mean_active_aps: float
    mean_mno_utility: float
    mean_offloaded_data: float
    ci_halfwidth_utility: float
    runs_ok: int
    runs_skipped: int


@dataclass
class ComparisonReport:
    n: int
    runs: int
    master_seed: int
    regimes: tuple[str, ...]
    gains: tuple[float, ...]
    cells: list[CellStats] = field(default_factory=list)
    records: list[RunRecord] = field(default_factory=list, repr=False)

    def cell(self, scheme: Scheme | str, regime: str, gain: float) -> CellStats:
        name = Scheme.parse(scheme).value
        for c in self.cells:
            if c.scheme == name and c.cost_regime == regime and c.gain_coefficient == gain:
                return c
        raise KeyError((name, regime, gain))

    def series(self, scheme: Scheme | str, regime: str, attr: str) -> list[float]:
        return [getattr(self.cell(scheme, regime, g), attr) for g in self.gains]


SOLVERS = {
    Scheme.SALARY_PLUS_BONUS: optimal_spb_suboptimal,
    Scheme.SALARY_ONLY: optimal_price_salary_only,
    Scheme.BONUS_ONLY: optimal_bonus_only,
}


def _record(sc: Scenario, run: int, scheme: Scheme, sol: MnoSolution) -> RunRecord:
    rep = sol.follower_report
    return RunRecord(sc.cost_regime, sc.params.gain_coefficient, run, sc.seed, scheme.value,
                     sol.offer.salary_rate, sol.offer.bonus, list(rep.active_set), sol.utility,
                     rep.total_data, bool(rep.converged))


def _solve_run(task: tuple[int, str, int, int, tuple[float, ...]]) -> list[RunRecord]:
    n, regime, run, seed, gains = task
    base = generate_scenario(n, regime, seed)
    out = []
    for g in gains:
        sc = replace(base, params=MnoParams(g))
        for scheme in SCHEME_ORDER:
            out.append(_record(sc, run, scheme, SOLVERS[scheme](list(sc.profiles), sc.params)))
    return out


def _aggregate(records: Sequence[RunRecord], scheme: str, regime: str, gain: float) -> CellStats:
    rows = [r for r in records if r.scheme == scheme and r.cost_regime == regime and r.gain_coefficient == gain]
    ok = [r for r in rows if r.ok]
    k = len(ok)
    if k == 0:
        nan = math.nan
        return CellStats(scheme, regime, gain, nan, nan, nan, nan, 0, len(rows))
    util = [r.utility for r in ok]
    mean_u = math.fsum(util) / k
    if k > 1:
        var = math.fsum((u - mean_u) ** 2 for u in util) / (k - 1)
        half = Z_95 * math.sqrt(var / k)
    else:
        half = math.nan
    return CellStats(
        scheme, regime, gain,
        mean_active_aps=math.fsum(len(r.active_set) for r in ok) / k,
        mean_mno_utility=mean_u,
        mean_offloaded_data=math.fsum(r.offloaded for r in ok) / k,
        ci_halfwidth_utility=half,
        runs_ok=k,
        runs_skipped=len(rows) - k,
    )


def run_comparison(n: int = 100, regimes: Iterable[str] = ("low", "high"),
                   gain_values: Iterable[float] = DEFAULT_GAINS, runs: int = 100,
                   master_seed: int = 0, workers: int = 1) -> ComparisonReport:
    """Solve all three schemes on ``runs`` random populations per cost regime.

    Results do not depend on ``workers``: runs are seeded by counter and
    gathered back in task order. Means use exactly rounded sums.
    """
    regimes = tuple(regimes)
    gains = tuple(float(g) for g in gain_values)
    if runs < 1 or not gains:
        raise ValueError("need runs >= 1 and at least one gain value")
    for r in regimes:
        if r not in REGIMES:
            raise ValueError(f"unknown cost regime {r!r}")
    tasks = [(n, reg, run, scenario_seed(master_seed, reg, run), gains) for reg in regimes for run in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_solve_run, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        chunks = [_solve_run(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    report = ComparisonReport(n, runs, master_seed, regimes, gains, records=records)
    for reg in regimes:
        for g in gains:
            for scheme in SCHEME_ORDER:
                report.cells.append(_aggregate(records, scheme.value, reg, g))
    return report


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def export_csv(report: ComparisonReport | Sequence[CellStats], path) -> None:
    cells = report.cells if isinstance(report, ComparisonReport) else report
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for c in cells:
                writer.writerow([_fmt(getattr(c, col)) for col in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[CellStats]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(CellStats(
                scheme=row["scheme"],
                cost_regime=row["cost_regime"],
                gain_coefficient=float(row["gain_coefficient"]),
                mean_active_aps=float(row["mean_active_aps"]),
                mean_mno_utility=float(row["mean_mno_utility"]),
                mean_offloaded_data=float(row["mean_offloaded_data"]),
                ci_halfwidth_utility=float(row["ci_halfwidth_utility"]),
                runs_ok=int(row["runs_ok"]),
                runs_skipped=int(row["runs_skipped"]),
            ))
    return out


def write_trace(report: ComparisonReport, path) -> None:
    """One JSON object per solved (run, gain, scheme)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in report.records:
            row = asdict(rec)
            row["offer"] = {"p": row.pop("p"), "B": row.pop("B")}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
