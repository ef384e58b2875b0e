"""MNO-side optimisation of the salary rate ``p`` and bonus pool ``B``."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .equilibrium import (
    EquilibriumReport,
    SuboptimalStructure,
    bonus_only_structure,
    homogeneous_level,
    ne_aggregate,
    ne_bonus_only,
    ne_homogeneous,
    ne_iterative,
    ne_salary,
    ne_spb_suboptimal,
    ne_two_ap,
    suboptimal_allocation,
    suboptimal_structure,
)
from .model import ApProfile, MnoParams, Offer, ProfileArrays, Scheme, as_arrays, mno_utility

log = logging.getLogger(__name__)


@dataclass
class MnoSolution:
    offer: Offer
    utility: float
    follower_report: EquilibriumReport
    scheme: Scheme = Scheme.SALARY_PLUS_BONUS
    search_trace: list[dict] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "offer": {"p": self.offer.salary_rate, "B": self.offer.bonus},
            "utility": self.utility,
            "equilibrium": self.follower_report.to_dict(),
        }


def _solution(offer: Offer, report: EquilibriumReport, params: MnoParams, scheme: Scheme,
              trace=None) -> MnoSolution:
    return MnoSolution(offer, mno_utility(offer, report.allocation, params, scheme), report, scheme, trace)


# ---------------------------------------------------------------------------
# salary only


def salary_objective(p: float, costs: np.ndarray, capacities: np.ndarray, lam: float) -> float:
    total = math.fsum(capacities[costs <= p])
    return lam * math.log1p(total) - p * total


def optimal_price_salary_only(profiles: Sequence[ApProfile], params: MnoParams,
                              early_stop: bool = True) -> MnoSolution:
    """Best salary rate by scanning the AP costs in ascending order.

    Only ``0`` and the costs themselves can be optimal. With ``early_stop``
    the scan ends at the first candidate with a negative objective; past that
    point the objective stays negative, so the result is unchanged.
    """
    arr = as_arrays(profiles)
    lam = params.gain_coefficient
    best_p, best_f = 0.0, 0.0
    trace = []
    for c in np.sort(arr.cost, kind="stable"):
        f = salary_objective(float(c), arr.cost, arr.capacity, lam)
        trace.append({"p": float(c), "B": 0.0, "utility": f, "status": "ok"})
        if f > best_f:
            best_p, best_f = float(c), f
        elif f < 0 and early_stop:
            break
    offer = Offer(best_p, 0.0)
    return _solution(offer, ne_salary(profiles, offer), params, Scheme.SALARY_ONLY, trace)


# ---------------------------------------------------------------------------
# homogeneous salary plus bonus


def _homogeneous_leader_utility(p: float, B: float, n: int, c: float, T: float, lam: float) -> float:
    total = n * homogeneous_level(n, c, T, Offer(p, B))
    return lam * math.log1p(total) - p * total - B


def optimal_bonus_homogeneous(p: float, n: int, c: float, w: float, T: float, params: MnoParams) -> float:
    """Optimal bonus for identical APs at a salary rate below their cost.

    Compares the best interior bonus (clamped to ``[0, cap]``) against the
    smallest bonus ``cap = a n^2 T / (n - 1)`` that drives every AP to its
    limit, and returns whichever gives the MNO more; ties go to the cap.
    """
    if not 0 <= p < c:
        raise ValueError(f"need 0 <= p < c, got p={p}, c={c} (p >= c is optimal with B = 0)")
    if n < 2:
        raise ValueError(f"need n >= 2 APs, got {n}")
    lam = params.gain_coefficient
    a = c - p
    k = (n - 1) / (a * n)  # total data per unit bonus below the cap
    cap = a * n * n * T / (n - 1)
    interior = lam / (1 + p * k) - 1 / k
    interior = min(max(interior, 0.0), cap)
    u_cap = _homogeneous_leader_utility(p, cap, n, c, T, lam)
    u_int = _homogeneous_leader_utility(p, interior, n, c, T, lam)
    return cap if u_cap >= u_int else interior


def optimal_homogeneous(n: int, c: float, w: float, T: float, params: MnoParams,
                        p_grid: int = 101) -> MnoSolution:
    if p_grid < 2:
        raise ValueError("p_grid needs at least 2 points")
    lam = params.gain_coefficient
    best = (c, 0.0, _homogeneous_leader_utility(c, 0.0, n, c, T, lam))
    trace = []
    for p in np.linspace(0.0, c, p_grid)[:-1]:
        B = optimal_bonus_homogeneous(float(p), n, c, w, T, params)
        u = _homogeneous_leader_utility(float(p), B, n, c, T, lam)
        trace.append({"p": float(p), "B": B, "utility": u, "status": "ok"})
        if u > best[2] or (u == best[2] and (p, B) < best[:2]):
            best = (float(p), B, u)
    trace.append({"p": c, "B": 0.0, "utility": _homogeneous_leader_utility(c, 0.0, n, c, T, lam),
                  "status": "ok"})
    offer = Offer(best[0], best[1])
    return _solution(offer, ne_homogeneous(n, c, w, T, offer), params, Scheme.SALARY_PLUS_BONUS, trace)


# ---------------------------------------------------------------------------
# two-dimensional grid search


def _solver(name: str, n: int) -> Callable[[Sequence[ApProfile], Offer], EquilibriumReport]:
    if name == "auto":
        name = "cases" if n == 2 else "algo3"
    if name in ("cases", "two-ap-cases"):
        if n != 2:
            raise ValueError(f"the two-AP case solver needs exactly 2 APs, got {n}")
        return ne_two_ap
    if name == "iterative":
        return lambda prof, off: ne_iterative(prof, off, Scheme.SALARY_PLUS_BONUS)
    if name == "aggregate":
        return lambda prof, off: ne_aggregate(prof, off, Scheme.SALARY_PLUS_BONUS)
    if name in ("algo3", "algorithm3"):
        return ne_spb_suboptimal
    raise ValueError(f"unknown equilibrium solver {name!r}")


def bonus_upper_bound(arr: ProfileArrays, p: float) -> float:
    """Bonus beyond which every AP already offloads at capacity at salary ``p``."""
    a = np.maximum(arr.cost - p, 0.0)
    wT = arr.quality * arr.capacity
    total = math.fsum(wT)
    others = total - wT
    with np.errstate(divide="ignore", invalid="ignore"):
        per_ap = np.where(a > 0, a / (arr.quality * others) * total**2, 0.0)
    return float(per_ap.max()) if len(per_ap) else 0.0


def grid_search_spb(profiles: Sequence[ApProfile], params: MnoParams, p_steps: int = 101,
                    B_steps: int = 101, ne_solver: str = "auto", refine: bool = True) -> MnoSolution:
    """Two-dimensional search over ``p in [0, max c]`` and ``B in [0, B_max(p)]``.

    An optional second pass re-grids the neighbourhood of the incumbent (one
    coarse cell either side) at the same resolution. Cells whose equilibrium
    solver does not converge are recorded as ``skipped`` and never compete.
    """
    if p_steps < 2 or B_steps < 2:
        raise ValueError("grid needs at least 2 steps per axis")
    arr = as_arrays(profiles)
    solve = _solver(ne_solver, arr.n)
    trace: list[dict] = []
    best: list = [None]

    def visit(p: float, B: float) -> None:
        offer = Offer(p, B)
        rep = solve(profiles, offer)
        if not rep.converged:
            log.info("grid cell p=%.6g B=%.6g skipped: equilibrium did not converge", p, B)
            trace.append({"p": p, "B": B, "utility": math.nan, "status": "skipped"})
            return
        u = mno_utility(offer, rep.allocation, params, Scheme.SALARY_PLUS_BONUS)
        trace.append({"p": p, "B": B, "utility": u, "status": "ok"})
        cur = best[0]
        if cur is None or u > cur[0] or (u == cur[0] and (p, B) < (cur[1].salary_rate, cur[1].bonus)):
            best[0] = (u, offer, rep)

    p_max = float(arr.cost.max())
    p_axis = np.linspace(0.0, p_max, p_steps)
    for p in p_axis:
        for B in np.linspace(0.0, bonus_upper_bound(arr, float(p)), B_steps):
            visit(float(p), float(B))

    if refine and best[0] is not None:
        _, inc, _ = best[0]
        dp = p_axis[1] - p_axis[0]
        dB = max(bonus_upper_bound(arr, max(inc.salary_rate - dp, 0.0)),
                 bonus_upper_bound(arr, inc.salary_rate)) / (B_steps - 1)
        for p in np.linspace(max(inc.salary_rate - dp, 0.0), min(inc.salary_rate + dp, p_max), p_steps):
            for B in np.linspace(max(inc.bonus - dB, 0.0), inc.bonus + dB, B_steps):
                visit(float(p), float(B))

    if best[0] is None:
        raise RuntimeError("no grid cell produced a converged equilibrium")
    u, offer, rep = best[0]
    return MnoSolution(offer, u, rep, Scheme.SALARY_PLUS_BONUS, trace)


# ---------------------------------------------------------------------------
# bonus only


def optimal_bonus_only(profiles: Sequence[ApProfile], params: MnoParams) -> MnoSolution:
    """Closed-form optimal bonus: ``B* = max(0, lambda - 1 / sum(H))``.

    The admitted set and the per-unit-bonus coefficients ``H`` do not depend
    on ``B``, so the leader objective is ``lambda ln(1 + B sum(H)) - B``.
    """
    st = bonus_only_structure(as_arrays(profiles))
    B = max(0.0, params.gain_coefficient - 1.0 / st.H_sum)
    offer = Offer(0.0, B)
    return _solution(offer, ne_bonus_only(profiles, B), params, Scheme.BONUS_ONLY)


# ---------------------------------------------------------------------------
# salary plus bonus, heuristic follower profile


def _leader_value(total, p: float, B, lam: float):
    return lam * np.log1p(total) - p * total - B


def _bonus_candidates_shared(st: SuboptimalStructure, arr: ProfileArrays, p: float, lam: float) -> np.ndarray:
    """Candidate bonuses for the ``shared`` branch.

    Total data is ``base + sum(min(h_i B, T_i))``: piecewise linear and
    concave in ``B``. On each linear piece the leader objective is concave,
    so the optimum is a breakpoint or a piece's clamped stationary point.
    """
    h = st.h
    T = arr.capacity[st.members]
    base = math.fsum(arr.capacity[st.salaried])
    with np.errstate(divide="ignore"):
        brk = np.where(h > 0, T / h, np.inf)
    order = np.argsort(brk, kind="stable")
    edges = np.concatenate(([0.0], brk[order]))
    edges = edges[np.isfinite(edges)]
    slope_left = math.fsum(h)
    capped = base
    cands = [0.0]
    for k in range(len(edges)):
        lo = edges[k]
        hi = edges[k + 1] if k + 1 < len(edges) else math.inf
        if slope_left > 0:
            B = ((lam * slope_left / (p * slope_left + 1)) - 1 - capped) / slope_left
            cands.append(min(max(B, lo), hi) if math.isfinite(hi) else max(B, lo))
        cands.append(lo)
        if k + 1 < len(edges):
            i = order[k]
            slope_left -= h[i]
            capped += T[i]
    return np.asarray(cands)


def _bonus_candidates_leftover(st: SuboptimalStructure, arr: ProfileArrays, p: float, lam: float) -> np.ndarray:
    if st.leftover is None or st.Z <= 0:
        return np.array([0.0])
    l = st.leftover
    a, w, T, Z = arr.cost[l] - p, arr.quality[l], arr.capacity[l], st.Z
    B0 = a * Z / w
    B1 = a * (Z + w * T) ** 2 / (w * Z)
    # with s = sqrt(B) the leftover amount is k s - Z / w on [B0, B1]
    k = math.sqrt(Z / (a * w))
    C = 1 + math.fsum(arr.capacity[st.salaried]) - Z / w
    qa, qb, qc = 2 * k, p * k * k + 2 * C, p * k * C - lam * k
    disc = qb * qb - 4 * qa * qc
    cands = [0.0, B0, B1]
    if disc >= 0:
        s = (-qb + math.sqrt(disc)) / (2 * qa)
        if s > 0:
            cands.append(min(max(s * s, B0), B1))
    return np.asarray(cands)


def _best_bonus_at(arr: ProfileArrays, p: float, lam: float) -> tuple[float, float, SuboptimalStructure]:
    st = suboptimal_structure(arr, p)
    if st.branch == "shared":
        cands = _bonus_candidates_shared(st, arr, p, lam)
    else:
        cands = _bonus_candidates_leftover(st, arr, p, lam)
    cands = np.unique(cands)
    best_B, best_u = 0.0, -math.inf
    for B in cands:
        d = suboptimal_allocation(st, arr, p, float(B))
        u = lam * math.log1p(math.fsum(d)) - p * math.fsum(d) - B
        if u > best_u:
            best_B, best_u = float(B), u
    return best_B, best_u, st


def optimal_spb_suboptimal(profiles: Sequence[ApProfile], params: MnoParams, p_grid: int = 101,
                           include_costs: bool = True) -> MnoSolution:
    """Leader search on top of the heuristic salary-plus-bonus follower profile.

    Salary rates come from uniform grids over ``[min c, max c]`` and
    ``[0, max c]`` (the second covers rates just below the cheapest AP, where
    identical APs have their optimum) and, with ``include_costs``, every AP
    cost, which keeps the salary-only optimum in the candidate set. For each rate the best bonus is found
    exactly; see :func:`_bonus_candidates_shared`.
    """
    if p_grid < 2:
        raise ValueError("p_grid needs at least 2 points")
    arr = as_arrays(profiles)
    lam = params.gain_coefficient
    ps = np.concatenate((np.linspace(arr.cost.min(), arr.cost.max(), p_grid),
                         np.linspace(0.0, arr.cost.max(), p_grid)))
    extra = []
    if include_costs:
        extra.extend(arr.cost.tolist())
    ps = np.unique(np.concatenate((ps, extra)))
    trace = []
    best = None
    for p in ps:
        B, u, _ = _best_bonus_at(arr, float(p), lam)
        trace.append({"p": float(p), "B": B, "utility": u, "status": "ok"})
        if best is None or u > best[2]:
            best = (float(p), B, u)
    offer = Offer(best[0], best[1])
    rep = ne_spb_suboptimal(profiles, offer)
    return _solution(offer, rep, params, Scheme.SALARY_PLUS_BONUS, trace)
