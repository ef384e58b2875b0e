"""Follower subgame equilibria and deviation-based verification.

Solvers
-------
``ne_homogeneous``      closed form for identical APs
``ne_two_ap``           case-by-case closed form for two APs with distinct costs
``ne_iterative``        damped best-response iteration (any scheme, any N)
``ne_aggregate``        exact solve through the weighted-data aggregate
``ne_bonus_only``       sorted admission + closed form for the bonus-only game
``ne_spb_suboptimal``   fast heuristic profile for large salary-plus-bonus games
``ne_salary``           threshold profile of the salary-only game
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .model import ApProfile, Offer, ProfileArrays, Scheme, ap_utilities, as_arrays, homogeneous_profiles
from .response import best_response_bonus_all, best_response_salary_all, best_response_spb_all

log = logging.getLogger(__name__)

# Adaptive damping: sweeps are grouped into windows of about 2 / alpha, the
# natural time scale of the damped map, and the step is halved whenever a
# window's peak residual is not at most half of the previous window's.
_MIN_WINDOW = 50
_CONTRACTION = 0.5
_MIN_DAMPING = 1e-4


def _window(alpha: float) -> int:
    return max(_MIN_WINDOW, math.ceil(2.0 / alpha))

METHODS = (
    "closed-form-homogeneous",
    "two-ap-cases",
    "iterative",
    "aggregate",
    "algorithm2",
    "algorithm3",
    "salary-threshold",
)


@dataclass
class EquilibriumReport:
    allocation: np.ndarray
    active_set: tuple[int, ...]
    per_ap_utility: np.ndarray
    converged: bool
    iterations: int
    method: str
    scheme: Scheme = Scheme.SALARY_PLUS_BONUS
    notes: dict = field(default_factory=dict)

    @property
    def total_data(self) -> float:
        return math.fsum(self.allocation)

    def to_dict(self) -> dict:
        return {
            "allocation": [float(x) for x in self.allocation],
            "active_set": list(self.active_set),
            "per_ap_utility": [float(x) for x in self.per_ap_utility],
            "converged": self.converged,
            "iterations": self.iterations,
            "method": self.method,
            "scheme": self.scheme.value,
        }


def make_report(d, offer: Offer, profiles: Sequence[ApProfile], scheme: Scheme, *,
                method: str, converged: bool = True, iterations: int = 0, **notes) -> EquilibriumReport:
    d = np.asarray(d, dtype=float)
    scheme = Scheme.parse(scheme)
    return EquilibriumReport(
        allocation=d,
        active_set=tuple(int(i) for i in np.flatnonzero(d > 0)),
        per_ap_utility=ap_utilities(d, offer, profiles, scheme),
        converged=converged,
        iterations=iterations,
        method=method,
        scheme=scheme,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# closed forms


def homogeneous_level(n: int, cost: float, capacity: float, offer: Offer) -> float:
    a = cost - offer.salary_rate
    if a <= 0:
        return capacity
    if offer.bonus / a < n * n * capacity / (n - 1):
        return offer.bonus * (n - 1) / (a * n * n)
    return capacity


def ne_homogeneous(n: int, c: float, w: float, T: float, offer: Offer) -> EquilibriumReport:
    if n < 2:
        raise ValueError(f"homogeneous equilibrium needs n >= 2 APs, got {n}")
    profiles = homogeneous_profiles(n, c, w, T)
    d = np.full(n, homogeneous_level(n, c, T, offer))
    return make_report(d, offer, profiles, Scheme.SALARY_PLUS_BONUS, method="closed-form-homogeneous")


def _two_ap_ordered(w1, w2, T1, T2, c1, c2, p, B) -> tuple[float, float]:
    """Two-AP equilibrium assuming c1 < c2."""
    if p >= c2:
        return T1, T2
    a1, a2 = c1 - p, c2 - p
    full = (w1 * T1 + w2 * T2) ** 2 / (w1 * w2)
    if p >= c1:
        if B < a2 * w1 * T1 / w2:
            return T1, 0.0
        if B < a2 * full / T1:
            return T1, math.sqrt(B * w1 * T1 / (w2 * a2)) - w1 * T1 / w2
        return T1, T2
    mix = (w1 * a2 + w2 * a1) ** 2 / (w1 * w2)
    interior = (B * w1 * w2 * a2 / (w1 * a2 + w2 * a1) ** 2,
                B * w1 * w2 * a1 / (w1 * a2 + w2 * a1) ** 2)
    if a1 * T1 <= a2 * T2:
        # AP 1 reaches its limit first.
        if B < mix * T1 / a2:
            return interior
        if B < a2 * full / T1:
            return T1, math.sqrt(B * w1 * T1 / (w2 * a2)) - w1 * T1 / w2
        return T1, T2
    if B < mix * T2 / a1:
        return interior
    if B < a1 * full / T2:
        return math.sqrt(B * w2 * T2 / (w1 * a1)) - w2 * T2 / w1, T2
    return T1, T2


def ne_two_ap(profiles: Sequence[ApProfile], offer: Offer) -> EquilibriumReport:
    """Salary-plus-bonus equilibrium of a two-AP game from the four cost/price cases.

    Equal costs (or a zero-capacity AP) fall outside the case analysis and are
    routed to :func:`ne_iterative`.
    """
    if len(profiles) != 2:
        raise ValueError(f"two-AP closed form needs exactly 2 APs, got {len(profiles)}")
    x, y = profiles
    if x.cost == y.cost or min(x.capacity, y.capacity) <= 0:
        return ne_iterative(profiles, offer, Scheme.SALARY_PLUS_BONUS)
    lo, hi = (x, y) if x.cost < y.cost else (y, x)
    d_lo, d_hi = _two_ap_ordered(lo.quality, hi.quality, lo.capacity, hi.capacity,
                                 lo.cost, hi.cost, offer.salary_rate, offer.bonus)
    d = np.empty(2)
    d[lo.id], d[hi.id] = d_lo, d_hi
    return make_report(d, offer, profiles, Scheme.SALARY_PLUS_BONUS, method="two-ap-cases")


def ne_salary(profiles: Sequence[ApProfile], offer: Offer) -> EquilibriumReport:
    d = best_response_salary_all(offer, as_arrays(profiles))
    return make_report(d, Offer(offer.salary_rate, 0.0), profiles, Scheme.SALARY_ONLY,
                       method="salary-threshold")


# ---------------------------------------------------------------------------
# iterative and aggregate solvers


def _best_response_all(scheme: Scheme, d: np.ndarray, offer: Offer, arr: ProfileArrays) -> np.ndarray:
    if scheme is Scheme.SALARY_PLUS_BONUS:
        return best_response_spb_all(d, offer, arr)
    if scheme is Scheme.SALARY_ONLY:
        return best_response_salary_all(offer, arr)
    return best_response_bonus_all(d, offer.bonus, arr)


def ne_iterative(profiles: Sequence[ApProfile], offer: Offer, scheme: Scheme = Scheme.SALARY_PLUS_BONUS,
                 tol: float = 1e-8, max_iter: int = 100_000, damping: float = 0.5,
                 initial=None, adaptive: bool = True) -> EquilibriumReport:
    """Damped simultaneous best-response iteration.

    Starts from every AP at capacity unless ``initial`` is given (the
    all-zero profile is a spurious fixed point of the bonus responses).
    Stops when ``max |BR(d) - d| < tol``; the returned allocation is that
    last best response, so inactive APs come out exactly at zero.

    Plain damping 0.5 orbits without converging once two APs' weighted volumes
    differ by more than roughly 14x; with ``adaptive`` the step is halved until
    the residual contracts again (see ``_window``). Very lopsided games need a
    step near ``2 / (1 + mu**2)`` with ``mu`` the volume mismatch, and hence
    many sweeps, which is why ``max_iter`` is generous.
    """
    scheme = Scheme.parse(scheme)
    if len(profiles) < 2:
        raise ValueError("iterative equilibrium needs N >= 2 APs")
    if not tol > 0 or not 0 < damping <= 1:
        raise ValueError(f"need tol > 0 and 0 < damping <= 1, got tol={tol}, damping={damping}")
    arr = as_arrays(profiles)
    d = arr.capacity.copy() if initial is None else np.array(initial, dtype=float)
    alpha = damping
    res = math.inf
    peak = prev_peak = math.inf
    window_end = _window(alpha)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        br = _best_response_all(scheme, d, offer, arr)
        res = float(np.max(np.abs(br - d)))
        if res < tol:
            d = br
            converged = True
            break
        peak = res if peak is math.inf else max(peak, res)
        if it >= window_end:
            if adaptive and peak > _CONTRACTION * prev_peak:
                alpha = max(alpha * 0.5, _MIN_DAMPING)
            prev_peak, peak = peak, math.inf
            window_end = it + _window(alpha)
        d = (1 - alpha) * d + alpha * br
    if not converged:
        log.warning("best-response iteration stopped after %d sweeps (residual %.3g)", it, res)
    return make_report(d, offer, profiles, scheme, method="iterative", converged=converged,
                       iterations=it, final_damping=alpha)


def ne_aggregate(profiles: Sequence[ApProfile], offer: Offer,
                 scheme: Scheme = Scheme.SALARY_PLUS_BONUS) -> EquilibriumReport:
    """Exact equilibrium via the weighted aggregate ``S = sum_j w_j d_j``.

    At an equilibrium each AP's first-order condition pins its weighted volume
    as a function of ``S`` alone: ``w_i d_i = clip(S - k_i S**2, 0, w_i T_i)``
    with ``k_i = a_i / (w_i B)``. ``S`` is then the unique root of a scalar
    equation whose ratio form ``g(S) / S`` is strictly decreasing, so a
    bracketing root finder is enough.
    """
    scheme = Scheme.parse(scheme)
    arr = as_arrays(profiles)
    if scheme is Scheme.SALARY_ONLY:
        return ne_salary(profiles, offer)
    w, B = arr.quality, offer.bonus
    if scheme is Scheme.SALARY_PLUS_BONUS:
        marg = arr.cost - offer.salary_rate
        cap = w * arr.capacity
    else:
        marg = arr.cost + arr.penalty
        cap = np.full(arr.n, np.inf)
    fixed = marg <= 0
    var = ~fixed & (cap > 0) & np.isfinite(marg)
    base = math.fsum(cap[fixed])
    d = np.where(fixed, arr.capacity, 0.0)
    if B <= 0 or not var.any():
        return make_report(d, offer, profiles, scheme, method="aggregate")
    k = marg[var] / (w[var] * B)
    cv = cap[var]

    def ratio(S: float) -> float:
        return base / S + math.fsum(np.minimum(np.maximum(1.0 - k * S, 0.0), cv / S)) - 1.0

    # past either bound every term of ratio() has hit zero or its cap
    hi = base + math.fsum(cv)
    if base == 0:
        hi = min(hi, float(1.0 / k.min()))
    lo = hi * 1e-12
    if ratio(lo) <= 0:
        # a lone variable AP facing nobody: no interior equilibrium exists
        return make_report(d, offer, profiles, scheme, method="aggregate")
    if ratio(hi) >= 0:
        S = hi
    else:
        S = brentq(ratio, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    x = np.minimum(np.maximum(S - k * S * S, 0.0), cv)
    d[var] = x / w[var]
    return make_report(d, offer, profiles, scheme, method="aggregate", aggregate=S)


# ---------------------------------------------------------------------------
# sorted-admission algorithms


def _admit(ratios: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Grow the active set along ``order`` while the admission test passes.

    The first two entries are always admitted; entry ``i`` joins while
    ``r_i < (sum_S r + r_i) / |S|``.
    """
    members = list(order[:2])
    total = math.fsum(ratios[members])
    for idx in order[2:]:
        r = ratios[idx]
        if r < (total + r) / len(members):
            members.append(idx)
            total += r
        else:
            break
    return np.array(members, dtype=int)


def _shared_coefficients(ratios: np.ndarray, w: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Per-unit-bonus allocation ``d_i / B`` of the admitted set."""
    m = len(members)
    R = math.fsum(ratios[members])
    rm = ratios[members]
    return (m - 1) / (w[members] * R) * (1.0 - rm * (m - 1) / R)


@dataclass(frozen=True)
class BonusOnlyStructure:
    """Bonus-independent part of the bonus-only equilibrium: ``d = H * B`` on ``active``."""

    active: np.ndarray
    H: np.ndarray

    @property
    def H_sum(self) -> float:
        return math.fsum(self.H)


def bonus_only_structure(arr: ProfileArrays) -> BonusOnlyStructure:
    if arr.n < 2:
        raise ValueError(f"bonus-only equilibrium needs at least two APs, got {arr.n}")
    ratios = (arr.cost + arr.penalty) / arr.quality
    order = np.argsort(ratios, kind="stable")
    members = _admit(ratios, order)
    return BonusOnlyStructure(active=members, H=_shared_coefficients(ratios, arr.quality, members))


def ne_bonus_only(profiles: Sequence[ApProfile], B: float) -> EquilibriumReport:
    if B < 0:
        raise ValueError(f"bonus must be >= 0, got {B}")
    st = bonus_only_structure(as_arrays(profiles))
    d = np.zeros(len(profiles))
    d[st.active] = st.H * B
    return make_report(d, Offer(0.0, B), profiles, Scheme.BONUS_ONLY, method="algorithm2",
                       admitted=tuple(int(i) for i in st.active))


@dataclass(frozen=True)
class SuboptimalStructure:
    """Bonus-independent part of the heuristic salary-plus-bonus profile.

    ``salaried`` APs sit at capacity. In the ``leftover`` branch a single
    remaining AP answers the salaried APs' weighted volume ``Z``; in the
    ``shared`` branch the admitted APs get ``min(h_i B, T_i)``.
    """

    salaried: np.ndarray
    branch: str
    leftover: int | None = None
    Z: float = 0.0
    members: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))


def suboptimal_structure(arr: ProfileArrays, p: float) -> SuboptimalStructure:
    # a_i <= 0 counts as salaried, the same tie rule as the single-AP best response
    salaried = np.flatnonzero(arr.cost <= p)
    rest = np.flatnonzero(arr.cost > p)
    if len(rest) <= 1:
        Z = math.fsum(arr.quality[salaried] * arr.capacity[salaried])
        return SuboptimalStructure(salaried, "leftover", int(rest[0]) if len(rest) else None, Z)
    ratios = np.zeros(arr.n)
    ratios[rest] = (arr.cost[rest] - p) / arr.quality[rest]
    order = rest[np.argsort(ratios[rest], kind="stable")]
    members = _admit(ratios, order)
    return SuboptimalStructure(salaried, "shared", members=members,
                               h=_shared_coefficients(ratios, arr.quality, members))


def leftover_amount(B: float, Z: float, a: float, w: float, T: float) -> float:
    if Z <= 0:
        return 0.0
    return min(max(math.sqrt(B * Z / (a * w)) - Z / w, 0.0), T)


def suboptimal_allocation(st: SuboptimalStructure, arr: ProfileArrays, p: float, B: float) -> np.ndarray:
    d = np.zeros(arr.n)
    d[st.salaried] = arr.capacity[st.salaried]
    if st.branch == "leftover":
        if st.leftover is not None:
            l = st.leftover
            d[l] = leftover_amount(B, st.Z, arr.cost[l] - p, arr.quality[l], arr.capacity[l])
    else:
        d[st.members] = np.minimum(st.h * B, arr.capacity[st.members])
    return d


def ne_spb_suboptimal(profiles: Sequence[ApProfile], offer: Offer, recompute: bool = False) -> EquilibriumReport:
    """Heuristic large-game profile for the salary-plus-bonus scheme.

    APs whose cost does not exceed the salary go to capacity. The rest are
    admitted in order of ``(c_i - p) / w_i`` and share the bonus as in the
    bonus-only game (salaried APs' volume is ignored there), and any AP whose
    share would exceed its capacity is pinned at capacity. By default this is
    one pass; ``recompute=True`` re-solves the shared set after each pinning.
    The output is not an exact equilibrium.
    """
    arr = as_arrays(profiles)
    p, B = offer.salary_rate, offer.bonus
    st = suboptimal_structure(arr, p)
    d = suboptimal_allocation(st, arr, p, B)
    if recompute and st.branch == "shared":
        members = st.members
        pinned = set(int(i) for i in st.salaried)
        ratios = (arr.cost - p) / arr.quality
        while True:
            over = members[_over_capacity(ratios, arr, members, B)]
            if len(over) == 0:
                break
            pinned.update(int(i) for i in over)
            members = np.array([i for i in members if i not in pinned], dtype=int)
            d[over] = arr.capacity[over]
            if len(members) <= 1:
                if len(members) == 1:
                    l = int(members[0])
                    idx = np.array(sorted(pinned), dtype=int)
                    Z = math.fsum(arr.quality[idx] * arr.capacity[idx])
                    d[l] = leftover_amount(B, Z, arr.cost[l] - p, arr.quality[l], arr.capacity[l])
                break
            d[members] = _shared_coefficients(ratios, arr.quality, members) * B
    return make_report(d, offer, profiles, Scheme.SALARY_PLUS_BONUS, method="algorithm3",
                       branch=st.branch)


def _over_capacity(ratios: np.ndarray, arr: ProfileArrays, members: np.ndarray, B: float) -> np.ndarray:
    h = _shared_coefficients(ratios, arr.quality, members)
    return h * B > arr.capacity[members]


# ---------------------------------------------------------------------------
# verification


class Verification(NamedTuple):
    is_ne: bool
    max_gain: float
    worst_ap: int


def deviation_gains(d, offer: Offer, profiles: Sequence[ApProfile], scheme: Scheme,
                    grid_points: int = 1001) -> np.ndarray:
    """Largest utility improvement each AP finds on a grid of unilateral deviations."""
    scheme = Scheme.parse(scheme)
    arr = as_arrays(profiles)
    d = np.asarray(d, dtype=float)
    current = ap_utilities(d, offer, profiles, scheme)
    wd = arr.quality * d
    total = math.fsum(wd)
    p = 0.0 if scheme is Scheme.BONUS_ONLY else offer.salary_rate
    B = 0.0 if scheme is Scheme.SALARY_ONLY else offer.bonus
    gains = np.empty(arr.n)
    for i in range(arr.n):
        T = arr.capacity[i]
        w = arr.quality[i]
        if scheme is Scheme.BONUS_ONLY:
            upper = max(10.0 * T, 2.0 * d[i]) if np.isfinite(T) else 2.0 * d[i] + 1.0
        else:
            upper = T
        g = np.linspace(0.0, upper, grid_points)
        z = max(total - wd[i], 0.0)
        den = z + w * g
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(den > 0, w * g / den * B, 0.0)
        u = p * g + share - arr.cost[i] * g
        if scheme is Scheme.BONUS_ONLY:
            u = u - arr.penalty[i] * (g - T)
        gains[i] = float(np.max(u)) - current[i]
    return gains


def verify_ne(report_or_allocation, offer: Offer, profiles: Sequence[ApProfile],
              scheme: Scheme = Scheme.SALARY_PLUS_BONUS, grid_points: int = 1001,
              threshold: float = 1e-6) -> Verification:
    if grid_points < 100:
        raise ValueError("verification grid needs at least 100 points")
    d = getattr(report_or_allocation, "allocation", report_or_allocation)
    gains = deviation_gains(d, offer, profiles, scheme, grid_points)
    worst = int(np.argmax(gains))
    max_gain = float(gains[worst])
    return Verification(max_gain <= threshold, max_gain, worst)
