"""Follower best responses for the three incentive schemes.

The scalar functions take the full allocation ``d`` and ignore ``d[i]``; only
the other APs' entries matter. Vectorised ``*_all`` variants return every
AP's best response to the same profile at once and back the iterative
equilibrium solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ApProfile, Offer, ProfileArrays


@dataclass(frozen=True)
class ResponseContext:
    """Net marginal cost ``a = c_i - p`` and the others' weighted data ``z``."""

    a: float
    z: float

    @classmethod
    def of(cls, i: int, d, offer: Offer, profiles: Sequence[ApProfile]) -> "ResponseContext":
        d = np.asarray(d, dtype=float)
        z = math.fsum(ap.quality * d[j] for j, ap in enumerate(profiles) if j != i)
        return cls(a=profiles[i].cost - offer.salary_rate, z=max(z, 0.0))


def interior_point(B: float, z: float, a: float, w: float) -> float:
    """Stationary point ``sqrt(B z / (a w)) - z / w`` of the bonus-share objective.

    Requires ``a > 0``. Returns 0 when ``z == 0``: with nobody else offloading
    the supremum ``B`` is approached as ``d -> 0+`` but never attained.
    """
    if z <= 0:
        return 0.0
    return math.sqrt(B * z / (a * w)) - z / w


def best_response_spb(i: int, d, offer: Offer, profiles: Sequence[ApProfile]) -> float:
    ap = profiles[i]
    ctx = ResponseContext.of(i, d, offer, profiles)
    if ctx.a <= 0:
        return ap.capacity
    x = interior_point(offer.bonus, ctx.z, ctx.a, ap.quality)
    return min(max(x, 0.0), ap.capacity)


def best_response_salary(i: int, offer: Offer, profiles: Sequence[ApProfile]) -> float:
    ap = profiles[i]
    return ap.capacity if offer.salary_rate >= ap.cost else 0.0


def best_response_bonus(i: int, d, B: float, profiles: Sequence[ApProfile]) -> float:
    ap = profiles[i]
    ctx = ResponseContext.of(i, d, Offer(0.0, B), profiles)
    return max(interior_point(B, ctx.z, ap.cost + ap.penalty, ap.quality), 0.0)


def _others_weighted(w: np.ndarray, d: np.ndarray) -> np.ndarray:
    wd = w * d
    return np.maximum(math.fsum(wd) - wd, 0.0)


def _interior_all(B: float, z: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    ok = z > 0
    out[ok] = np.sqrt(B * z[ok] / (a[ok] * w[ok])) - z[ok] / w[ok]
    return out


def best_response_spb_all(d: np.ndarray, offer: Offer, arr: ProfileArrays) -> np.ndarray:
    a = arr.cost - offer.salary_rate
    z = _others_weighted(arr.quality, d)
    br = arr.capacity.copy()
    pos = a > 0
    x = _interior_all(offer.bonus, z[pos], a[pos], arr.quality[pos])
    br[pos] = np.clip(x, 0.0, arr.capacity[pos])
    return br


def best_response_salary_all(offer: Offer, arr: ProfileArrays) -> np.ndarray:
    return np.where(offer.salary_rate >= arr.cost, arr.capacity, 0.0)


def best_response_bonus_all(d: np.ndarray, B: float, arr: ProfileArrays) -> np.ndarray:
    z = _others_weighted(arr.quality, d)
    return np.maximum(_interior_all(B, z, arr.cost + arr.penalty, arr.quality), 0.0)
