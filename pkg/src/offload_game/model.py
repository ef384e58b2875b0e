"""Domain types and payoff functions for the MNO / WiFi-AP offloading game.

Money and data are plain floats. An allocation is a 1-D numpy array ``d``
indexed by ``ApProfile.id``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class Scheme(enum.Enum):
    SALARY_PLUS_BONUS = "spb"
    SALARY_ONLY = "salary"
    BONUS_ONLY = "bonus"

    @classmethod
    def parse(cls, value: "str | Scheme") -> "Scheme":
        if isinstance(value, cls):
            return value
        aliases = {
            "spb": cls.SALARY_PLUS_BONUS,
            "salary-plus-bonus": cls.SALARY_PLUS_BONUS,
            "salary": cls.SALARY_ONLY,
            "salary-only": cls.SALARY_ONLY,
            "bonus": cls.BONUS_ONLY,
            "bonus-only": cls.BONUS_ONLY,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown scheme {value!r}") from None


@dataclass(frozen=True)
class ApProfile:
    """One WiFi access point.

    ``capacity`` is the leftover data quota after home users are served.
    ``penalty`` is only used by the bonus-only scheme; when omitted it is set
    to ``1 / capacity`` (infinite for a zero-capacity AP).
    """

    id: int
    cost: float
    quality: float
    capacity: float
    penalty: float | None = None

    def __post_init__(self) -> None:
        if not self.cost > 0:
            raise ValueError(f"AP {self.id}: cost must be > 0, got {self.cost}")
        if not self.quality > 0:
            raise ValueError(f"AP {self.id}: quality must be > 0, got {self.quality}")
        if not self.capacity >= 0:
            raise ValueError(f"AP {self.id}: capacity must be >= 0, got {self.capacity}")
        if self.penalty is None:
            pen = 1.0 / self.capacity if self.capacity > 0 else math.inf
            object.__setattr__(self, "penalty", pen)
        elif not self.penalty >= 0:
            raise ValueError(f"AP {self.id}: penalty must be >= 0, got {self.penalty}")


@dataclass(frozen=True)
class Offer:
    salary_rate: float = 0.0
    bonus: float = 0.0

    def __post_init__(self) -> None:
        if not (self.salary_rate >= 0 and self.bonus >= 0):
            raise ValueError(f"offer terms must be >= 0, got p={self.salary_rate}, B={self.bonus}")

    @property
    def p(self) -> float:
        return self.salary_rate

    @property
    def B(self) -> float:
        return self.bonus


@dataclass(frozen=True)
class MnoParams:
    gain_coefficient: float

    def __post_init__(self) -> None:
        if not self.gain_coefficient > 0:
            raise ValueError(f"gain_coefficient must be > 0, got {self.gain_coefficient}")


@dataclass(frozen=True)
class ProfileArrays:
    """Column view of a profile list, used by the vectorised solvers."""

    cost: np.ndarray
    quality: np.ndarray
    capacity: np.ndarray
    penalty: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.cost)


def as_arrays(profiles: Sequence[ApProfile]) -> ProfileArrays:
    for pos, ap in enumerate(profiles):
        if ap.id != pos:
            raise ValueError(f"profile at position {pos} has id {ap.id}; ids must be 0..N-1 in order")
    return ProfileArrays(
        cost=np.array([ap.cost for ap in profiles], dtype=float),
        quality=np.array([ap.quality for ap in profiles], dtype=float),
        capacity=np.array([ap.capacity for ap in profiles], dtype=float),
        penalty=np.array([ap.penalty for ap in profiles], dtype=float),
    )


def make_profiles(costs, qualities, capacities, penalties=None) -> list[ApProfile]:
    """Build a profile list from parallel sequences (penalties optional)."""
    costs = list(costs)
    if penalties is None:
        penalties = [None] * len(costs)
    return [
        ApProfile(i, float(c), float(w), float(t), None if pen is None else float(pen))
        for i, (c, w, t, pen) in enumerate(zip(costs, qualities, capacities, penalties, strict=True))
    ]


def homogeneous_profiles(n: int, cost: float, quality: float, capacity: float) -> list[ApProfile]:
    return make_profiles([cost] * n, [quality] * n, [capacity] * n)


def bonus_share(B: float, profiles: Sequence[ApProfile], d, i: int) -> float:
    """Quality-weighted proportional share of the bonus pool paid to AP ``i``.

    Zero for everyone when nobody offloads anything.
    """
    d = np.asarray(d, dtype=float)
    w = np.array([ap.quality for ap in profiles])
    total = math.fsum(w * d)
    if total <= 0:
        return 0.0
    return w[i] * d[i] / total * B


def bonus_shares(B: float, w: np.ndarray, d: np.ndarray) -> np.ndarray:
    wd = w * d
    total = math.fsum(wd)
    if total <= 0:
        return np.zeros_like(wd)
    return wd / total * B


def ap_utilities(d, offer: Offer, profiles: Sequence[ApProfile], scheme: Scheme) -> np.ndarray:
    """Utility of every AP at allocation ``d``."""
    arr = as_arrays(profiles)
    d = np.asarray(d, dtype=float)
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.SALARY_ONLY:
        return (offer.salary_rate - arr.cost) * d
    bonus = bonus_shares(offer.bonus, arr.quality, d)
    if scheme is Scheme.SALARY_PLUS_BONUS:
        return offer.salary_rate * d + bonus - arr.cost * d
    # Penalised bonus-only objective; slack below capacity is rewarded.
    slack = d - arr.capacity
    with np.errstate(invalid="ignore"):
        penalty = np.where(slack == 0, 0.0, arr.penalty * slack)
    return bonus - arr.cost * d - penalty


def ap_utility(i: int, d, offer: Offer, profiles: Sequence[ApProfile], scheme: Scheme) -> float:
    return float(ap_utilities(d, offer, profiles, scheme)[i])


def offloading_gain(d) -> float:
    """Natural-log offloading gain ``ln(1 + sum(d))``."""
    return math.log1p(math.fsum(np.asarray(d, dtype=float)))


def mno_utility(offer: Offer, d, params: MnoParams, scheme: Scheme = Scheme.SALARY_PLUS_BONUS) -> float:
    scheme = Scheme.parse(scheme)
    total = math.fsum(np.asarray(d, dtype=float))
    p = 0.0 if scheme is Scheme.BONUS_ONLY else offer.salary_rate
    B = 0.0 if scheme is Scheme.SALARY_ONLY else offer.bonus
    return params.gain_coefficient * math.log1p(total) - p * total - B
