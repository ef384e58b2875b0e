"""Solver for the MNO / WiFi-AP data offloading incentive game."""

from .equilibrium import (
    EquilibriumReport,
    ne_aggregate,
    ne_bonus_only,
    ne_homogeneous,
    ne_iterative,
    ne_salary,
    ne_spb_suboptimal,
    ne_two_ap,
    verify_ne,
)
from .leader import (
    MnoSolution,
    grid_search_spb,
    optimal_bonus_homogeneous,
    optimal_bonus_only,
    optimal_homogeneous,
    optimal_price_salary_only,
    optimal_spb_suboptimal,
)
from .model import ApProfile, MnoParams, Offer, Scheme, make_profiles
from .sim import run_comparison

__all__ = [
    "ApProfile", "EquilibriumReport", "MnoParams", "MnoSolution", "Offer", "Scheme",
    "grid_search_spb", "make_profiles", "ne_aggregate", "ne_bonus_only", "ne_homogeneous",
    "ne_iterative", "ne_salary", "ne_spb_suboptimal", "ne_two_ap", "optimal_bonus_homogeneous",
    "optimal_bonus_only", "optimal_homogeneous", "optimal_price_salary_only",
    "optimal_spb_suboptimal", "run_comparison", "verify_ne",
]
