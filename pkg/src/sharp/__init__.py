"""Stochastic hierarchical abstraction-guided robot planning toolkit.

Builds reusable navigation options from an occupancy grid: solution-density
critical regions, a geodesic region Voronoi partition, option endpoints with
guide paths and dense pseudo-rewards, policies trained by an in-package
actor-critic learner, and abstract search that composes them into an
executable policy automaton for noisy continuous navigation.
"""

from .world import (Configuration, HolonomicAction, Kinematics, OccupancyWorld,
                    UnicycleAction, collision, sample_free, step)

__all__ = [
    "Configuration",
    "HolonomicAction",
    "Kinematics",
    "OccupancyWorld",
    "UnicycleAction",
    "collision",
    "sample_free",
    "step",
]
