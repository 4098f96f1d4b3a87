"""RIS-assisted multi-antenna coded caching toolkit.

Subpackages map onto the pipeline: random channels (:mod:`channel`), RIS
phase optimisation for path nulling (:mod:`nulling`), antenna grouping under
a RIS budget (:mod:`grouping`), cache array construction (:mod:`pda`) and an
end-to-end delivery simulator (:mod:`delivery`).
"""

from riscache.channel import ChannelRealization, draw_channel
from riscache.grouping import GroupingPlan, GroupingSolution, optimal_grouping
from riscache.nulling import (
    ConvergenceTrace,
    NullingProblem,
    PathSet,
    baseline_alternating_projection,
    improved_alternating_projection,
)
from riscache.pda import CacheArray, build_rmapda, mn_pda, ms_mapda

__all__ = [
    "CacheArray",
    "ChannelRealization",
    "ConvergenceTrace",
    "GroupingPlan",
    "GroupingSolution",
    "NullingProblem",
    "PathSet",
    "baseline_alternating_projection",
    "build_rmapda",
    "draw_channel",
    "improved_alternating_projection",
    "mn_pda",
    "ms_mapda",
    "optimal_grouping",
]

__version__ = "0.1.0"
