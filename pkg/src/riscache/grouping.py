"""Antenna grouping: hit a target sum-DoF with as few RIS units as possible.

Active antennas are split into ``r`` groups; group ``i`` with ``L_i``
antennas serves ``L_i + t`` users, so the sum-DoF is ``L0 + t r``. Every
cross-group (user, antenna) path has to be nulled by the RIS, at a cost of
two units per path. For fixed ``(L0, r)`` the cheapest split is the "star"
``[L0 - r + 1, 1, ..., 1]``.

Everything here is exact integer / rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

BRUTE_FORCE_MAX_L = 14


@dataclass(frozen=True)
class GroupingPlan:
    t: int
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(x) for x in self.group_sizes)
        if not sizes:
            raise ValueError("a plan needs at least one group")
        if any(x < 1 for x in sizes):
            raise ValueError(f"group sizes must be positive, got {sizes}")
        if self.t < 0:
            raise ValueError("t must be non-negative")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def L0(self) -> int:
        return sum(self.group_sizes)

    @property
    def r(self) -> int:
        return len(self.group_sizes)

    @classmethod
    def star(cls, L0: int, r: int, t: int) -> "GroupingPlan":
        if not 1 <= r <= L0:
            raise ValueError(f"need 1 <= r <= L0, got r={r}, L0={L0}")
        return cls(t, (L0 - r + 1,) + (1,) * (r - 1))


@dataclass(frozen=True)
class GroupingSolution:
    L_opt: int
    r_opt: int
    G_opt: int
    t: int
    g_target: int
    g_achieved: int
    plan: GroupingPlan | None = field(default=None, compare=False)

    @property
    def star_sizes(self) -> list[int]:
        return [self.L_opt - self.r_opt + 1] + [1] * (self.r_opt - 1)

    def to_dict(self) -> dict:
        return {
            "L_opt": self.L_opt,
            "r_opt": self.r_opt,
            "G_opt": self.G_opt,
            "t": self.t,
            "g_target": self.g_target,
            "g_achieved": self.g_achieved,
            "star_sizes": self.star_sizes,
        }


def dof_of_plan(plan: GroupingPlan) -> int:
    return sum(L_i + plan.t for L_i in plan.group_sizes)


def ris_cost(plan: GroupingPlan) -> int:
    """Two units for every user of group i that hears an antenna outside group i."""
    L0 = plan.L0
    return 2 * sum((L_i + plan.t) * (L0 - L_i) for L_i in plan.group_sizes)


def star_plan_cost(L0: int, r: int, t: int) -> int:
    if r > L0:
        raise ValueError(f"cannot form r={r} groups from L0={L0} antennas")
    if r < 1:
        raise ValueError("r must be >= 1")
    return 2 * (r - 1) * ((t + 2) * L0 - r)


def lambda_root(L0: int, r: int, t: int) -> Fraction:
    """Non-zero root of the cost-difference parabola :func:`cost_shift`."""
    num = (t + 2) * L0 - 2 * r + (1 - r) * t * t - 2 * t * r + 2 * t + 1
    return Fraction(num, (t + 1) ** 2)


def cost_shift(lam, L0: int, r: int, t: int):
    """Change in RIS units when trading ``lam * t`` antennas for ``lam`` extra groups.

    Equals ``star_plan_cost(L0 - lam t, r + lam, t) - star_plan_cost(L0, r, t)``;
    a downward parabola in ``lam`` through 0 and :func:`lambda_root`.
    """
    c = (t + 2) * L0 - 2 * r + (1 - r) * t * t - 2 * t * r + 2 * t + 1
    return 2 * lam * (-((t + 1) ** 2) * lam + c)


def _check_inputs(L: int, t: int, g_target: int) -> None:
    if t < 1:
        raise ValueError("t must be >= 1 (t = 0 leaves r = (g - L0) / t undefined)")
    if L < 1:
        raise ValueError("L must be >= 1")
    if g_target < t + 1:
        raise ValueError(f"g_target must be >= t + 1 = {t + 1}")
    if g_target > L * (t + 1):
        raise ValueError(
            f"g_target={g_target} exceeds the maximum sum-DoF L(t+1) = {L * (t + 1)}"
        )


def _max_antenna_scheme(L: int, t: int, g: int) -> tuple[int, int] | None:
    """Largest ``L0`` in range with ``r = (g - L0)/t`` a positive integer."""
    L_min = -(-g // (t + 1))
    L_max = min(L, g - t)
    for L0 in range(L_max, L_min - 1, -1):
        if (g - L0) % t == 0 and (g - L0) // t > 0:
            return L0, (g - L0) // t
    return None


def optimal_grouping(L: int, t: int, g_target: int) -> GroupingSolution:
    """Cheapest star grouping reaching at least ``g_target`` sum-DoF.

    Raises ``g`` until some ``L0`` admits an integer ``r``, keeping the
    largest such ``L0``. Then decides whether trading ``lambda_max * t``
    antennas for ``lambda_max`` more groups lowers the cost; at equal cost
    the larger-``L0`` (fewer groups) scheme is kept.
    """
    _check_inputs(L, t, g_target)
    g = g_target
    found = None
    while g <= L * (t + 1):
        found = _max_antenna_scheme(L, t, g)
        if found is not None:
            break
        g += 1
    if found is None:
        raise ValueError(f"no grouping reaches sum-DoF >= {g_target} with L={L}, t={t}")
    L_max, r = found
    G = star_plan_cost(L_max, r, t)
    lam_max = (L_max - r) // (t + 1)
    shift = cost_shift(lam_max, L_max, r, t)
    # f is concave with f(0) = 0, so over 0..lam_max its minimum sits at an end
    if lam_max > 0 and shift < 0:
        L_opt, r_opt, G_opt = L_max - lam_max * t, r + lam_max, G + shift
    else:
        L_opt, r_opt, G_opt = L_max, r, G
    return GroupingSolution(
        L_opt, r_opt, G_opt, t, g_target, g, GroupingPlan.star(L_opt, r_opt, t)
    )


def integer_partitions(n: int, max_part: int | None = None):
    """Non-increasing integer partitions of ``n``."""
    if max_part is None:
        max_part = n
    if n == 0:
        yield ()
        return
    for first in range(min(n, max_part), 0, -1):
        for rest in integer_partitions(n - first, first):
            yield (first,) + rest


def brute_force_grouping(L: int, t: int, g_target: int) -> GroupingSolution:
    """Exhaustive search over every ``L0 <= L`` and every partition of ``L0``."""
    if L > BRUTE_FORCE_MAX_L:
        raise ValueError(f"brute force limited to L <= {BRUTE_FORCE_MAX_L}")
    _check_inputs(L, t, g_target)
    plans = [
        GroupingPlan(t, sizes)
        for L0 in range(1, L + 1)
        for sizes in integer_partitions(L0)
    ]
    reachable = sorted({dof_of_plan(p) for p in plans if dof_of_plan(p) >= g_target})
    g = reachable[0]
    candidates = [p for p in plans if dof_of_plan(p) == g]
    best = min(candidates, key=lambda p: (ris_cost(p), p.r))
    return GroupingSolution(best.L0, best.r, ris_cost(best), t, g_target, g, best)


def min_cost_partition(L0: int, r: int, t: int) -> tuple[int, list[tuple[int, ...]]]:
    """Minimum :func:`ris_cost` over partitions of ``L0`` into exactly ``r`` parts."""
    best = math.inf
    argmin: list[tuple[int, ...]] = []
    for sizes in integer_partitions(L0):
        if len(sizes) != r:
            continue
        c = ris_cost(GroupingPlan(t, sizes))
        if c < best:
            best, argmin = c, [sizes]
        elif c == best:
            argmin.append(sizes)
    return best, argmin
