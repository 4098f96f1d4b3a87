"""Placement delivery arrays: MN PDA, MS MAPDA and the grouped RMAPDA.

Arrays are stored as ``F x K`` integer matrices where ``STAR`` (0) marks a
cached packet and positive integers are slot ids. Users, rows and antennas
are 0-based; slot ids start at 1.

Subsets of users are ranked lexicographically (``itertools.combinations``
order), which fixes the slot labelling of the MN and MS arrays:

* MN: slot of ``T + {k}`` is ``rank(T + {k}) + 1``.
* MS: the ``o``-th appearance (down the rows, within a column) of the
  ``(t+L1)``-set ``S`` gets slot ``rank(S) * C(t+L1-1, t) + o + 1``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import networkx as nx
import numpy as np

STAR = 0


class ConstructionError(RuntimeError):
    """Internal inconsistency while assembling an array (should not happen)."""


@dataclass(frozen=True)
class SlotGroupStructure:
    """Users and antennas of every group served in one slot.

    The big group holds ``t + L1`` users on antennas ``0..L1-1``; small group
    ``i`` holds ``t + 1`` users on antenna ``L1 + i``.
    """

    slot: int
    big_users: tuple[int, ...]
    big_antennas: tuple[int, ...]
    small_groups: tuple[tuple[tuple[int, ...], int], ...] = ()

    def groups(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        out = [(self.big_users, self.big_antennas)]
        out += [(users, (ant,)) for users, ant in self.small_groups]
        return out

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(u for users, _ in self.groups() for u in users)

    @property
    def num_groups(self) -> int:
        return 1 + len(self.small_groups)

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "big": {"users": list(self.big_users), "antennas": list(self.big_antennas)},
            "small": [{"users": list(u), "antenna": a} for u, a in self.small_groups],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlotGroupStructure":
        return cls(
            int(d["slot"]),
            tuple(int(u) for u in d["big"]["users"]),
            tuple(int(a) for a in d["big"]["antennas"]),
            tuple(
                (tuple(int(u) for u in g["users"]), int(g["antenna"]))
                for g in d.get("small", [])
            ),
        )


@dataclass
class CacheArray:
    """``F x K`` array over ``{STAR} U [S]`` plus construction metadata."""

    cells: np.ndarray
    kind: str = "PDA"
    params: dict = field(default_factory=dict)
    slot_groups: dict[int, SlotGroupStructure] | None = None
    virtual_users: tuple[int, ...] = ()

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("cells must be a non-empty 2-D array")
        if not np.issubdtype(cells.dtype, np.integer):
            raise ValueError("cells must be integers (0 = star)")
        if np.any(cells < 0):
            raise ValueError("negative cell value")
        self.cells = cells.astype(np.int64)

    @property
    def F(self) -> int:
        return self.cells.shape[0]

    @property
    def K(self) -> int:
        return self.cells.shape[1]

    @property
    def S(self) -> int:
        return int(self.cells.max())

    @property
    def Z(self) -> int:
        """Star count of the first column (all columns agree in a valid array)."""
        return int(np.sum(self.cells[:, 0] == STAR))

    def star_counts(self) -> np.ndarray:
        return np.sum(self.cells == STAR, axis=0)

    def slot_cells(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Map slot id -> (rows, cols) of its occurrences, row-major order."""
        rows, cols = np.nonzero(self.cells)
        vals = self.cells[rows, cols]
        order = np.argsort(vals, kind="stable")
        rows, cols, vals = rows[order], cols[order], vals[order]
        bounds = np.flatnonzero(np.diff(vals)) + 1
        out = {}
        for r_, c_, v_ in zip(
            np.split(rows, bounds), np.split(cols, bounds), np.split(vals, bounds)
        ):
            if len(v_):
                out[int(v_[0])] = (r_, c_)
        return out

    def to_dict(self) -> dict:
        cells = [["*" if x == STAR else int(x) for x in row] for row in self.cells]
        d = {
            "kind": self.kind,
            "K": self.K,
            "F": self.F,
            "S": self.S,
            "Z": self.Z,
            "params": dict(self.params),
            "virtual_users": list(self.virtual_users),
            "cells": cells,
        }
        if self.slot_groups is not None:
            d["slot_groups"] = [self.slot_groups[s].to_dict() for s in sorted(self.slot_groups)]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CacheArray":
        try:
            raw = d["cells"]
        except (KeyError, TypeError):
            raise ValueError("array document has no 'cells' field") from None
        if not isinstance(raw, list) or not raw or not isinstance(raw[0], list):
            raise ValueError("'cells' must be a non-empty list of rows")
        width = len(raw[0])
        cells = np.zeros((len(raw), width), dtype=np.int64)
        for i, row in enumerate(raw):
            if not isinstance(row, list) or len(row) != width:
                raise ValueError(f"cells row {i}: expected a list of {width} entries")
            for j, x in enumerate(row):
                if x == "*":
                    continue
                if isinstance(x, bool) or not isinstance(x, int) or x < 1:
                    raise ValueError(
                        f"cells[{i}][{j}] = {x!r}: expected '*' or a positive integer"
                    )
                cells[i, j] = x
        for key in ("F", "K"):
            if key in d and int(d[key]) != (cells.shape[0] if key == "F" else cells.shape[1]):
                raise ValueError(f"header {key}={d[key]} disagrees with cells shape {cells.shape}")
        groups = None
        if d.get("slot_groups") is not None:
            groups = {}
            for i, g in enumerate(d["slot_groups"]):
                try:
                    sg = SlotGroupStructure.from_dict(g)
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"slot_groups[{i}]: malformed entry ({exc})") from None
                groups[sg.slot] = sg
        return cls(
            cells,
            kind=d.get("kind", "PDA"),
            params=dict(d.get("params", {})),
            slot_groups=groups,
            virtual_users=tuple(int(u) for u in d.get("virtual_users", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "CacheArray":
        return cls.from_dict(json.loads(text))


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    condition: str
    message: str
    row: int | None = None
    col: int | None = None
    slot: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def conditions(self) -> set[str]:
        return {v.condition for v in self.violations}

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def _check_c1_c3(arr: CacheArray, report: ValidationReport) -> None:
    counts = arr.star_counts()
    Z = Counter(counts.tolist()).most_common(1)[0][0]
    for k, c in enumerate(counts):
        if c != Z:
            report.violations.append(
                Violation("C1", f"column {k} has {c} stars, expected {Z}", col=k)
            )
    present = set(np.unique(arr.cells[arr.cells != STAR]).tolist())
    for s in range(1, arr.S + 1):
        if s not in present:
            report.violations.append(Violation("C2", f"slot {s} never appears", slot=s))
    for k in range(arr.K):
        col = arr.cells[:, k]
        vals, cnt = np.unique(col[col != STAR], return_counts=True)
        for s, c in zip(vals, cnt):
            if c > 1:
                rows = np.flatnonzero(col == s).tolist()
                report.violations.append(
                    Violation("C3", f"slot {s} appears {c} times in column {k} (rows {rows})",
                              row=rows[1], col=k, slot=int(s))
                )


def validate_mapda(arr: CacheArray, L: int) -> ValidationReport:
    """Check C1-C4; C4 bounds integer entries per row of each slot subarray by ``min(L, K)``."""
    report = ValidationReport()
    _check_c1_c3(arr, report)
    bound = min(L, arr.K)
    for s, (rows, cols) in arr.slot_cells().items():
        urows = np.unique(rows)
        ucols = np.unique(cols)
        sub = arr.cells[np.ix_(urows, ucols)]
        per_row = np.sum(sub != STAR, axis=1)
        for f, n in zip(urows, per_row):
            if n > bound:
                report.violations.append(
                    Violation("C4", f"slot {s}: row {f} holds {n} integers (> {bound})",
                              row=int(f), slot=s)
                )
    return report


def validate_pda(arr: CacheArray) -> ValidationReport:
    return validate_mapda(arr, 1)


def validate_rmapda(
    arr: CacheArray,
    L0: int,
    r: int,
    groups: dict[int, SlotGroupStructure] | None = None,
) -> ValidationReport:
    """Check C1-C3 and the grouped C4 against the stored slot->group map."""
    groups = arr.slot_groups if groups is None else groups
    report = ValidationReport()
    _check_c1_c3(arr, report)
    if groups is None:
        report.violations.append(Violation("C4", "no slot group structure supplied"))
        return report
    L1 = L0 - r + 1
    for s, (rows, cols) in arr.slot_cells().items():
        sg = groups.get(s)
        if sg is None:
            report.violations.append(Violation("C4", f"slot {s} has no group structure", slot=s))
            continue
        if sg.num_groups != r:
            report.violations.append(
                Violation("C4", f"slot {s} has {sg.num_groups} groups, expected {r}", slot=s)
            )
        user_lists = [users for users, _ in sg.groups()]
        flat = [u for users in user_lists for u in users]
        if len(flat) != len(set(flat)):
            report.violations.append(
                Violation("C4", f"slot {s}: groups are not column-disjoint", slot=s)
            )
        if set(flat) != set(cols.tolist()):
            report.violations.append(
                Violation("C4", f"slot {s}: groups {sorted(set(flat))} do not match "
                                f"its columns {sorted(set(cols.tolist()))}", slot=s)
            )
        for gi, users in enumerate(user_lists):
            bound = L1 if gi == 0 else 1
            gcols = np.array(sorted(users))
            in_group = np.isin(cols, gcols)
            grows = np.unique(rows[in_group])
            if len(grows) == 0:
                continue
            sub = arr.cells[np.ix_(grows, gcols)]
            per_row = np.sum(sub != STAR, axis=1)
            for f, n in zip(grows, per_row):
                if n > bound:
                    report.violations.append(
                        Violation("C4", f"slot {s} group {gi}: row {f} holds {n} integers "
                                        f"(> {bound})", row=int(f), slot=s)
                    )
    return report


# --- base constructions --------------------------------------------------------


def subsets(K: int, size: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations(range(K), size))


def subset_rank(K: int, size: int) -> dict[tuple[int, ...], int]:
    return {s: i for i, s in enumerate(itertools.combinations(range(K), size))}


def mn_pda(K: int, t: int) -> CacheArray:
    """``(K, C(K,t), C(K-1,t-1), C(K,t+1))`` PDA with rows indexed by t-subsets."""
    if not 1 <= t < K:
        raise ValueError(f"need 1 <= t < K, got t={t}, K={K}")
    rows = subsets(K, t)
    rank = subset_rank(K, t + 1)
    cells = np.zeros((len(rows), K), dtype=np.int64)
    for f, T in enumerate(rows):
        for k in range(K):
            if k not in T:
                cells[f, k] = rank[tuple(sorted(T + (k,)))] + 1
    return CacheArray(cells, kind="PDA", params={"K": K, "t": t})


def _ms_labels(K: int, t: int, L1: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (rank of S, order of appearance) for the MS array; -1 on stars."""
    set_rank = subset_rank(K, t + L1)
    row_keys = [
        (T, Lset)
        for Lset in itertools.combinations(range(K - t - 1), L1 - 1)
        for T in itertools.combinations(range(K), t)
    ]
    F = len(row_keys)
    srank = np.full((F, K), -1, dtype=np.int64)
    order = np.full((F, K), -1, dtype=np.int64)
    seen = [Counter() for _ in range(K)]
    for f, (T, Lset) in enumerate(row_keys):
        Tset = set(T)
        for k in range(K):
            if k in Tset:
                continue
            rest = [u for u in range(K) if u not in Tset and u != k]
            S = tuple(sorted(T + tuple(rest[i] for i in Lset) + (k,)))
            idx = set_rank[S]
            srank[f, k] = idx
            order[f, k] = seen[k][idx]
            seen[k][idx] += 1
    return srank, order


def ms_mapda(K: int, t: int, L1: int) -> CacheArray:
    """``(L1, K, C(K,t)C(K-t-1,L1-1), C(K-1,t-1)C(K-t-1,L1-1), C(K,t+L1)C(t+L1-1,t))`` MAPDA.

    Rows are indexed by ``(L, T)`` with ``L`` in ``C([K-t-1], L1-1)`` as the
    outer index and the t-subset ``T`` inner. For ``k`` not in ``T`` the cell
    belongs to the set ``S = T + {k} + (picks of L among the remaining users)``.
    """
    if L1 < 1 or t < 1 or t + L1 > K:
        raise ValueError(f"need t >= 1, L1 >= 1 and t + L1 <= K (got t={t}, L1={L1}, K={K})")
    srank, order = _ms_labels(K, t, L1)
    mult = math.comb(t + L1 - 1, t)
    cells = np.where(srank >= 0, srank * mult + order + 1, STAR).astype(np.int64)
    return CacheArray(cells, kind="MAPDA", params={"K": K, "t": t, "L1": L1})


# --- RMAPDA ------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationCounts:
    n1: int
    n2: int
    m: int
    F_total: int
    S_total: int


def _prod(xs) -> int:
    out = 1
    for x in xs:
        out *= x
    return out


def _partition_count(n_users: int, t: int, groups: int) -> int:
    """Ways to pick ``groups`` disjoint, unordered (t+1)-subsets out of ``n_users``."""
    if groups == 0:
        return 1
    num = _prod(math.comb(n_users - i * (t + 1), t + 1) for i in range(groups))
    q, rem = divmod(num, math.factorial(groups))
    assert rem == 0
    return q


def replication_counts(K: int, t: int, L1: int, r: int) -> ReplicationCounts:
    """Copies of the MN PDA (``n1 * n2``) and the MS MAPDA (``m``) whose slots align."""
    if r < 2:
        raise ValueError("replication needs r >= 2 (r = 1 is a plain MS MAPDA)")
    if L1 < 1 or t < 1:
        raise ValueError("need t >= 1 and L1 >= 1")
    g = t + L1 + (r - 1) * (t + 1)
    if K < g:
        raise ValueError(
            f"K={K} users cannot host g={g} per slot; pad with {g - K} virtual users"
        )
    big_slots = math.comb(t + L1 - 1, t) * math.comb(K, t + L1)
    bundles = _partition_count(K, t, r - 1)
    n1 = _partition_count(K - (t + 1), t, r - 2)
    S = math.lcm(big_slots, bundles)
    m = S // big_slots
    n2 = S // bundles
    F = m * math.comb(K - t - 1, L1 - 1) * math.comb(K, t) + n1 * n2 * math.comb(K, t)
    return ReplicationCounts(n1, n2, m, F, S)


@dataclass(frozen=True)
class MatchingDegrees:
    """Degrees of the replicated bipartite graph between MS slots and MN bundles."""

    d_X1: int
    d_Y1: int
    d_X: int
    d_Y: int


def matching_degrees(K: int, t: int, L1: int, r: int) -> MatchingDegrees:
    rc = replication_counts(K, t, L1, r)
    d_X1 = _partition_count(K - (t + L1), t, r - 1)
    d_Y1 = math.comb(K - (r - 1) * (t + 1), t + L1)
    mult = math.comb(t + L1 - 1, t)
    return MatchingDegrees(d_X1, d_Y1, rc.n2 * d_X1, rc.m * mult * d_Y1)


def disjoint_bundles(pool: Sequence[int], t: int, count: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Unordered bundles of ``count`` disjoint (t+1)-subsets of ``pool``, lexicographic."""
    pool = sorted(pool)

    def rec(start_rank, used, acc):
        if len(acc) == count:
            yield tuple(acc)
            return
        for i, B in enumerate(cands[start_rank:], start_rank):
            if used.isdisjoint(B):
                acc.append(B)
                yield from rec(i + 1, used | set(B), acc)
                acc.pop()

    cands = list(itertools.combinations(pool, t + 1))
    yield from rec(0, frozenset(), [])


def pair_slots(K: int, t: int, L1: int, r: int) -> list[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]]:
    """Pair every MS slot replica with a bundle of disjoint MN slots.

    Solves the transportation problem "each big set ``A`` supplies
    ``m C(t+L1-1, t)`` slot replicas, each bundle absorbs ``n2`` of them,
    only disjoint (A, bundle) pairs allowed" as an integral max-flow with
    per-edge capacity ``ceil(supply / degree)``. The uniform fractional
    solution fits under that cap, so the integral optimum saturates every
    supply; when the ratio is an integer every edge carries exactly it.

    Returns ``(A, bundle)`` pairs in slot order.
    """
    rc = replication_counts(K, t, L1, r)
    deg = matching_degrees(K, t, L1, r)
    supply = rc.m * math.comb(t + L1 - 1, t)
    cap = math.ceil(Fraction(supply, deg.d_X1))
    big_sets = subsets(K, t + L1)
    net = nx.DiGraph()
    adjacency = {}
    for A in big_sets:
        net.add_edge("src", ("A", A), capacity=supply)
        rest = [u for u in range(K) if u not in A]
        adjacency[A] = list(disjoint_bundles(rest, t, r - 1))
        for P in adjacency[A]:
            net.add_edge(("A", A), ("P", P), capacity=cap)
    for P in disjoint_bundles(range(K), t, r - 1):
        net.add_edge(("P", P), "snk", capacity=rc.n2)
    value, flow = nx.maximum_flow(net, "src", "snk")
    if value != rc.S_total:
        raise ConstructionError(
            f"matching covers {value} of {rc.S_total} slots for (K={K}, t={t}, L1={L1}, r={r})"
        )
    pairs = []
    for A in big_sets:
        out = flow[("A", A)]
        for P in adjacency[A]:
            pairs.extend([(A, P)] * out[("P", P)])
    return pairs


def build_rmapda(K: int, t: int, L0: int, r: int) -> tuple[CacheArray, dict[int, SlotGroupStructure]]:
    """Stack ``n1 n2`` MN PDAs over ``m`` MS MAPDAs and merge slots group-wise.

    If ``g = L0 + t r`` exceeds ``K``, ``g - K`` virtual users are appended as
    extra columns; they are listed in ``virtual_users`` and skipped by the
    delivery simulator.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 1 <= r <= L0:
        raise ValueError(f"need 1 <= r <= L0, got r={r}, L0={L0}")
    L1 = L0 - r + 1
    g = L0 + t * r
    K_eff = max(K, g)
    virtual = tuple(range(K, K_eff))
    params = {"K": K, "t": t, "L0": L0, "r": r, "L1": L1, "g": g}
    big_ants = tuple(range(L1))

    if r == 1:
        arr = ms_mapda(K_eff, t, L1)
        mult = math.comb(t + L1 - 1, t)
        big_sets = subsets(K_eff, t + L1)
        groups = {
            s: SlotGroupStructure(s, big_sets[(s - 1) // mult], big_ants)
            for s in range(1, arr.S + 1)
        }
        out = CacheArray(arr.cells, "RMAPDA", params | {"n1": 0, "n2": 0, "m": 1},
                         groups, virtual)
        return out, groups

    rc = replication_counts(K_eff, t, L1, r)
    mult = math.comb(t + L1 - 1, t)
    mn = mn_pda(K_eff, t).cells
    srank, order = _ms_labels(K_eff, t, L1)
    F_mn, F_ms = mn.shape[0], srank.shape[0]
    n_mn = rc.n1 * rc.n2

    big_sets = subsets(K_eff, t + L1)
    big_index = {A: i for i, A in enumerate(big_sets)}
    small_index = subset_rank(K_eff, t + 1)

    # next unused replica of each MS set (copy-major, then order) and of each MN set
    next_big = [0] * len(big_sets)
    next_small = [0] * len(small_index)
    # slot id for (MS copy, set rank, order) and for (MN copy, set rank)
    ms_slot = np.zeros((rc.m, len(big_sets), mult), dtype=np.int64)
    mn_slot = np.zeros((n_mn, len(small_index)), dtype=np.int64)

    groups: dict[int, SlotGroupStructure] = {}
    for s, (A, bundle) in enumerate(pair_slots(K_eff, t, L1, r), start=1):
        a = big_index[A]
        rep = next_big[a]
        if rep >= rc.m * mult:
            raise ConstructionError(f"MS replicas of {A} exhausted at slot {s}")
        ms_slot[rep // mult, a, rep % mult] = s
        next_big[a] += 1
        for B in bundle:
            b = small_index[B]
            if next_small[b] >= n_mn:
                raise ConstructionError(f"MN replicas of {B} exhausted at slot {s}")
            mn_slot[next_small[b], b] = s
            next_small[b] += 1
        groups[s] = SlotGroupStructure(
            s, A, big_ants,
            tuple((B, L1 + i) for i, B in enumerate(bundle)),
        )

    if any(x != rc.m * mult for x in next_big) or any(x != n_mn for x in next_small):
        raise ConstructionError("pairing left MS or MN replicas unused")

    mn_ids = np.where(mn > 0, mn - 1, 0)
    blocks = [np.where(mn > 0, mn_slot[c][mn_ids], STAR) for c in range(n_mn)]
    safe_rank = np.where(srank >= 0, srank, 0)
    safe_order = np.where(order >= 0, order, 0)
    blocks += [
        np.where(srank >= 0, ms_slot[c][safe_rank, safe_order], STAR) for c in range(rc.m)
    ]
    cells = np.vstack(blocks)
    if cells.shape[0] != rc.F_total or F_mn * n_mn + F_ms * rc.m != rc.F_total:
        raise ConstructionError(f"row count {cells.shape[0]} != F_total {rc.F_total}")
    params |= {"n1": rc.n1, "n2": rc.n2, "m": rc.m}
    arr = CacheArray(cells, "RMAPDA", params, groups, virtual)
    return arr, groups


def slot_groups(arr: CacheArray, s: int) -> SlotGroupStructure:
    if arr.slot_groups is None or s not in arr.slot_groups:
        raise KeyError(f"unknown slot {s}")
    return arr.slot_groups[s]


def single_group_structures(arr: CacheArray, L: int) -> dict[int, SlotGroupStructure]:
    """Treat every slot of a plain (MA)PDA as one group on antennas ``0..L-1``."""
    out = {}
    for s, (_, cols) in arr.slot_cells().items():
        out[s] = SlotGroupStructure(s, tuple(sorted(cols.tolist())), tuple(range(L)))
    return out


def slot_member_counts(arr: CacheArray) -> dict[int, int]:
    counts: dict[int, int] = defaultdict(int)
    for x in arr.cells[arr.cells != STAR].tolist():
        counts[x] += 1
    return dict(counts)
