import math
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from riscache.pda import (
    STAR,
    CacheArray,
    SlotGroupStructure,
    build_rmapda,
    matching_degrees,
    mn_pda,
    ms_mapda,
    replication_counts,
    slot_groups,
    slot_member_counts,
    subsets,
    validate_mapda,
    validate_pda,
    validate_rmapda,
)

DATA = Path(__file__).parent / "data"


def load_set_table(name):
    """Rows of 1-based digit-string sets ("123") or "*", as 0-based frozensets / None."""
    rows = []
    for line in (DATA / name).read_text().split("\n"):
        if line.strip():
            rows.append([None if tok == "*" else frozenset(int(c) - 1 for c in tok) for tok in line.split()])
    return rows


def assert_same_up_to_relabel(a, b):
    """Star patterns agree and slot ids correspond one-to-one."""
    assert a.shape == b.shape
    assert np.array_equal(a == STAR, b == STAR)
    pairs = {(int(x), int(y)) for x, y in zip(a[a != STAR], b[b != STAR])}
    assert len({x for x, _ in pairs}) == len(pairs) == len({y for _, y in pairs})


# --- MN PDA ------------------------------------------------------------------------


def test_mn_small_case():
    arr = mn_pda(2, 1)
    assert arr.cells.tolist() == [[STAR, 1], [1, STAR]]


def test_mn_k7_golden():
    table = load_set_table("mn_pda_K7_t1.txt")
    arr = mn_pda(7, 1)
    assert (arr.F, arr.K, arr.Z, arr.S) == (7, 7, 1, 21)
    pairs = subsets(7, 2)
    for f in range(7):
        for k in range(7):
            want = table[f][k]
            got = arr.cells[f, k]
            if want is None:
                assert got == STAR
            else:
                assert frozenset(pairs[got - 1]) == want
    assert validate_pda(arr).ok


@pytest.mark.parametrize("K,t", [(4, 1), (5, 2), (6, 3), (7, 1)])
def test_mn_slot_multiplicity(K, t):
    arr = mn_pda(K, t)
    counts = slot_member_counts(arr)
    assert len(counts) == math.comb(K, t + 1)
    assert set(counts.values()) == {t + 1}
    assert arr.Z == math.comb(K - 1, t - 1)


def test_mn_rejects_bad_t():
    with pytest.raises(ValueError):
        mn_pda(3, 3)


def test_mn_star_mutation_is_c1():
    arr = mn_pda(7, 1)
    cells = arr.cells.copy()
    cells[3, 3] = 22
    report = validate_pda(CacheArray(cells, "PDA"))
    assert "C1" in report.conditions()
    assert any(v.col == 3 for v in report.violations if v.condition == "C1")


def test_mn_duplicate_slot_in_column_is_c3():
    cells = mn_pda(5, 1).cells.copy()
    # column 0 holds slots 1..4 in rows 1..4; force two of them equal
    cells[2, 0] = cells[1, 0]
    assert "C3" in validate_pda(CacheArray(cells, "PDA")).conditions()


# --- MS MAPDA ----------------------------------------------------------------------


def test_ms_k7_l2_golden():
    table = load_set_table("ms_mapda_K7_t1_L2.txt")
    arr = ms_mapda(7, 1, 2)
    assert (arr.F, arr.K, arr.Z, arr.S) == (35, 7, 5, 70)
    assert set(slot_member_counts(arr).values()) == {3}
    big = subsets(7, 3)
    for f in range(35):
        for k in range(7):
            want = table[f][k]
            got = arr.cells[f, k]
            if want is None:
                assert got == STAR, (f, k)
            else:
                assert frozenset(big[(got - 1) // 2]) == want, (f, k)
    assert validate_mapda(arr, 2).ok


def test_ms_set_multiplicity():
    K, t, L1 = 7, 1, 2
    arr = ms_mapda(K, t, L1)
    per_set = Counter((s - 1) // math.comb(t + L1 - 1, t) for s in range(1, arr.S + 1))
    assert set(per_set.values()) == {math.comb(t + L1 - 1, t)}
    assert len(per_set) == math.comb(K, t + L1)


@pytest.mark.parametrize("K,t,L1", [(6, 1, 3), (6, 2, 2), (8, 2, 3), (5, 1, 4)])
def test_ms_general_parameters(K, t, L1):
    arr = ms_mapda(K, t, L1)
    assert arr.F == math.comb(K, t) * math.comb(K - t - 1, L1 - 1)
    assert arr.Z == math.comb(K - 1, t - 1) * math.comb(K - t - 1, L1 - 1)
    assert arr.S == math.comb(K, t + L1) * math.comb(t + L1 - 1, t)
    assert set(slot_member_counts(arr).values()) == {t + L1}
    assert validate_mapda(arr, L1).ok


@pytest.mark.parametrize("K,t", [(4, 1), (6, 2), (7, 3)])
def test_ms_with_one_antenna_is_mn(K, t):
    assert_same_up_to_relabel(ms_mapda(K, t, 1).cells, mn_pda(K, t).cells)


def test_ms_c4_catches_too_few_antennas():
    assert "C4" in validate_mapda(ms_mapda(7, 1, 2), 1).conditions()


def test_ms_parameter_errors():
    with pytest.raises(ValueError):
        ms_mapda(4, 2, 3)


# --- replication counts and matching -----------------------------------------------


def test_k7_counts():
    rc = replication_counts(7, 1, 2, 3)
    assert (rc.n1, rc.n2, rc.m) == (10, 2, 3)
    assert rc.F_total == 3 * math.comb(5, 1) * 7 + 20 * 7 == 245
    assert rc.S_total == 210


@pytest.mark.parametrize("K,t,L1,r", [(7, 1, 2, 3), (9, 1, 3, 3), (8, 2, 2, 2), (9, 1, 2, 4)])
def test_replication_identity(K, t, L1, r):
    rc = replication_counts(K, t, L1, r)
    bundles = math.prod(math.comb(K - i * (t + 1), t + 1) for i in range(r - 1))
    bundles //= math.factorial(r - 1)
    assert rc.m * math.comb(t + L1 - 1, t) * math.comb(K, t + L1) == rc.n2 * bundles == rc.S_total
    d = matching_degrees(K, t, L1, r)
    assert d.d_X == d.d_Y


def test_replication_asks_for_virtual_users():
    with pytest.raises(ValueError, match="virtual users"):
        replication_counts(5, 1, 2, 3)
    with pytest.raises(ValueError):
        replication_counts(7, 1, 2, 1)


# --- RMAPDA ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def k7_rmapda():
    return build_rmapda(7, 1, 4, 3)


def test_k7_shape(k7_rmapda):
    arr, groups = k7_rmapda
    assert (arr.F, arr.S, arr.K) == (245, 210, 7)
    assert arr.params["n1"] == 10 and arr.params["n2"] == 2 and arr.params["m"] == 3
    assert validate_rmapda(arr, 4, 3).ok
    for s, sg in groups.items():
        sizes = [len(users) for users, _ in sg.groups()]
        assert sizes == [3, 2, 2]
        assert len(set(sg.users)) == 7


def test_k7_star_fraction(k7_rmapda):
    arr, _ = k7_rmapda
    # both constituents cache a t/K fraction
    assert set(arr.star_counts().tolist()) == {arr.Z}
    assert arr.Z * 7 == arr.F * 1


def test_k7_big_group_pairings(k7_rmapda):
    arr, groups = k7_rmapda
    hits = Counter(
        tuple(users for users, _ in sg.small_groups)
        for sg in groups.values()
        if sg.big_users == (0, 1, 2)
    )
    assert hits == {
        ((3, 4), (5, 6)): 2,
        ((3, 5), (4, 6)): 2,
        ((3, 6), (4, 5)): 2,
    }


def test_k7_antennas(k7_rmapda):
    arr, _ = k7_rmapda
    sg = slot_groups(arr, 1)
    assert sg.big_antennas == (0, 1)
    assert [ants for _, ants in sg.small_groups] == [2, 3]
    with pytest.raises(KeyError):
        slot_groups(arr, 211)


def test_rmapda_merge_slots_is_c3(k7_rmapda):
    arr, groups = k7_rmapda
    cells = arr.cells.copy()
    cols1 = set(np.flatnonzero((cells == 1).any(axis=0)).tolist())
    other = next(
        s for s in range(2, arr.S + 1)
        if cols1 & set(np.flatnonzero((cells == s).any(axis=0)).tolist())
    )
    cells[cells == other] = 1
    mutated = CacheArray(cells, "RMAPDA", arr.params, groups, arr.virtual_users)
    assert "C3" in validate_rmapda(mutated, 4, 3).conditions()


def test_rmapda_oversized_small_group_is_c4(k7_rmapda):
    arr, groups = k7_rmapda
    sg = groups[1]
    moved = sg.big_users[-1]
    (u1, a1), rest = sg.small_groups[0], sg.small_groups[1:]
    bad = SlotGroupStructure(
        1, sg.big_users[:-1], sg.big_antennas, ((tuple(sorted(u1 + (moved,))), a1),) + rest
    )
    report = validate_rmapda(arr, 4, 3, {**groups, 1: bad})
    assert "C4" in report.conditions()
    assert all(v.slot == 1 for v in report.violations)


def test_rmapda_deterministic():
    a, _ = build_rmapda(7, 1, 3, 2)
    b, _ = build_rmapda(7, 1, 3, 2)
    assert a.to_json() == b.to_json()


def test_rmapda_single_group_is_ms():
    arr, groups = build_rmapda(6, 1, 3, 1)
    assert np.array_equal(arr.cells, ms_mapda(6, 1, 3).cells)
    assert validate_rmapda(arr, 3, 1).ok
    assert all(sg.num_groups == 1 for sg in groups.values())


def test_rmapda_pads_virtual_users():
    # g = 4 + 3 = 7 > K = 5
    arr, groups = build_rmapda(5, 1, 4, 3)
    assert arr.K == 7 and arr.virtual_users == (5, 6)
    assert validate_rmapda(arr, 4, 3).ok
    assert all(len(sg.users) == 7 for sg in groups.values())


def test_rmapda_rejects_bad_r():
    with pytest.raises(ValueError):
        build_rmapda(7, 1, 2, 3)


@pytest.mark.parametrize("K,t,L0,r", [(8, 1, 4, 3), (9, 2, 3, 2), (9, 1, 4, 4)])
def test_rmapda_every_slot_serves_g(K, t, L0, r):
    arr, groups = build_rmapda(K, t, L0, r)
    g = L0 + t * r
    assert validate_rmapda(arr, L0, r).ok
    assert set(slot_member_counts(arr).values()) == {g}
    assert all(len(sg.users) == g for sg in groups.values())


# --- serialization -----------------------------------------------------------------


def test_json_round_trip(k7_rmapda):
    arr, _ = k7_rmapda
    back = CacheArray.from_json(arr.to_json())
    assert np.array_equal(back.cells, arr.cells)
    assert back.slot_groups == arr.slot_groups
    assert back.params == arr.params
    assert validate_rmapda(back, 4, 3).ok


def test_json_bad_cell_is_located():
    doc = mn_pda(3, 1).to_dict()
    doc["cells"][1][2] = "x"
    with pytest.raises(ValueError, match=r"cells\[1\]\[2\]"):
        CacheArray.from_dict(doc)
