import pytest
from hypothesis import given
from hypothesis import strategies as st

from airwaygeom.codes import (AngleCode, BranchCode, CodeError, all_branches, angle_pool, named_pool,
                              parse_angle, parse_branch, parse_code)


def test_parse_angle_code():
    code = parse_code("B1121A2")
    assert isinstance(code, AngleCode)
    assert code.branch.path == (1, 2, 1)
    assert code.generation == 4
    assert code.index == 2
    assert str(code.daughter) == "B11212"


def test_trachea_angle():
    code = parse_code("B1A1")
    assert code.branch == BranchCode()
    assert code.generation == 1 and code.index == 1


@pytest.mark.parametrize("bad", ["B13A1", "B1A3", "1121", "B2", "B", "B11A", "b11", ""])
def test_malformed_codes(bad):
    with pytest.raises(CodeError):
        parse_code(bad)


def test_kind_checks():
    with pytest.raises(CodeError):
        parse_branch("B11A1")
    with pytest.raises(CodeError):
        parse_angle("B11")


@given(st.lists(st.sampled_from([1, 2]), max_size=12), st.sampled_from([None, 1, 2]))
def test_round_trip(path, index):
    code = BranchCode(tuple(path)) if index is None else BranchCode(tuple(path)).angle(index)
    assert parse_code(str(code)) == code


def test_parent_child():
    c = parse_branch("B112")
    assert str(c.parent) == "B11"
    assert str(c.child(2)) == "B1122"
    assert BranchCode().parent is None


def test_pool_sizes():
    assert len(angle_pool({1, 2, 3, 4})) == 26
    assert len(angle_pool({3, 4})) == 20
    assert angle_pool(set()) == []
    assert named_pool("all26") == named_pool("gen1234")
    pool = [str(c) for c in named_pool("gen34")]
    assert pool == sorted(pool)
    assert not any(c.startswith(("B1221", "B1222")) for c in pool)
    with pytest.raises(CodeError):
        named_pool("gen5")


def test_all_branches_excludes_subtrees():
    codes = {str(c) for c in all_branches(5, exclude=["B1221"])}
    assert "B1221" not in codes and "B12211" not in codes
    assert "B1222" in codes
    assert len(all_branches(4)) == 15
