import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.basic_space import evaluate, iota
from colombeau.calculus import Window, delta, smooth
from colombeau.regularization import build_mollifier_net
from colombeau.sheaf import (Cover, SheafError, agreement, apply_morphism, eps_threshold, extend_net,
                             glue_exprs, glue_nets, partition_of_unity, perturb_outside, restrict_expr,
                             restrict_net, restriction_properties, single_pu)

from conftest import SMALL_GRID

EPS = (2.0 ** -7, 2.0 ** -8, 2.0 ** -9)
NET = build_mollifier_net("distribution", eps_grid=EPS)
NET.kind = "TestObject"
COVER = Cover((-4.0, 4.0), ((-4.0, 2.5), (-2.5, 4.0)))
PU = partition_of_unity(COVER)
INNER = Window.interval(-1.5, 1.5)


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=-1.5, max_value=1.5), st.floats(min_value=0.7, max_value=1.5))
def test_partition_of_unity_sums_to_one_on_the_core(mid, half):
    cover = Cover((-4.0, 4.0), ((-4.0, mid + half), (mid - half, 4.0)))
    pu = partition_of_unity(cover)
    rep = pu.check()
    assert rep["pass"], rep
    assert pu.core == (-4.0 + 0.875, 4.0 - 0.875)
    x = cover.grid.x
    total = sum(e.values for e in pu.etas)
    assert np.all(total >= -1e-15) and np.all(total <= 1.0 + 1e-15)
    assert np.all(total[np.abs(x) > 4.0] == 0.0)


def test_three_member_cover():
    cover = Cover((-4.0, 4.0), ((-4.0, -0.2), (-2.0, 2.0), (0.2, 4.0)))
    assert partition_of_unity(cover).check()["pass"]


def test_unresolved_transitions_fail_the_regularity_check():
    cover = Cover((-4.0, 4.0), ((-4.0, 1.0), (-1.0, 4.0)), SMALL_GRID)
    rep = partition_of_unity(cover).check()
    assert rep["sum_error"] == 0.0 and not rep["class_ok"]


@pytest.mark.parametrize("members", [
    ((-4.0, 0.0),),                             # does not reach the right end
    ((-4.0, 0.0), (0.0, 4.0)),                  # no overlap
    ((-5.0, 1.0), (-1.0, 4.0)),                 # leaves U
    tuple((-4.0 + i, 4.0) for i in range(5)),   # too many members
])
def test_cover_validation(members):
    with pytest.raises(SheafError):
        Cover((-4.0, 4.0), members)


def test_partition_needs_room():
    with pytest.raises(SheafError):
        partition_of_unity(Cover((-4.0, 4.0), ((-4.0, 0.5), (-0.5, 4.0))))
    with pytest.raises(SheafError):
        single_pu((-0.5, 0.5))


def test_threshold_follows_the_localization_radius():
    assert eps_threshold(NET, 0.5) == 2.0 ** -8
    assert eps_threshold(NET, 0.1) is None


def test_restriction_acts_as_the_identity_inside():
    V = COVER.sorted_members[0]
    pu_v = single_pu(V)
    rep = restriction_properties(NET, V, pu_v, (-2.0, 1.0), perturb_outside(NET, V))
    assert rep["iii_pass"] and rep["iv_pass"]
    assert max(rep["iii_errors"].values()) < 1e-10


def test_glued_restrictions_recover_the_net():
    pieces = [restrict_net(NET, m, single_pu(m)) for m in COVER.sorted_members]
    glued = glue_nets(COVER, pieces, PU)
    assert agreement(glued[2.0 ** -9], NET[2.0 ** -9], INNER) < 1e-10


def test_incompatible_nets_do_not_glue():
    shifted = NET.map(lambda op: apply_morphism(smooth("cosbump"), NET)[op.eps], "other")
    with pytest.raises(SheafError):
        glue_nets(COVER, [NET, shifted], PU)


def test_extension_keeps_the_inner_window():
    V, W = (-2.5, 2.5), (-1.5, 1.5)
    small = restrict_net(NET, V, single_pu(V))
    ext = extend_net(small, V, W, NET)
    assert agreement(ext[2.0 ** -9], small[2.0 ** -9], Window.interval(*W)) < 1e-10
    with pytest.raises(SheafError):
        extend_net(small, V, (-2.4, 2.4), NET)


def test_glued_expression_pieces():
    D = iota(delta(0.0))
    e = 2.0 ** -9
    G = glue_exprs(COVER, [D, D], PU)
    a, b = evaluate(G, NET[e]), evaluate(D, NET[e])
    assert (a - b).sup(INNER) <= 1e-10 * b.sup(INNER)
    R = restrict_expr(D, (-4.0, 4.0), PU)
    res = restrict_net(NET, (-4.0, 4.0), PU)
    assert (evaluate(R, res[e]) - evaluate(D, res[e])).sup(INNER) <= 1e-10 * b.sup(INNER)
    with pytest.raises(SheafError):
        restrict_expr(D, (-3.0, 3.0), PU)
