import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from nonuni.generators import gen_grandmother, gen_regular_tree
from nonuni.partitions import (BoxPartition, Slab, log_mu_weight, one_partition, same_class_formula,
                               same_class_fraction, separating_level_set, slab_members, zn_exhaustion)


def test_log_weights(gm2_small):
    assert log_mu_weight(gm2_small, 0) == 0
    assert log_mu_weight(gm2_small, 2) == -1
    assert log_mu_weight(gm2_small, -1) == Fraction(1, 2)
    with pytest.raises(ValueError):
        log_mu_weight(gen_regular_tree(3, 2), 0)


def test_one_partition_classes(gm2_small):
    part = one_partition(gm2_small, Fraction(3, 10))
    classes = part.classes()
    assert sorted(itertools.chain(*classes.values())) == gm2_small.levels_present()
    for n, lvls in classes.items():
        assert len(lvls) == 2 or lvls in ([-3], [3])
        slab = part.class_slab(n)
        assert slab_members(gm2_small, slab) == set(lvls)


@given(st.fractions(0, 1))
def test_every_class_within_unit(u):
    p = gen_grandmother(2, up=2, down=3)
    part = one_partition(p, u)
    for lvls in part.classes().values():
        ts = [log_mu_weight(p, lv) for lv in lvls]
        assert max(ts) - min(ts) < 1


def test_slab_width_and_membership(gm2_small):
    with pytest.raises(ValueError):
        Slab(0, Fraction(1, 2))
    assert slab_members(gm2_small, Slab(0, 1)) == {-2, -1}


def test_separating_levels(gm2_small):
    lv = gm2_small.levels_present()
    inner = lv[1:-1]
    assert not any(separating_level_set(gm2_small, l, l) for l in inner)
    assert all(separating_level_set(gm2_small, l, l + 1) for l in inner[:-1])
    with pytest.raises(ValueError):
        separating_level_set(gm2_small, 2, 1)


def test_box_partition():
    assert zn_exhaustion(2, 3, (1, 2), (4, 1)) == (1, -1)
    with pytest.raises(ValueError):
        BoxPartition(1, 3, (0,))
    assert BoxPartition(1, 4, (2,)).class_of((5,)) == (0,)


@given(st.integers(1, 2), st.integers(1, 8), st.data())
def test_same_class_formula(n, m, data):
    v = data.draw(st.lists(st.integers(-20, 20), min_size=n, max_size=n))
    w = data.draw(st.lists(st.integers(-20, 20), min_size=n, max_size=n))
    assert same_class_fraction(v, w, m) == same_class_formula(v, w, m)
