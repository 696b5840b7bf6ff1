import math

import numpy as np
import pytest

from hwflow.environment import ArrowField, sample_alpha, sample_environment
from hwflow.errors import OutOfWindow
from hwflow.lattice import LatticeWindow
from hwflow.measures import CharacteristicMeasure as M
from hwflow.walks import kernel_row
from hwflow.webs import (
    coalescence_time,
    dual_path,
    first_passage_cdf,
    forward_path,
    rotated_field,
    switch_point,
)

MU = M(((0.3, 0.5), (0.8, 0.5)), ())
W = LatticeWindow(-30, 30, 0, 19)


def field_for(seed, mu=MU, w=W):
    return sample_alpha(sample_environment(mu, w, seed), seed)


def test_forward_path_follows_arrows():
    f = field_for(1)
    p = forward_path(f, (0, 0), 10)
    assert p.at(0) == 0
    for t in range(10):
        assert p.at(t + 1) - p.at(t) == f.at(p.at(t), t)
    assert list(p.times) == list(range(11))
    with pytest.raises(ValueError):
        forward_path(f, (1, 0), 3)
    with pytest.raises(OutOfWindow):
        forward_path(f, (28, 0), 10)


@pytest.mark.parametrize("seed", range(20))
def test_coalescing_property(seed):
    f = field_for(seed)
    paths = [forward_path(f, (x, 0), 19).positions for x in range(-8, 9, 2)]
    for a in paths:
        for b in paths:
            meet = np.nonzero(a == b)[0]
            if meet.size:
                assert np.all(a[meet[0]:] == b[meet[0]:])


def test_forward_dual_never_cross():
    rng = np.random.default_rng(0)
    violations = 0
    trials = 0
    w = LatticeWindow(-40, 40, 0, 19)
    for seed in range(500):
        f = field_for(seed, w=w)
        for _ in range(20):
            x = int(rng.integers(-8, 9)) * 2
            fwd = forward_path(f, (x, 0), 19)
            y = int(rng.integers(-9, 10)) * 2  # (y, 19) is odd
            dual = dual_path(f, (y, 19), 19)
            d = dual.positions[::-1]  # by increasing time
            side = np.sign(d - fwd.positions)
            violations += int(np.any(side != side[-1]))
            trials += 1
    assert trials == 10000 and violations == 0


def test_dual_path_rule():
    # the dual step is opposite to the arrow of the even site just below
    f = field_for(4)
    d = dual_path(f, (3, 12), 12)
    for t in range(12, 0, -1):
        assert d.at(t - 1) == d.at(t) - f.at(d.at(t), t - 1)
    with pytest.raises(ValueError):
        dual_path(f, (2, 12), 3)


def test_rotated_field_is_involution():
    f = field_for(2)
    g = rotated_field(rotated_field(f))
    assert g.window == f.window and np.array_equal(g.alpha, f.alpha)


def test_coalescence_time():
    w = LatticeWindow(-6, 10, 0, 9)
    alpha = np.where(w.even_mask(), -1, 0).astype(np.int8)
    alpha[:, :w.col(2) + 1] = np.where(w.even_mask()[:, :w.col(2) + 1], 1, 0)
    f = ArrowField(w, alpha)
    # left of 2 everyone moves right, from 2 on everyone moves left: paths from 0 and 4 meet at time 2
    assert coalescence_time(f, (0, 0), (4, 0), 5) == 2
    assert coalescence_time(f, (0, 0), (4, 0), 1) is None


@pytest.mark.parametrize("seed", range(10))
def test_switch_point(seed):
    f = field_for(seed)
    z = (0, 4)
    g = switch_point(f, z)
    assert np.array_equal(switch_point(g, z).alpha, f.alpha)
    for x in range(-10, 11, 2):
        old = forward_path(f, (x, 0), 19).positions
        new = forward_path(g, (x, 0), 19).positions
        if old[4] != 0:
            assert np.array_equal(old, new)
            continue
        assert np.array_equal(old[:5], new[:5]) and new[5] != old[5]
        meet = np.nonzero(old[5:] == new[5:])[0]
        if meet.size:
            k = 5 + meet[0]
            assert np.all(old[k:] == new[k:]) and np.all(old[5:k] != new[5:k])


def test_first_passage_cdf_monotone():
    cdf = first_passage_cdf(0.3, 4, 200)
    assert cdf[0] == 0.0 and np.all(np.diff(cdf) >= 0) and cdf[-1] < 1.0
    assert np.all(first_passage_cdf(0.3, 0, 5) == 1.0)
    with pytest.raises(ValueError):
        first_passage_cdf(0.3, 3, 5)


def test_first_passage_cdf_vs_paths():
    mu = M.delta(0.5)
    T, d0 = 20, 2
    hits = []
    w = LatticeWindow(-25, 27, 0, T - 1)
    for seed in range(3000):
        f = field_for(seed, mu, w)
        hits.append(coalescence_time(f, (0, 0), (d0, 0), T) is not None)
    f = np.mean(hits)
    p = first_passage_cdf(0.5, d0, T)[-1]
    assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / len(hits))


def test_quenched_law_from_arrows():
    w = LatticeWindow(-12, 12, 0, 9)
    env = sample_environment(MU, w, 11)
    row = kernel_row(env, 0, 0, 10)
    n = 20000
    ends = np.array([forward_path(sample_alpha(env, s), (0, 0), 10).positions[-1] for s in range(n)])
    for y, p in row.probs.items():
        assert abs((ends == y).mean() - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_path_csv(tmp_path):
    f = field_for(3)
    p = forward_path(f, (0, 0), 3)
    p.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,x" and len(lines) == 5
    d = dual_path(f, (2, 5), 3)
    d.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[1] == "5,2"
