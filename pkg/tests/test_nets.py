import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hwflow.environment import (
    ArrowPairField,
    MarkField,
    net_to_environment,
    sample_net_environment,
    sample_pair_field,
)
from hwflow.errors import MissingMark, OutOfWindow
from hwflow.estimators import density_estimate, relevant_count_estimate
from hwflow.lattice import LatticeWindow
from hwflow.measures import CharacteristicMeasure as M
from hwflow.measures import FlowParams
from hwflow.nets import (
    ReachSet,
    density_exact,
    density_plateau,
    density_table,
    net_flow_kernel,
    psi_continuum,
    reach_history,
    reach_to_csv,
    reachable_brute_force,
    reachable_set,
    relevant_continuum,
    relevant_expected,
    relevant_mask,
    relevant_separation_points,
    sample_web_in_net,
    survival_curve,
)
from hwflow.walks import kernel_row
from hwflow.webs import forward_path

P = FlowParams(0.2, M(((0.3, 0.6),), ((2.0, 3.0, 0.8),)))


def test_reach_set_parity():
    assert ReachSet(1, [3, -1]).positions == (-1, 3)
    with pytest.raises(ValueError):
        ReachSet(0, [1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**63), st.floats(-1.0, 1.0), st.floats(0.0, 2.0))
def test_reachable_vs_brute_force(seed, bm, width):
    bp = min(1.0, bm + width)
    w = LatticeWindow(-12, 14, 0, 7)
    pair = sample_pair_field(bm, bp, w, seed)
    A = [-2, 0, 4]
    assert reachable_set(pair, A, 0, 8) == reachable_brute_force(pair, A, 0, 8)


def test_reach_is_additive():
    w = LatticeWindow(-30, 30, 0, 19)
    pair = sample_pair_field(-0.4, 0.3, w, 5)
    a = set(reachable_set(pair, [-4, 0], 0, 20).positions)
    b = set(reachable_set(pair, [6], 0, 20).positions)
    assert set(reachable_set(pair, [-4, 0, 6], 0, 20).positions) == a | b


@pytest.mark.parametrize("seed", range(10))
def test_extremal_webs_bound_the_net(seed):
    w = LatticeWindow(-25, 25, 0, 19)
    pair = sample_pair_field(-0.3, 0.3, w, seed)
    hist = reach_history(pair, [0], 0, 20)
    left = forward_path(pair.left(), (0, 0), 20).positions
    right = forward_path(pair.right(), (0, 0), 20).positions
    for k in range(21):
        occ = np.nonzero(hist[k])[0] + w.x_min
        assert occ.min() == left[k] and occ.max() == right[k]


def test_reach_errors():
    pair = sample_pair_field(-0.5, 0.5, LatticeWindow(-4, 4, 0, 3), 1)
    with pytest.raises(ValueError):
        reachable_set(pair, [1], 0, 2)
    with pytest.raises(OutOfWindow):
        reachable_set(pair, [0], 0, 5)


def test_edge_drift():
    bm, bp, T = -0.2, 0.4, 60
    w = LatticeWindow(-T, T, 0, T - 1)
    edges = np.array([reachable_set(sample_pair_field(bm, bp, w, s), [0], 0, T).positions[-1]
                      for s in range(600)]) / T
    assert abs(edges.mean() - bp) <= 3 * edges.std(ddof=1) / math.sqrt(edges.size)


def test_density_exact_properties():
    assert density_exact(-0.1, 0.1, 0) == 1.0
    curve = survival_curve(-0.1, 0.1, 2000)
    assert np.all(np.diff(curve) <= 1e-16)
    assert curve[-1] == pytest.approx(density_plateau(-0.1, 0.1), rel=1e-6)
    assert density_plateau(0.2, 0.2) == 0.0
    assert density_exact(-1.0, 1.0, 50) == 1.0


def test_density_mc_small():
    est = density_estimate(-0.05, 0.05, 60, 400, seed=3)
    assert est.within(density_exact(-0.05, 0.05, 60))


@pytest.mark.parametrize("b,t", [(0.0, 0.5), (1.0, 1.0), (2.0, 0.1)])
def test_psi_continuum_limits(b, t):
    v = psi_continuum(b, t)
    assert v >= 2 * b
    assert psi_continuum(b, 1e-8) == pytest.approx(1 / math.sqrt(math.pi * 1e-8), rel=1e-3)
    if b > 0:
        assert psi_continuum(b, 400.0) == pytest.approx(2 * b, rel=1e-6)
    with pytest.raises(ValueError):
        psi_continuum(b, 0.0)


def test_density_rescaled_converges():
    errs = []
    for eps in [0.08, 0.04, 0.02, 0.01]:
        val = density_exact(-eps, eps, int(1 / eps**2)) / (2 * eps)
        errs.append(abs(val / psi_continuum(1.0, 1.0) - 1))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_density_table_csv(tmp_path):
    rows = density_table(-0.05, 0.05, 0.05, [0.5, 1.0], tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,psi_discrete,psi_continuum" and len(lines) == 3
    assert float(lines[2].split(",")[1]) == rows[1][1]


def test_relevant_continuum_value():
    assert relevant_continuum(1.0, 1.0) == pytest.approx(11.886419752539618, rel=1e-10)


def test_relevant_discrete_approaches_continuum():
    target = relevant_continuum(1.0, 1.0)
    ratios = [relevant_expected(-e, e, 0, int(1 / e**2)) / (2 * e) / target for e in [0.08, 0.04, 0.02]]
    assert ratios[0] < ratios[1] < ratios[2] < 1.0


def _brute_relevant(pair, S, U):
    """Forward net from every even site at S, dual net from every odd site at U, both clipped to the window."""
    w = pair.window
    fwd = {S: {x for x in w.xs() if (x + S) % 2 == 0}}
    for t in range(S, U - 1):
        nxt = set()
        for x in fwd[t]:
            for a in (pair.alpha_l[w.row(t), w.col(x)], pair.alpha_r[w.row(t), w.col(x)]):
                if w.x_min <= x + a <= w.x_max:
                    nxt.add(int(x + a))
        fwd[t + 1] = nxt
    dual = {U: {y for y in w.xs() if (y + U) % 2 == 1}}
    for u in range(U, S + 1, -1):
        nxt = set()
        for y in dual[u]:
            for a in (pair.alpha_l[w.row(u - 1), w.col(y)], pair.alpha_r[w.row(u - 1), w.col(y)]):
                if w.x_min <= y - a <= w.x_max:
                    nxt.add(int(y - a))
        dual[u - 1] = nxt
    out = []
    for t in range(S, U):
        for x in sorted(fwd[t]):
            r, c = w.row(t), w.col(x)
            if pair.alpha_l[r, c] < pair.alpha_r[r, c] and x in dual[t + 1]:
                out.append((x, t))
    return sorted(out, key=lambda z: (z[1], z[0]))


@pytest.mark.parametrize("seed", range(8))
def test_relevant_points_vs_brute_force(seed):
    w = LatticeWindow(-10, 11, 0, 11)
    pair = sample_pair_field(-0.4, 0.4, w, seed)
    got = sorted(relevant_separation_points(pair, 2, 10), key=lambda z: (z[1], z[0]))
    assert got == _brute_relevant(pair, 2, 10)


def test_relevant_count_mc_small():
    est = relevant_count_estimate(-0.1, 0.1, 60, 40, seed=4)
    assert est.within(relevant_expected(-0.1, 0.1, 0, 60))


def test_relevant_mask_errors():
    pair = sample_pair_field(-0.4, 0.4, LatticeWindow(-4, 4, 0, 5), 1)
    with pytest.raises(ValueError):
        relevant_mask(pair, 3, 3)
    with pytest.raises(OutOfWindow):
        relevant_mask(pair, 0, 8)


def test_single_separation_kernel():
    w = LatticeWindow(-4, 4, 0, 3)
    al = np.where(w.even_mask(), 1, 0).astype(np.int8)
    ar = al.copy()
    al[w.row(0), w.col(0)] = -1
    pair = ArrowPairField(w, al, ar)
    marks = MarkField.from_dict(w, {(0, 0): 0.3})
    row = net_flow_kernel(pair, marks, 0, 0, 1)
    assert row.probs == pytest.approx({-1: 0.7, 1: 0.3})
    assert net_flow_kernel(pair, marks, 0, 0, 3).probs == pytest.approx({1: 0.7, 3: 0.3})
    with pytest.raises(MissingMark):
        net_flow_kernel(pair, MarkField(w, np.full(w.shape, np.nan)), 0, 0, 1)


@pytest.mark.parametrize("seed", range(10))
def test_net_kernel_equals_flow_kernel(seed):
    w = LatticeWindow(-16, 16, 0, 15)
    pair, marks = sample_net_environment(P, w, 0.02, seed)
    env = net_to_environment(pair, marks)
    for x in (-2, 0, 2):
        a = net_flow_kernel(pair, marks, x, 0, 14).probs
        b = kernel_row(env, x, 0, 14).probs
        assert set(a) == set(b)
        assert max(abs(a[k] - b[k]) for k in a) <= 1e-12
        # support of the profile is the reachable set
        assert tuple(a) == reachable_set(pair, [x], 0, 14).positions


def test_web_in_net():
    w = LatticeWindow(-20, 20, 0, 19)
    pair = sample_pair_field(-0.5, 0.5, w, 3)
    assert np.array_equal(sample_web_in_net(pair, r=0.0).alpha, pair.alpha_l)
    assert np.array_equal(sample_web_in_net(pair, r=1.0).alpha, pair.alpha_r)
    web = sample_web_in_net(pair, r=0.5, seed=2)
    assert np.all((pair.alpha_l <= web.alpha) & (web.alpha <= pair.alpha_r))
    for x in range(-4, 5, 2):
        reach = reach_history(pair, [x], 0, 15)
        path = forward_path(web, (x, 0), 15).positions
        assert all(reach[k, path[k] - w.x_min] for k in range(16))
    with pytest.raises(ValueError):
        sample_web_in_net(pair, r=1.5)
    with pytest.raises(ValueError):
        sample_web_in_net(pair)
    with pytest.raises(MissingMark):
        sample_web_in_net(pair, marks=MarkField(w, np.full(w.shape, np.nan)))


def test_web_in_net_mark_frequency():
    w = LatticeWindow(0, 599, 0, 299)
    pair = sample_pair_field(-0.6, 0.6, w, 7)
    marks = MarkField.constant(pair, 0.3)
    web = sample_web_in_net(pair, marks=marks, seed=8)
    right = (web.alpha[pair.separation] == 1).astype(float)
    assert abs(right.mean() - 0.3) <= 3 * math.sqrt(0.21 / right.size)


def test_reach_csv(tmp_path):
    reach_to_csv([ReachSet(0, [0, 2]), ReachSet(1, [1])], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["t,x", "0,0", "0,2", "1,1"]
