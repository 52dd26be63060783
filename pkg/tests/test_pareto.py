import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymptopt.asymptotic import check_condition
from asymptopt.expr import ExprError, VectorObjective, affine, coord, quad
from asymptopt.geometry import Box, GridSpec, Polyhedron, PolyUnion, hausdorff
from asymptopt.pareto import (PreconditionError, SimplexGrid, _dominated, _weak_dominated,
                              _weak_dominated_brute, achievement_psi, discretize, pareto_member,
                              psi_values, scalarization_inclusion, scalarize, sharp_minima_certificate,
                              solve_front, solve_scalar, solve_weak_front, solve_weak_front_report,
                              verify_psi_characterization, weak_mask, weak_pareto_member)

import oracles

HALF_LINE = PolyUnion.single(Polyhedron([[-1.0]], [1.0]))
LINE = PolyUnion.single(Polyhedron.whole_space(1))
X_EXP = coord(0, 1)
F42 = VectorObjective((coord(0, 1), quad([[2.0]])))


def test_simplex_grid():
    S = SimplexGrid(2, 20)
    assert S.points.shape == (21, 2)
    assert np.allclose(S.points.sum(axis=1), 1.0) and np.all(S.points >= 0)
    assert S.interior.sum() == 19
    assert SimplexGrid(3, 20).points.shape[0] == 231


def test_scalarize_examples():
    x = np.array([[0.3], [-2.0]])
    assert np.allclose(scalarize(F42, [1, 0]).eval_many(x), x[:, 0])
    assert np.allclose(scalarize(F42, [0.5, 0.5]).eval_many(x), 0.5 * x[:, 0] + 0.5 * x[:, 0] ** 2)
    f31 = VectorObjective((coord(0, 2), coord(1, 2)))
    assert np.allclose(scalarize(f31, [0.5, 0.5]).eval_many(np.array([[1.0, 3.0]])), [2.0])
    with pytest.raises(ValueError):
        scalarize(F42, [0.7, 0.7])


def test_solve_scalar_examples():
    g = GridSpec(Box.from_bounds([[-2, 10]]), 0.01)
    s = solve_scalar(X_EXP, HALF_LINE, g)
    assert np.array_equal(s.cloud.points, [[-1.0]]) and not s.escape
    g2 = GridSpec(Box.from_bounds([[-10, 10]]), 0.01)
    s = solve_scalar(X_EXP, LINE, g2)
    assert np.array_equal(s.cloud.points, [[-10.0]]) and s.escape
    s = solve_scalar(scalarize(F42, [0.5, 0.5]), HALF_LINE, g)
    assert np.array_equal(s.cloud.points, [[-0.5]]) and not s.escape


def test_membership_examples(ex31, ex42):
    assert weak_pareto_member([-0.5], ex42.f, ex42.X, ex42.g, ex42.data)
    assert not weak_pareto_member([0.5], ex42.f, ex42.X, ex42.g, ex42.data)
    assert not pareto_member([0.0, 1.0], ex31.f, ex31.X, ex31.g, ex31.data)
    assert pareto_member([-1.0, 1.0], ex31.f, ex31.X, ex31.g, ex31.data)
    assert pareto_member([0.5, 0.5], ex31.f, ex31.X, ex31.g, ex31.data)
    assert weak_pareto_member([0.0, 1.0], ex31.f, ex31.X, ex31.g, ex31.data)
    with pytest.raises(PreconditionError):
        weak_pareto_member([5.0, 5.0], ex31.f, ex31.X, ex31.g, ex31.data)


def test_scalar_case_weak_pareto_is_argmin():
    f = VectorObjective((quad([[2.0]], [-1.0]),))
    g = GridSpec(Box.from_bounds([[-3, 3]]), 0.1)
    data = discretize(f, HALF_LINE, g)
    arg = solve_scalar(f.components[0], HALF_LINE, g, data).indices
    assert np.array_equal(np.flatnonzero(weak_mask(data)), arg)


def test_weak_front_examples(ex41, ex42, ex31):
    rep = solve_weak_front_report(ex41.f, ex41.X, ex41.g, ex41.data)
    assert len(rep.cloud) == ex41.data.n_points and rep.escape
    W = solve_weak_front(ex42.f, ex42.X, ex42.g, ex42.data)
    assert hausdorff(W, np.array(oracles.grid_1d(-1, 0, 0.01))[:, None]) == 0.0
    S = solve_front(ex31.f, ex31.X, ex31.g, ex31.data)
    top = S.points[np.isclose(S.points[:, 1], 1.0)]
    assert np.array_equal(top, [[-1.0, 1.0]])


def test_front_masks_match_brute_force_oracle(ex31):
    F = ex31.data.F
    sub = np.arange(0, F.shape[0], 7)
    Fs = F[sub]
    data_weak = np.flatnonzero(~_weak_dominated(Fs, Fs, ex31.data.tau))
    data_strong = np.flatnonzero(~_dominated(Fs, Fs, ex31.data.tau))
    assert data_weak.tolist() == oracles.weak_pareto_indices(Fs.tolist(), ex31.data.tau)
    assert data_strong.tolist() == oracles.pareto_indices(Fs.tolist(), ex31.data.tau)


values = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3), st.lists(st.lists(values, min_size=3, max_size=3), min_size=1, max_size=40),
       st.sampled_from([0.0, 1e-9, 0.5]))
def test_weak_dominance_fast_path_matches_brute_force(m, rows, tau):
    F = np.array(rows)[:, :m]
    # ties are common on a grid: round to force some
    F = np.round(F, 1)
    assert np.array_equal(_weak_dominated(F, F, tau), _weak_dominated_brute(F, F, tau))
    assert np.flatnonzero(~_weak_dominated(F, F, tau)).tolist() == oracles.weak_pareto_indices(F.tolist(), tau)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.lists(st.lists(values, min_size=3, max_size=3), min_size=1, max_size=30))
def test_pareto_subset_of_weak_and_psi_oracle(m, rows):
    F = np.round(np.array(rows)[:, :m], 1)
    strong = ~_dominated(F, F, 0.0)
    weak = ~_weak_dominated(F, F, 0.0)
    assert not np.any(strong & ~weak)
    psi = psi_values(F, F)
    assert np.allclose(psi, [oracles.psi_brute(fx, F.tolist()) for fx in F.tolist()])
    assert np.all(psi >= 0)
    # psi characterization on an exact finite set
    assert np.array_equal(psi <= 0, weak)


def test_psi_examples(ex42):
    assert achievement_psi([-0.5], ex42.f, ex42.X, ex42.g, ex42.data) == 0.0
    ys = oracles.grid_1d(-1, 4, 0.01)
    want = oracles.psi_brute([1.0, 1.0], [[y, y * y] for y in ys])
    assert want == 1.0
    assert achievement_psi([1.0], ex42.f, ex42.X, ex42.g, ex42.data) == pytest.approx(want, abs=1e-12)
    f = VectorObjective((quad([[2.0]]),))
    g = GridSpec(Box.from_bounds([[-2, 2]]), 0.5)
    assert achievement_psi([1.5], f, LINE, g) == pytest.approx(2.25)


def test_psi_characterization(corpus):
    for item in corpus.values():
        rep = verify_psi_characterization(item.f, item.X, item.g, item.data)
        assert rep.ok, item.spec.name


def test_sharp_certificates(ex31, ex41, ex42):
    for item in (ex31, ex42):
        cond = check_condition(item.X, item.f)
        (cert,) = sharp_minima_certificate(item.f, item.X, item.g, (3.0,), cond, item.data)
        assert cert.valid and cert.c1_hat > 0
        assert cert.image_gap_slack >= -1e-6 and cert.norm_gap_slack >= -1e-6
    (c42,) = sharp_minima_certificate(ex42.f, ex42.X, ex42.g, (3.0,), None, ex42.data)
    assert c42.c_hat == pytest.approx(oracles.sharp_ratio_ex42(3.0, 4.0, 0.01), rel=1e-12)
    with pytest.raises(PreconditionError):
        sharp_minima_certificate(ex41.f, ex41.X, ex41.g, (3.0,), check_condition(ex41.X, ex41.f), ex41.data)


def test_sharp_no_far_samples():
    g = GridSpec(Box.from_bounds([[-1, 1]]), 0.1)
    with pytest.raises(ValueError, match="no far samples"):
        sharp_minima_certificate(F42, HALF_LINE, g, (3.0,))


def test_scalarization_inclusion(corpus):
    for item in corpus.values():
        rep = scalarization_inclusion(item.f, item.X, item.g, 20, item.data)
        assert rep.ok, (item.spec.name, rep.to_json())


def test_dimension_mismatch():
    with pytest.raises((ValueError, ExprError)):
        discretize(VectorObjective((affine([1.0, 1.0]),)), HALF_LINE, GridSpec(Box.from_bounds([[0, 1]]), 0.5))
