import warnings

import numpy as np
import pytest

from conftest import fd_jacobian
from tensorid.fourfold import build_fourfold
from tensorid.multilinear import complex_normal, derive_rng, rank_gap
from tensorid.pipeline import sample_anchors
from tensorid.tangential import (
    DegenerateCentersError,
    FiberConfig,
    NonReducedFiberWarning,
    SolverIncompleteError,
    abstract_model,
    canonical_params,
    fiber_count,
    make_tangential_projection,
    param_distance,
    random_tangential_projection,
    reducedness,
    tangent_lines_check,
)

FAST = FiberConfig(num_starts=1000, patience=400)


@pytest.fixture(scope="module")
def abstract_tp():
    return random_tangential_projection(abstract_model(), derive_rng(21))


def test_projection_shapes(abstract_tp):
    tp = abstract_tp
    assert tp.L_basis.shape == (40, 35) and tp.proj.shape == (5, 40)
    assert np.allclose(tp.proj @ tp.L_basis, 0, atol=1e-12)
    assert tp.gap > 1e6


def test_centers_on_fourfold_span_35():
    rng = derive_rng(22)
    Y = build_fourfold(sample_anchors(22), rng)
    tp = random_tangential_projection(Y, rng)
    assert tp.L_basis.shape[1] == 35
    L = np.concatenate(list(Y.jacobian(tp.centers)), axis=1)
    assert rank_gap(L, 35) > 1e6


def test_repeated_centers_are_degenerate():
    model = abstract_model()
    c = model.random_params(derive_rng(23), 7)
    c[6] = c[0]
    with pytest.raises(DegenerateCentersError):
        make_tangential_projection(model, c)


def test_projection_jacobian_fd(abstract_tp):
    u = abstract_model().random_params(derive_rng(24))
    J = abstract_tp.jacobian(u)
    assert np.abs(J - fd_jacobian(abstract_tp, u)).max() < 1e-5 * np.abs(J).max()


def test_tau_kills_tangent_spaces(abstract_tp):
    # points of a center's tangent space map to zero
    model = abstract_model()
    J = model.jacobian(abstract_tp.centers[0])
    v = J @ complex_normal(derive_rng(25), 7)
    assert np.linalg.norm(abstract_tp.proj @ v) < 1e-10 * np.linalg.norm(v)


def test_fiber_count_abstract(abstract_tp):
    fr = fiber_count(abstract_tp, derive_rng(26), FAST)
    assert fr.count == 6
    assert fr.residual_max < 1e-10
    assert fr.min_jacobian_sv > 1e-6
    assert sum(fr.basin_counts) == fr.converged_starts
    assert fr.starts_used <= FAST.num_starts


def test_fiber_count_on_fourfold():
    rng = derive_rng(27)
    Y = build_fourfold(sample_anchors(27), rng)
    fr = fiber_count(random_tangential_projection(Y, rng), rng, FAST)
    assert fr.count == 6 and fr.residual_max < 1e-10


def test_fiber_chart_independence(abstract_tp):
    rng = derive_rng(28)
    u0 = abstract_model().random_params(rng)
    results = [fiber_count(abstract_tp, rng, FAST, u0=u0, chart=(complex_normal(rng, 3), complex_normal(rng, 2)))
               for _ in range(2)]
    a, b = results
    assert a.count == b.count == 6
    for u in a.solutions:
        assert min(param_distance(abstract_tp.model, u, v) for v in b.solutions) < 1e-8


def test_fiber_points_are_gauge_independent(abstract_tp):
    model = abstract_model()
    u = model.random_params(derive_rng(29))
    q, t, s = model.split(u)
    v = np.concatenate([2j * q, -0.5 * t, (1 + 1j) * s])
    assert np.allclose(canonical_params(model, u), canonical_params(model, v))
    assert reducedness(abstract_tp, u) == pytest.approx(reducedness(abstract_tp, v), rel=1e-8)


def test_incomplete_solver_raises(abstract_tp):
    with pytest.raises(SolverIncompleteError):
        fiber_count(abstract_tp, derive_rng(30), FiberConfig(num_starts=2, chunk=2, patience=2, max_iters=1))


def test_nonreduced_warning_is_raised_not_fatal(abstract_tp):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fr = fiber_count(abstract_tp, derive_rng(31), FiberConfig(num_starts=1000, patience=400, reduced_tol=0.5))
    assert fr.count == 6
    assert any(issubclass(w.category, NonReducedFiberWarning) for w in caught)


def test_fiber_result_json(abstract_tp):
    fr = fiber_count(abstract_tp, derive_rng(32), FAST)
    js = fr.to_json()
    assert js["count"] == 6 and len(js["solutions"]) == 6


def test_tangent_lines_abstract():
    model = abstract_model()
    rng = derive_rng(33)
    u = model.random_params(rng)
    assert tangent_lines_check(model, u, rng)
    assert not tangent_lines_check(model, u, rng, perturb=1e-2)


def test_projection_contract(abstract_tp):
    tp = abstract_tp
    assert np.allclose(tp.proj @ tp.proj.conj().T, np.eye(5), atol=1e-12)
    for c in tp.centers:
        assert np.linalg.norm(tp(c)) < 1e-10 * np.linalg.norm(tp.model.evaluate(c))
    rng = derive_rng(34)
    for v in complex_normal(rng, (100, 40)):
        n = np.linalg.norm(tp.proj @ v)
        assert 0 < n <= np.linalg.norm(v) * (1 + 1e-12)


def test_fiber_solutions_separated(abstract_tp):
    fr = fiber_count(abstract_tp, derive_rng(35), FAST)
    sols = fr.solutions
    for i in range(len(sols)):
        assert np.linalg.norm(abstract_tp(sols[i])) > 0
        for j in range(i):
            assert np.linalg.norm(sols[i] - sols[j]) > 1e-4
