import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorid.decomposer import (
    SolverConfig,
    als,
    canonicalize,
    cluster,
    decompose_once,
    equivalent,
    multistart_decompose,
    polish,
    random_starts,
    relative_residual,
)
from tensorid.multilinear import (
    Decomposition,
    Shape3,
    SimpleTensor,
    Tensor3,
    assemble,
    complex_normal,
    derive_rng,
    random_decomposition,
)

X = Shape3(3, 6, 6)


def _regauge(d, rng, permute=True):
    terms = []
    for t in d.terms:
        lam, mu = complex_normal(rng, 2)
        terms.append(SimpleTensor(t.a / (lam * mu), t.b * lam, t.c * mu))
    order = rng.permutation(len(terms)) if permute else range(len(terms))
    return Decomposition(tuple(terms[i] for i in order), d.shape)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_gauge_invariance(seed):
    rng = derive_rng(seed)
    d = random_decomposition(Shape3(3, 4, 5), 5, rng)
    d2 = _regauge(d, rng)
    assert np.linalg.norm(assemble(d).flat - assemble(d2).flat) < 1e-12 * assemble(d).norm() * 10
    assert equivalent(d, d2)
    c1, c2 = canonicalize(d), canonicalize(d2)
    assert all(np.allclose(x, y) for x, y in zip(c1.factor_matrices(), c2.factor_matrices()))


def test_independent_decompositions_not_equivalent():
    rng = derive_rng(1)
    assert not equivalent(random_decomposition(X, 8, rng), random_decomposition(X, 8, rng))


def test_equivalent_checks_sizes():
    rng = derive_rng(2)
    with pytest.raises(ValueError):
        equivalent(random_decomposition(X, 8, rng), random_decomposition(X, 7, rng))


def test_noisy_copies_polish_to_equivalent():
    rng = derive_rng(3)
    d = random_decomposition(X, 8, rng)
    T = assemble(d).data
    copies = []
    for _ in range(2):
        A, B, C = (F + 1e-9 * complex_normal(rng, F.shape) for F in d.factor_matrices())
        A, B, C, _ = polish(T, A[None], B[None], C[None], 30, 1e-14)
        copies.append(Decomposition.from_factors(A[0], B[0], C[0]))
    assert equivalent(copies[0], copies[1], tol=1e-6)
    assert equivalent(copies[0], d, tol=1e-6)


def test_rank_one_recovery():
    rng = derive_rng(4)
    d0 = random_decomposition(Shape3(3, 4, 5), 1, rng)
    T = assemble(d0)
    start = random_decomposition(Shape3(3, 4, 5), 1, rng)
    d = decompose_once(T, 1, start)
    assert d is not None
    assert relative_residual(T, d) < 1e-10
    assert equivalent(d, d0)


def test_generator_is_a_fixed_point():
    rng = derive_rng(5)
    d0 = random_decomposition(X, 8, rng)
    T = assemble(d0)
    d = decompose_once(T, 8, d0)
    assert d is not None and relative_residual(T, d) < 1e-12
    assert equivalent(d, d0)


def test_decompose_once_argument_checks():
    rng = derive_rng(6)
    d0 = random_decomposition(X, 8, rng)
    with pytest.raises(ValueError):
        decompose_once(assemble(d0), 7, d0)
    with pytest.raises(ValueError):
        decompose_once(assemble(random_decomposition(Shape3(3, 5, 6), 8, rng)), 8, d0)


def test_random_starts_find_other_decompositions():
    rng = derive_rng(7)
    d0 = random_decomposition(X, 8, rng)
    T = assemble(d0)
    rep = multistart_decompose(T, 8, SolverConfig(num_starts=150, seed=7))
    assert rep.distinct_count >= 2
    assert any(not equivalent(c.representative, d0) for c in rep.classes)
    assert any(equivalent(c.representative, d0) for c in rep.classes)
    for c in rep.classes:
        assert relative_residual(T, c.representative) < 1e-10


def test_kruskal_unique_case():
    rng = derive_rng(8)
    d0 = random_decomposition(Shape3(2, 2, 2), 2, rng)
    rep = multistart_decompose(assemble(d0), 2, SolverConfig(num_starts=40, seed=8))
    assert rep.distinct_count == 1
    assert equivalent(rep.classes[0].representative, d0)


def test_zero_successes_gives_empty_report():
    T = Tensor3(Shape3(2, 2, 2), complex_normal(derive_rng(9), 8))
    rep = multistart_decompose(T, 1, SolverConfig(num_starts=10, seed=9))
    assert rep.distinct_count == 0
    assert rep.starts_used == 10
    assert sum(rep.status_counts.values()) == 10
    assert rep.to_json()["classes"] == []


def test_extra_starts_run_first():
    rng = derive_rng(10)
    d0 = random_decomposition(X, 8, rng)
    rep = multistart_decompose(assemble(d0), 8, SolverConfig(num_starts=0, seed=10), extra_starts=[d0])
    assert rep.distinct_count == 1 and rep.starts_used == 1


@pytest.mark.parametrize("seed", range(3))
def test_als_is_monotone(seed):
    rng = derive_rng(seed)
    T = assemble(random_decomposition(Shape3(3, 4, 4), 4, rng)).data
    A, B, C = random_starts(Shape3(3, 4, 4), 4, 30, rng)
    *_, hist = als(T, A, B, C, max_iters=80, rel_tol=0, debug=True)
    assert np.all(np.diff(hist, axis=0) <= 1e-10 * hist[:-1] + 1e-14)


def test_als_stage_in_pipeline():
    rng = derive_rng(11)
    d0 = random_decomposition(Shape3(3, 4, 4), 3, rng)
    rep = multistart_decompose(assemble(d0), 3, SolverConfig(num_starts=20, als_max_iters=20, debug=True, seed=1))
    assert rep.distinct_count == 1


def test_cluster_is_order_independent():
    rng = derive_rng(12)
    d0 = random_decomposition(Shape3(4, 4, 4), 6, derive_rng(0, 1))
    rep = multistart_decompose(assemble(d0), 6, SolverConfig(num_starts=60, seed=2))
    members, res = [], []
    for c in rep.classes:
        for _ in range(c.members_found):
            members.append(_regauge(c.representative, rng))
            res.append(c.best_residual)
    ref = cluster(members, res, 1e-6)
    for _ in range(3):
        perm = rng.permutation(len(members))
        out = cluster([members[i] for i in perm], [res[i] for i in perm], 1e-6)
        assert [c.members_found for c in out] == [c.members_found for c in ref]
        for a, b in zip(out, ref):
            assert all(np.array_equal(x, y) for x, y in zip(a.representative.factor_matrices(),
                                                            b.representative.factor_matrices()))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(success_residual=1e-16, polish_tol=1e-14)
    with pytest.raises(ValueError):
        SolverConfig(batch_size=0)
    assert SolverConfig().replace(seed=3).seed == 3


def test_report_is_seed_deterministic():
    d0 = random_decomposition(Shape3(3, 4, 4), 4, derive_rng(13))
    cfg = SolverConfig(num_starts=30, seed=4)
    a = multistart_decompose(assemble(d0), 4, cfg).to_json()
    b = multistart_decompose(assemble(d0), 4, cfg).to_json()
    from tensorid.jsonio import dumps

    assert dumps(a) == dumps(b)


def test_canonical_representatives_are_fixed_points():
    d0 = random_decomposition(X, 8, derive_rng(14))
    T = assemble(d0)
    rep = multistart_decompose(T, 8, SolverConfig(num_starts=40, seed=14))
    for c in rep.classes:
        A, B, C = c.representative.factor_matrices()
        A, B, C, _ = polish(T.data, A[None], B[None], C[None], 30, 1e-14)
        again = canonicalize(Decomposition.from_factors(A[0], B[0], C[0]))
        drift = max(max(np.linalg.norm(x - y, axis=0)) / max(np.linalg.norm(x, axis=0))
                    for x, y in zip(again.factor_matrices(), c.representative.factor_matrices()))
        assert drift < 1e-10
        assert all(np.allclose(np.linalg.norm(F, axis=0), 1) for F in c.representative.factor_matrices()[1:])


def test_seeded_generator_always_found():
    for seed in range(3):
        d0 = random_decomposition(X, 8, derive_rng(15, seed))
        rep = multistart_decompose(assemble(d0), 8, SolverConfig(num_starts=5, seed=seed), extra_starts=[d0])
        assert any(equivalent(c.representative, d0) for c in rep.classes)
