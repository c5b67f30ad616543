import json

import pytest

from tensorid import jsonio, pipeline
from tensorid.decomposer import SolverConfig
from tensorid.multilinear import derive_rng, sample_segre_point
from tensorid.pipeline import contact_check, sample_anchors, tangent_span_dim, verify_unidentifiability
from tensorid.secant import GenericityError
from tensorid.tangential import FiberConfig


@pytest.fixture(scope="module")
def theorem_report():
    return verify_unidentifiability(42, SolverConfig(num_starts=400), FiberConfig(num_starts=1000, patience=400))


def test_theorem_chain(theorem_report):
    rep = theorem_report
    assert rep.verdict
    assert [s.name for s in rep.stages] == [
        "secant_dimension", "fourfold", "span_contains_Q", "secant_fill_of_Y", "tangential_degree", "multistart"]
    assert rep.secant_dim_check.projective_dim == 103
    assert rep.fourfold["span_projective_dim"] == 8 * 4 + 8 - 1
    assert rep.span_contains_Q and rep.Q_span_residual < 1e-8
    assert rep.secant_fill_of_Y.affine_dim == 40
    assert rep.tangential_degree.count == 6
    assert rep.multistart.distinct_count >= 6


def test_theorem_report_json(theorem_report):
    js = json.loads(jsonio.dumps(theorem_report.to_json()))
    assert js["verdict"] == "pass" and js["schema_version"] == jsonio.SCHEMA_VERSION
    assert js["config"]["solver"]["num_starts"] == 400
    assert js["multistart"]["distinct_count"] >= 6


def test_reseed_once_then_report(monkeypatch):
    calls = []

    def failing(seed, attempt, *args):
        calls.append(attempt)
        raise GenericityError("forced", [1, 2])

    monkeypatch.setattr(pipeline, "_run", failing)
    rep = verify_unidentifiability(0)
    assert calls == [0, 1]
    assert not rep.verdict
    assert rep.stages[-1].name == "generic_position"


def test_contact_check():
    rep = contact_check(1, n_points=20)
    assert (rep.dim_eight_tangent_span, rep.dim_augmented_span) == (104, 104)
    assert rep.per_point_dims == [104] * 20
    assert rep.negative_control_dim > 104
    assert rep.gap_eight > 1e6 and rep.gap_augmented > 1e6
    assert rep.passed and rep.to_json()["verdict"] == "pass"


def test_single_tangent_space_dim():
    assert tangent_span_dim([sample_segre_point((3, 6, 6), derive_rng(0))]) == 13


def test_anchors_are_seeded():
    a, b = sample_anchors(3), sample_anchors(3)
    assert all((x.full() == y.full()).all() for x, y in zip(a, b))
    assert not (sample_anchors(4)[0].full() == a[0].full()).all()
