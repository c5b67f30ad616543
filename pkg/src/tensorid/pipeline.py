"""End-to-end checks: non-identifiability of rank-8 tensors in C^3 (x) C^6 (x) C^6
and the tangency of the contact fourfold.

Random streams are derived from the user seed as
``derive_rng(seed, attempt, STAGE_KEYS[stage])``; the multistart solver uses
its own key (``decomposer.STARTS_KEY``) under ``SolverConfig.seed``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .decomposer import MultiplicityReport, SolverConfig, multistart_decompose
from .fourfold import X_SHAPE, ConstructionError, DegenerateInputError, Fourfold, build_fourfold
from .jsonio import SCHEMA_VERSION
from .multilinear import DEFAULT_RANK_TOL, Tensor3, complex_normal, derive_rng, numerical_rank, rank_gap, sample_segre_point
from .secant import GenericityError, SecantDimension, Segre, terracini_dimension
from .tangential import (
    DegenerateCentersError,
    FiberConfig,
    FiberResult,
    SolverIncompleteError,
    fiber_count,
    random_tangential_projection,
)

log = logging.getLogger(__name__)

K = 8
MIN_DECOMPOSITIONS = 6
SEGRE_TANGENT_SPAN = 104

STAGE_KEYS = {
    "terracini": 1,
    "points": 2,
    "fourfold": 3,
    "combination": 4,
    "secant_of_y": 5,
    "tangential": 6,
    "contact": 7,
    "negative_control": 8,
}

GENERIC_POSITION_ERRORS = (
    GenericityError,
    DegenerateInputError,
    ConstructionError,
    DegenerateCentersError,
    SolverIncompleteError,
)


class UnexpectedRankError(RuntimeError):
    """A rank that the geometry pins down came out different."""


def _rng(seed, attempt, stage):
    return derive_rng(seed, attempt, STAGE_KEYS[stage])


def sample_anchors(seed: int, attempt: int = 0):
    rng = _rng(seed, attempt, "points")
    return tuple(sample_segre_point(X_SHAPE, rng) for _ in range(K))


def segre_tangent_matrix(points) -> np.ndarray:
    """Stacked affine tangent spaces of ``X`` at the given simple tensors (columns)."""
    param = Segre(X_SHAPE)
    params = np.array([np.concatenate([p.a, p.b, p.c]) for p in points])
    return np.concatenate(list(param.jacobian(params)), axis=1)


def tangent_span_dim(points, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    return numerical_rank(segre_tangent_matrix(points), rel_tol)


@dataclass
class Stage:
    name: str
    passed: bool
    detail: str

    def to_json(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class TheoremReport:
    seed: int
    attempt: int = 0
    secant_dim_check: SecantDimension | None = None
    fourfold: dict = field(default_factory=dict)
    fourfold_ok: bool = False
    span_contains_Q: bool = False
    Q_span_residual: float = float("nan")
    secant_fill_of_Y: SecantDimension | None = None
    tangential_degree: FiberResult | None = None
    multistart: MultiplicityReport | None = None
    stages: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return len(self.stages) == 6 and all(s.passed for s in self.stages)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "theorem",
            "seed": self.seed,
            "attempt": self.attempt,
            "verdict": "pass" if self.verdict else "fail",
            "stages": [s.to_json() for s in self.stages],
            "secant_dim_check": self.secant_dim_check.to_json() if self.secant_dim_check else None,
            "fourfold": self.fourfold,
            "fourfold_ok": self.fourfold_ok,
            "span_contains_Q": self.span_contains_Q,
            "Q_span_residual": self.Q_span_residual,
            "secant_fill_of_Y": self.secant_fill_of_Y.to_json() if self.secant_fill_of_Y else None,
            "tangential_degree": self.tangential_degree.to_json() if self.tangential_degree else None,
            "multistart": self.multistart.to_json() if self.multistart else None,
            "config": self.config,
        }


def _fourfold_summary(Y: Fourfold, Q: np.ndarray | None = None) -> dict:
    return {
        "fit_nullity": [Y.fit_b.nullity, Y.fit_c.nullity],
        "fit_residual_max": float(max(Y.fit_b.residuals.max(), Y.fit_c.residuals.max())),
        "fit_condition": [Y.fit_b.condition, Y.fit_c.condition],
        "span_dim": int(Y.span_basis.shape[0]),
        "span_projective_dim": int(Y.span_basis.shape[0]) - 1,
        "span_gap": Y.span_gap,
        "anchor_distance_max": float(Y.anchor_distances().max()),
    }


def fourfold_passes(Y: Fourfold, tol: float = 1e-8) -> bool:
    s = _fourfold_summary(Y)
    return (s["fit_nullity"] == [4, 4] and s["fit_residual_max"] < tol and s["span_dim"] == 40
            and s["anchor_distance_max"] < tol)


def _run(seed: int, attempt: int, cfg: SolverConfig, fiber_cfg: FiberConfig, rel_tol: float) -> TheoremReport:
    rep = TheoremReport(seed=seed, attempt=attempt)
    rep.config = {"solver": asdict(cfg), "fiber": asdict(fiber_cfg), "rank_tol": rel_tol}

    sd = terracini_dimension(Segre(X_SHAPE), K, _rng(seed, attempt, "terracini"), rel_tol)
    rep.secant_dim_check = sd
    rep.stages.append(Stage("secant_dimension", sd.projective_dim == 103 and sd.defect == 0,
                            f"dim S_8(X) = {sd.projective_dim} (expected {sd.expected_projective_dim}, gap {sd.gap:.2e})"))

    anchors = sample_anchors(seed, attempt)
    Y = build_fourfold(anchors, _rng(seed, attempt, "fourfold"), rel_tol)
    rep.fourfold = _fourfold_summary(Y)
    rep.fourfold_ok = fourfold_passes(Y)
    rep.stages.append(Stage("fourfold", rep.fourfold_ok,
                            f"span dim {rep.fourfold['span_dim']}, anchors to {rep.fourfold['anchor_distance_max']:.1e}"))

    coeffs = complex_normal(_rng(seed, attempt, "combination"), K)
    Q = sum(c * x.full() for c, x in zip(coeffs, anchors))
    rep.Q_span_residual = Y.span_residual(Q.reshape(-1))
    rep.span_contains_Q = rep.Q_span_residual < 1e-8
    rep.stages.append(Stage("span_contains_Q", rep.span_contains_Q, f"residual {rep.Q_span_residual:.2e}"))

    fill = terracini_dimension(Y, K, _rng(seed, attempt, "secant_of_y"), rel_tol)
    rep.secant_fill_of_Y = fill
    rep.stages.append(Stage("secant_fill_of_Y", fill.affine_dim == 40, f"dim S_8(Y) = {fill.projective_dim} in P^39"))

    trng = _rng(seed, attempt, "tangential")
    fr = fiber_count(random_tangential_projection(Y, trng, rel_tol), trng, fiber_cfg)
    rep.tangential_degree = fr
    ok = fr.count >= MIN_DECOMPOSITIONS and fr.residual_max < 1e-10 and fr.min_jacobian_sv > fiber_cfg.reduced_tol
    rep.stages.append(Stage("tangential_degree", ok,
                            f"{fr.count} reduced fiber points (residual {fr.residual_max:.1e}, sv {fr.min_jacobian_sv:.1e})"))

    ms = multistart_decompose(Tensor3(X_SHAPE, Q), K, cfg.replace(seed=seed))
    rep.multistart = ms
    rep.stages.append(Stage("multistart", ms.distinct_count >= MIN_DECOMPOSITIONS,
                            f"{ms.distinct_count} inequivalent decompositions from {ms.starts_used} starts"))
    if fr.count == ms.distinct_count == MIN_DECOMPOSITIONS:
        log.info("fiber count and decomposition count agree at %d", MIN_DECOMPOSITIONS)
    return rep


def verify_unidentifiability(seed: int, cfg: SolverConfig = SolverConfig(), fiber_cfg: FiberConfig = FiberConfig(),
                             rel_tol: float = DEFAULT_RANK_TOL) -> TheoremReport:
    """Run the six-stage chain; one re-seed on a generic-position failure."""
    for attempt in (0, 1):
        try:
            return _run(seed, attempt, cfg, fiber_cfg, rel_tol)
        except GENERIC_POSITION_ERRORS as exc:
            log.warning("attempt %d failed on generic position: %s", attempt, exc)
            last = exc
    rep = TheoremReport(seed=seed, attempt=1)
    rep.stages.append(Stage("generic_position", False, f"{type(last).__name__}: {last}"))
    return rep


@dataclass
class ContactReport:
    seed: int
    dim_eight_tangent_span: int
    dim_augmented_span: int
    per_point_dims: list
    negative_control_dim: int
    gap_eight: float
    gap_augmented: float
    n_points: int

    @property
    def passed(self) -> bool:
        return (self.dim_eight_tangent_span == SEGRE_TANGENT_SPAN and self.dim_augmented_span == SEGRE_TANGENT_SPAN
                and all(d == SEGRE_TANGENT_SPAN for d in self.per_point_dims)
                and self.negative_control_dim > SEGRE_TANGENT_SPAN)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "contact",
            "seed": self.seed,
            "dim_eight_tangent_span": self.dim_eight_tangent_span,
            "dim_augmented_span": self.dim_augmented_span,
            "per_point_dims": self.per_point_dims,
            "negative_control_dim": self.negative_control_dim,
            "gap_eight": self.gap_eight,
            "gap_augmented": self.gap_augmented,
            "n_points": self.n_points,
            "verdict": "pass" if self.passed else "fail",
        }


def contact_check(seed: int, n_points: int = 50, rel_tol: float = DEFAULT_RANK_TOL) -> ContactReport:
    """Tangent spaces of ``X`` along ``Y`` stay inside the span of the eight anchor tangent spaces."""
    anchors = sample_anchors(seed)
    Y = build_fourfold(anchors, _rng(seed, 0, "fourfold"), rel_tol)
    base = segre_tangent_matrix(anchors)
    r0 = numerical_rank(base, rel_tol)
    if r0 != SEGRE_TANGENT_SPAN:
        raise UnexpectedRankError(f"8 tangent spaces of X span {r0}, expected {SEGRE_TANGENT_SPAN}")
    rng = _rng(seed, 0, "contact")
    extra = [Y.segre_point(u) for u in Y.random_params(rng, n_points)]
    per_point = [numerical_rank(np.concatenate([base, segre_tangent_matrix([y])], axis=1), rel_tol) for y in extra]
    augmented = np.concatenate([base, segre_tangent_matrix(extra)], axis=1)
    r1 = numerical_rank(augmented, rel_tol)
    off_y = sample_segre_point(X_SHAPE, _rng(seed, 0, "negative_control"))
    neg = numerical_rank(np.concatenate([base, segre_tangent_matrix([off_y])], axis=1), rel_tol)
    return ContactReport(seed, r0, r1, per_point, neg, rank_gap(base, r0), rank_gap(augmented, r1), n_points)
