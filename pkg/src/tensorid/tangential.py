"""Tangential projection of the (3,1,1) fourfold from seven tangent spaces.

Works with any model exposing ``evaluate``/``jacobian``/``split`` over 7
affine parameters ``(q, t, t')`` with 40 output coordinates: the abstract
``SegreVeronese((3, 2, 2), (3, 1, 1))`` or a constructed ``Fourfold``.

The projection ``tau`` kills the 35-dimensional span ``L`` of the seven
affine tangent spaces and lands in ``C^5``.  Its degree is measured by
solving ``tau(u) ~ p`` for a target ``p = tau(u0)``.  The solver works in the
chart ``<r_q, q> = 1, <r_t, t> = 1`` and leaves ``t'`` free; because ``zeta``
is linear in ``t'`` the free scale of ``t'`` absorbs the proportionality
factor, so the system ``tau(u) = p`` is square (5 x 5) and base points of
``tau`` (where ``tau(u) = 0``) are not solutions of it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .multilinear import DEFAULT_RANK_TOL, ProjectivePoint, canonical_rep, chordal_distance, complex_normal, numerical_rank, rank_gap
from .secant import SegreVeronese

log = logging.getLogger(__name__)

N_CENTERS = 7
L_DIM = 35


class DegenerateCentersError(RuntimeError):
    pass


class SolverIncompleteError(RuntimeError):
    pass


class NonReducedFiberWarning(UserWarning):
    pass


def abstract_model() -> SegreVeronese:
    """``P^2 x P^1 x P^1`` in ``P^39`` by forms of multidegree (3, 1, 1)."""
    return SegreVeronese((3, 2, 2), (3, 1, 1))


@dataclass(frozen=True)
class FiberConfig:
    num_starts: int = 2000
    patience: int = 500
    chunk: int = 250
    max_iters: int = 100
    residual_tol: float = 1e-12
    dedup_tol: float = 1e-6
    reduced_tol: float = 1e-6
    divergence: float = 1e8


@dataclass(frozen=True, eq=False)
class TangentialProjection:
    model: object
    centers: np.ndarray  # (7, 7)
    L_basis: np.ndarray = field(repr=False)  # (40, 35) orthonormal columns
    proj: np.ndarray = field(repr=False)  # (5, 40) orthonormal rows
    gap: float = float("inf")

    def __call__(self, u) -> np.ndarray:
        return self.model.evaluate(u) @ self.proj.T

    def jacobian(self, u) -> np.ndarray:
        return self.proj @ self.model.jacobian(u)


def make_tangential_projection(model, centers, rel_tol: float = DEFAULT_RANK_TOL) -> TangentialProjection:
    centers = np.asarray(centers, dtype=complex).reshape(-1, model.n_params)
    if len(centers) != N_CENTERS:
        raise ValueError(f"need {N_CENTERS} centers")
    L = np.concatenate(list(model.jacobian(centers)), axis=1)
    r = numerical_rank(L, rel_tol)
    if r != L_DIM:
        raise DegenerateCentersError(f"tangent spaces span dimension {r}, expected {L_DIM}")
    U, _, _ = np.linalg.svd(L)
    return TangentialProjection(model, centers, U[:, :L_DIM], U[:, L_DIM:].conj().T, rank_gap(L, r))


def random_tangential_projection(model, rng, rel_tol: float = DEFAULT_RANK_TOL) -> TangentialProjection:
    return make_tangential_projection(model, model.random_params(rng, N_CENTERS), rel_tol)


@dataclass(frozen=True, eq=False)
class FiberResult:
    target: ProjectivePoint
    solutions: list  # canonical parameter vectors, (7,) each
    residuals: np.ndarray
    jacobian_svs: np.ndarray  # scale-normalized smallest singular value per solution
    basin_counts: list
    starts_used: int
    converged_starts: int
    newton_ratio_median: float

    @property
    def count(self) -> int:
        return len(self.solutions)

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else float("nan")

    @property
    def min_jacobian_sv(self) -> float:
        return float(np.min(self.jacobian_svs)) if len(self.jacobian_svs) else float("nan")

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "target": self.target.rep,
            "solutions": [np.asarray(s) for s in self.solutions],
            "residuals": list(map(float, self.residuals)),
            "jacobian_svs": list(map(float, self.jacobian_svs)),
            "residual_max": self.residual_max,
            "min_jacobian_sv": self.min_jacobian_sv,
            "basin_counts": list(self.basin_counts),
            "starts_used": self.starts_used,
            "converged_starts": self.converged_starts,
            "newton_ratio_median": self.newton_ratio_median,
        }


def _affine_chart(r):
    """Point ``x0`` with ``r.x0 = 1`` and an orthonormal basis of ``{x : r.x = 0}``."""
    x0 = r.conj() / np.vdot(r, r).real
    _, _, vh = np.linalg.svd(r[None, :])
    return x0, vh[1:].conj().T


def canonical_params(model, u) -> np.ndarray:
    return np.concatenate([canonical_rep(part) for part in model.split(u)])


def param_distance(model, u, v) -> float:
    """Largest chordal distance over the three projective factors."""
    return max(chordal_distance(a, b) for a, b in zip(model.split(u), model.split(v)))


def reducedness(tp: TangentialProjection, u) -> float:
    """Smallest/largest singular value of the fiber system at ``u``.

    Uses the gauge ``tau(u) - lam * p`` in orthonormal local coordinates
    around unit representatives of the three factors, so the number does not
    depend on the chart the solution was found in.
    """
    model = tp.model
    parts = [p / np.linalg.norm(p) for p in model.split(u)]
    u = np.concatenate(parts)
    y = tp(u)
    scale = np.linalg.norm(y)
    J = tp.jacobian(u) / scale
    cols, start = [], 0
    for p in parts:
        comp = _affine_chart(p.conj())[1]  # orthogonal complement of p
        cols.append(J[:, start:start + len(p)] @ comp)
        start += len(p)
    cols.append(-(y / scale)[:, None])
    s = np.linalg.svd(np.concatenate(cols, axis=1), compute_uv=False)
    return float(s[-1] / s[0])


def fiber_count(tp: TangentialProjection, rng, cfg: FiberConfig = FiberConfig(), u0=None, chart=None) -> FiberResult:
    """Count the points of ``tau^{-1}(tau(u0))`` by multistart damped Newton.

    ``chart`` is an optional pair ``(r_q, r_t)`` of covectors fixing the
    affine chart; random when omitted.  ``u0`` defaults to a random point.
    """
    model = tp.model
    nq, nt, ns = model.dims
    u0 = model.random_params(rng) if u0 is None else np.asarray(u0, dtype=complex)
    p = tp(u0)
    if np.linalg.norm(p) == 0:
        raise ValueError("u0 lies in the base locus of the projection")
    p = p / np.linalg.norm(p)

    r_q, r_t = (complex_normal(rng, nq), complex_normal(rng, nt)) if chart is None else chart
    q0, Bq = _affine_chart(np.asarray(r_q, dtype=complex))
    t0, Bt = _affine_chart(np.asarray(r_t, dtype=complex))
    nz = (nq - 1) + (nt - 1) + ns

    def unpack(z):
        q = q0 + z[..., : nq - 1] @ Bq.T
        t = t0 + z[..., nq - 1 : nq + nt - 2] @ Bt.T
        return np.concatenate([q, t, z[..., nq + nt - 2 :]], axis=-1)

    def system(z):
        return tp(unpack(z)) - p

    def system_jac(z):
        J = tp.jacobian(unpack(z))
        return np.concatenate([J[..., :nq] @ Bq, J[..., nq:nq + nt] @ Bt, J[..., nq + nt:]], axis=-1)

    sols, basins, ratios = [], [], []
    converged = 0
    last_new = 0
    used = 0
    while used < cfg.num_starts:
        n = min(cfg.chunk, cfg.num_starts - used)
        z, ok, ratio = _newton_batch(system, system_jac, complex_normal(rng, (n, nz)), cfg)
        for i in range(n):
            if not ok[i]:
                continue
            converged += 1
            ratios.append(ratio[i])
            u = canonical_params(model, unpack(z[i]))
            for j, v in enumerate(sols):
                if param_distance(model, u, v) < cfg.dedup_tol:
                    basins[j] += 1
                    break
            else:
                sols.append(u)
                basins.append(1)
                last_new = used + i + 1
        used += n
        if used - last_new >= cfg.patience:
            break

    order = sorted(range(len(sols)), key=lambda j: tuple(np.round(np.concatenate([sols[j].real, sols[j].imag]), 8)))
    sols = [sols[j] for j in order]
    basins = [basins[j] for j in order]
    residuals = np.array([chordal_distance(tp(u), p) for u in sols])
    svs = np.array([reducedness(tp, u) for u in sols])

    if not any(param_distance(model, canonical_params(model, u0), u) < cfg.dedup_tol for u in sols):
        raise SolverIncompleteError("the constructed preimage u0 was not recovered")
    if np.any(svs <= cfg.reduced_tol):
        warnings.warn(f"fiber point with normalized Jacobian singular value {svs.min():.2e}", NonReducedFiberWarning)
    finite = [r for r in ratios if np.isfinite(r)]
    log.info("fiber: %d points from %d starts (%d converged)", len(sols), used, converged)
    return FiberResult(
        ProjectivePoint(p), sols, residuals, svs, basins, used, converged,
        float(np.median(finite)) if finite else float("nan"),
    )


def _newton_batch(F, JF, z, cfg: FiberConfig):
    """Damped Newton with backtracking on a batch of starts.

    Returns ``(z, converged mask, ratio of the last two step norms)``.
    """
    n = len(z)
    f = F(z)
    nf = np.linalg.norm(f, axis=1)
    alive = np.ones(n, dtype=bool)
    steps = np.full((n, 2), np.nan)
    for _ in range(cfg.max_iters):
        act = np.flatnonzero(alive & (nf > cfg.residual_tol))
        if act.size == 0:
            break
        za, fa = z[act], f[act]
        with np.errstate(all="ignore"):
            try:
                dz = np.linalg.solve(JF(za), -fa[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dz = np.array([np.linalg.lstsq(J, -fi, rcond=None)[0] for J, fi in zip(JF(za), fa)])
            a = np.ones(act.size)
            zn = za + dz
            fn = F(zn)
            nn = np.linalg.norm(fn, axis=1)
            for _ in range(12):
                bad = ~(nn < (1 - a / 4) * nf[act])
                if not bad.any():
                    break
                a[bad] /= 2
                zn[bad] = za[bad] + a[bad, None] * dz[bad]
                fn[bad] = F(zn[bad])
                nn[bad] = np.linalg.norm(fn[bad], axis=1)
        finite = np.isfinite(nn) & np.all(np.isfinite(zn), axis=1)
        upd = act[finite]
        z[upd], f[upd], nf[upd] = zn[finite], fn[finite], nn[finite]
        steps[upd, 0] = steps[upd, 1]
        steps[upd, 1] = a[finite] * np.linalg.norm(dz[finite], axis=1)
        alive[act[~finite]] = False
        alive &= np.linalg.norm(z, axis=1) < cfg.divergence
    ok = alive & (nf <= cfg.residual_tol)
    with np.errstate(all="ignore"):
        ratio = steps[:, 1] / steps[:, 0]
    return z, ok, ratio


def in_tangent_space(model, u, v, rel_tol: float = DEFAULT_RANK_TOL) -> bool:
    """Does ``v`` lie in the affine tangent space of the model at ``u``?"""
    J = model.jacobian(u)
    J = J / np.linalg.norm(J, axis=0)
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    base = numerical_rank(J, rel_tol)
    return numerical_rank(np.concatenate([J, v / np.linalg.norm(v)], axis=1), rel_tol) == base


def curve_points(model, u, factor: int, rng, n: int = 10) -> np.ndarray:
    """Images of ``n`` points on a random line through ``u`` in one factor."""
    parts = list(model.split(np.asarray(u, dtype=complex)))
    d = complex_normal(rng, len(parts[factor]))
    out = []
    for alpha in complex_normal(rng, n):
        moved = list(parts)
        moved[factor] = parts[factor] + alpha * d
        out.append(model.evaluate(np.concatenate(moved)))
    return np.array(out)


def tangent_lines_check(model, u, rng, n_points: int = 10, perturb: float = 0.0,
                        rel_tol: float = DEFAULT_RANK_TOL) -> bool:
    """The lines ``{q} x P^1 x {t'}`` and ``{q} x {t} x P^1`` through ``u`` lie in ``T_u Y``.

    With ``perturb > 0`` each sampled point is pushed off its line by that
    relative amount in a random direction (a negative control).
    """
    results = []
    for factor in (1, 2):
        for v in curve_points(model, u, factor, rng, n_points):
            if perturb:
                w = complex_normal(rng, v.size)
                v = v + perturb * np.linalg.norm(v) * w / np.linalg.norm(w)
            results.append(in_tangent_space(model, u, v, rel_tol))
    return all(results)
