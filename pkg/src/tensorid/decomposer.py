"""Multistart complex CP decomposition and counting of inequivalent decompositions.

One start goes through three stages, all vectorized over a batch of starts:

1. ALS sweeps (optional, ``als_max_iters``);
2. Levenberg-Marquardt on the variable-projection residual: the factor of
   the largest mode is eliminated by linear least squares, so the iteration
   only moves the two other factor matrices;
3. Levenberg-Marquardt on the full residual ``T - sum a(x)b(x)c`` over all
   three factors, to ``polish_tol``.

The residual is holomorphic in the factors, so the complex Gauss-Newton step
``(J^H J + mu D) dx = J^H r`` is the real Gauss-Newton step on paired reals.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .multilinear import Decomposition, Shape3, SimpleTensor, Tensor3, canonical_rep, complex_normal, derive_rng

log = logging.getLogger(__name__)

STARTS_KEY = 101

SUCCESS = "success"
NO_CONVERGENCE = "no_convergence"
DEGENERATE = "degenerate"
NONFINITE = "nonfinite"


@dataclass(frozen=True)
class SolverConfig:
    num_starts: int = 2000
    als_max_iters: int = 0
    als_rel_tol: float = 1e-10
    gn_max_iters: int = 400
    polish_max_iters: int = 30
    polish_tol: float = 1e-14
    success_residual: float = 1e-8
    cluster_tol: float = 1e-6
    degenerate_ratio: float = 1e6
    batch_size: int = 250
    seed: int = 0
    debug: bool = False

    def __post_init__(self):
        for name in ("als_rel_tol", "polish_tol", "success_residual", "cluster_tol", "degenerate_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.success_residual < self.polish_tol:
            raise ValueError("success_residual must be >= polish_tol")
        if self.num_starts < 0 or self.batch_size < 1:
            raise ValueError("num_starts must be >= 0 and batch_size >= 1")

    def replace(self, **kw) -> "SolverConfig":
        return SolverConfig(**{**asdict(self), **kw})


def _tensor_array(T) -> np.ndarray:
    return T.data if isinstance(T, Tensor3) else np.asarray(T, dtype=complex)


def _gram(X):
    return np.conj(np.swapaxes(X, -1, -2)) @ X


def _solve_normal(H, Mt):
    """Solve ``H X^T = M^T`` for a batch; singular items fall back to lstsq."""
    try:
        return np.swapaxes(np.linalg.solve(H, Mt), -1, -2)
    except np.linalg.LinAlgError:
        return np.swapaxes(np.array([np.linalg.lstsq(h, m, rcond=None)[0] for h, m in zip(H, Mt)]), -1, -2)


def _model(A, B, C):
    return np.einsum("nir,njr,nkr->nijk", A, B, C)


def _objective(T, A, B, C):
    return np.linalg.norm((T[None] - _model(A, B, C)).reshape(len(A), -1), axis=1)


def als(T, A, B, C, max_iters: int, rel_tol: float = 1e-10, debug: bool = False):
    """Batched ALS.  Returns the factors and the objective history ``(iters+1, n)``."""
    T = _tensor_array(T)
    hist = [_objective(T, A, B, C)]
    for _ in range(max_iters):
        with np.errstate(all="ignore"):
            A = _solve_normal(_gram(B) * _gram(C), np.swapaxes(np.einsum("ijk,njr,nkr->nir", T, B.conj(), C.conj()), 1, 2))
            B = _solve_normal(_gram(A) * _gram(C), np.swapaxes(np.einsum("ijk,nir,nkr->njr", T, A.conj(), C.conj()), 1, 2))
            C = _solve_normal(_gram(A) * _gram(B), np.swapaxes(np.einsum("ijk,nir,njr->nkr", T, A.conj(), B.conj()), 1, 2))
        f = _objective(T, A, B, C)
        if debug:
            prev = hist[-1]
            ok = ~np.isfinite(f) | (f <= prev * (1 + 1e-10) + 1e-14 * np.linalg.norm(T))
            assert ok.all(), "ALS objective increased"
        hist.append(f)
        with np.errstate(all="ignore"):
            if np.all(~np.isfinite(f) | (hist[-2] - f <= rel_tol * hist[-2])):
                break
    return A, B, C, np.array(hist)


def _varpro_lm(M, B, C, max_iters: int, tol: float):
    """LM over ``(B, C)`` for ``M^T ~ (B (*) C) X`` with ``X`` eliminated.

    ``M`` is ``I x (J K)``; returns normalized ``B, C``, the eliminated
    coefficients ``X`` (``n x R x I``) and relative residuals.
    """
    I = M.shape[0]
    n, J, R = B.shape
    K = C.shape[1]
    nt = np.linalg.norm(M)
    npar = (J + K) * R
    rt = np.concatenate([np.tile(np.arange(R), J), np.tile(np.arange(R), K)])
    eJ, eK, eye = np.eye(J), np.eye(K), np.eye(npar)

    def state(B, C):
        Kr = np.einsum("njr,nkr->njkr", B, C).reshape(len(B), J * K, R)
        Q, Rr = np.linalg.qr(Kr)
        QhM = np.conj(np.swapaxes(Q, 1, 2)) @ M.T
        res = M.T[None] - Q @ QhM
        return Q, Rr, QhM, res, np.linalg.norm(res.reshape(len(B), -1), axis=1)

    B = B / np.linalg.norm(B, axis=1, keepdims=True)
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    Q, Rr, QhM, res, f = state(B, C)
    mu = np.full(n, 1e-2)
    for _ in range(max_iters):
        idx = np.flatnonzero((f > tol * nt) & (mu < 1e8) & np.isfinite(f))
        if idx.size == 0:
            break
        na = idx.size
        Ba, Ca = B[idx], C[idx]
        Qa = Q[idx].reshape(na, J, K, R)
        with np.errstate(all="ignore"):
            X = np.linalg.solve(Rr[idx], QhM[idx])
            Rres = res[idx].reshape(na, J, K, I)
            # J^H r, with r already orthogonal to span(K)
            gB = np.einsum("njki,nkr,nri->njr", Rres, Ca.conj(), X.conj())
            gC = np.einsum("njki,njr,nri->nkr", Rres, Ba.conj(), X.conj())
            g = np.concatenate([gB.reshape(na, -1), gC.reshape(na, -1)], axis=1)
            # J^H J = (D^H (I - P) D) o W,  D = dK/dparams,  W_rs = sum_i conj(X_ri) X_si
            DD = np.zeros((na, npar, npar), dtype=complex)
            DD[:, : J * R, : J * R] = np.einsum("ab,nrs->narbs", eJ, _gram(Ca)).reshape(na, J * R, J * R)
            DD[:, J * R :, J * R :] = np.einsum("ab,nrs->narbs", eK, _gram(Ba)).reshape(na, K * R, K * R)
            BC = np.einsum("nbr,nas->narbs", Ca.conj(), Ba).reshape(na, J * R, K * R)
            DD[:, : J * R, J * R :] = BC
            DD[:, J * R :, : J * R] = np.conj(np.swapaxes(BC, 1, 2))
            QD = np.concatenate(
                [
                    np.einsum("naks,nkr->nsar", Qa.conj(), Ca).reshape(na, R, J * R),
                    np.einsum("njas,njr->nsar", Qa.conj(), Ba).reshape(na, R, K * R),
                ],
                axis=2,
            )
            W = X.conj() @ np.swapaxes(X, 1, 2)
            G = (DD - np.conj(np.swapaxes(QD, 1, 2)) @ QD) * W[:, rt][:, :, rt]
            dmax = np.real(np.diagonal(G, axis1=1, axis2=2)).max(axis=1)
            try:
                step = np.linalg.solve(G + (mu[idx] * dmax)[:, None, None] * eye, g[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.array([np.linalg.lstsq(Gi + m * d * eye, gi, rcond=None)[0]
                                 for Gi, m, d, gi in zip(G, mu[idx], dmax, g)])
            Bn = Ba + step[:, : J * R].reshape(na, J, R)
            Cn = Ca + step[:, J * R :].reshape(na, K, R)
            Bn /= np.linalg.norm(Bn, axis=1, keepdims=True)
            Cn /= np.linalg.norm(Cn, axis=1, keepdims=True)
            Qn, Rn, QhMn, resn, fn = state(Bn, Cn)
        good = np.isfinite(fn) & (fn < f[idx])
        gi = idx[good]
        B[gi], C[gi], Q[gi], Rr[gi], QhM[gi], res[gi], f[gi] = (
            Bn[good], Cn[good], Qn[good], Rn[good], QhMn[good], resn[good], fn[good])
        mu[gi] = np.maximum(mu[gi] / 3, 1e-12)
        bad = idx[~good]
        mu[bad] = mu[bad] * 4
    with np.errstate(all="ignore"):
        X = np.linalg.solve(Rr, QhM)
    return B, C, X, f / nt


def _full_jacobian(A, B, C):
    n, I, R = A.shape
    J, K = B.shape[1], C.shape[1]
    JA = np.einsum("ia,njr,nkr->nijkar", np.eye(I), B, C).reshape(n, I * J * K, I * R)
    JB = np.einsum("nir,ja,nkr->nijkar", A, np.eye(J), C).reshape(n, I * J * K, J * R)
    JC = np.einsum("nir,njr,ka->nijkar", A, B, np.eye(K)).reshape(n, I * J * K, K * R)
    return np.concatenate([JA, JB, JC], axis=2)


def _balance(A, B, C):
    """Rescale each term so its three factors have equal norm."""
    na, nb, nc = (np.linalg.norm(X, axis=1, keepdims=True) for X in (A, B, C))
    w = np.cbrt(na * nb * nc)
    with np.errstate(all="ignore"):
        return A * (w / na), B * (w / nb), C * (w / nc)


def polish(T, A, B, C, max_iters: int, tol: float):
    """LM on the full residual; returns factors and relative residuals."""
    T = _tensor_array(T)
    n, I, R = A.shape
    J, K = B.shape[1], C.shape[1]
    t = T.reshape(-1)
    nt = np.linalg.norm(t)
    sizes = np.cumsum([0, I * R, J * R, K * R])

    def split(x):
        m = len(x)
        return (x[:, sizes[0]:sizes[1]].reshape(m, I, R), x[:, sizes[1]:sizes[2]].reshape(m, J, R),
                x[:, sizes[2]:].reshape(m, K, R))

    A, B, C = _balance(A, B, C)
    x = np.concatenate([A.reshape(n, -1), B.reshape(n, -1), C.reshape(n, -1)], axis=1)
    r = t[None] - _model(A, B, C).reshape(n, -1)
    f = np.linalg.norm(r, axis=1)
    mu = np.full(n, 1e-8)
    eye = np.eye(x.shape[1])
    for _ in range(max_iters):
        idx = np.flatnonzero((f > tol * nt) & (mu < 1e4) & np.isfinite(f))
        if idx.size == 0:
            break
        with np.errstate(all="ignore"):
            Jm = _full_jacobian(*split(x[idx]))
            JH = np.conj(np.swapaxes(Jm, 1, 2))
            G = JH @ Jm
            g = (JH @ r[idx][..., None])[..., 0]
            dmax = np.real(np.diagonal(G, axis1=1, axis2=2)).max(axis=1)
            try:
                dx = np.linalg.solve(G + (mu[idx] * dmax)[:, None, None] * eye, g[..., None])[..., 0]
            except np.linalg.LinAlgError:
                dx = np.array([np.linalg.lstsq(Gi + m * d * eye, gi, rcond=None)[0]
                               for Gi, m, d, gi in zip(G, mu[idx], dmax, g)])
            xn = x[idx] + dx
            rn = t[None] - _model(*split(xn)).reshape(idx.size, -1)
            fn = np.linalg.norm(rn, axis=1)
        good = np.isfinite(fn) & (fn < f[idx])
        gi = idx[good]
        x[gi], r[gi], f[gi] = xn[good], rn[good], fn[good]
        mu[gi] = np.maximum(mu[gi] / 10, 1e-15)
        bad = idx[~good]
        mu[bad] = mu[bad] * 10
    A, B, C = _balance(*split(x))
    return A, B, C, f / nt


def _elimination_mode(dims, k):
    """Largest mode whose complement can hold ``k`` independent rank-1 matrices."""
    for m in sorted(range(3), key=lambda m: (-dims[m], m)):
        others = [dims[i] for i in range(3) if i != m]
        if k < others[0] * others[1]:
            return m
    return None


@dataclass
class BatchResult:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    residual: np.ndarray
    status: list
    als_history: np.ndarray | None = None


def run_starts(T, starts, cfg: SolverConfig) -> BatchResult:
    """Run all three stages on a batch of starts ``(A, B, C)`` of shapes ``(n, n_m, k)``."""
    T = _tensor_array(T)
    A, B, C = (np.array(X, dtype=complex) for X in starts)
    n, k = A.shape[0], A.shape[2]
    nt = np.linalg.norm(T)
    hist = None
    if cfg.als_max_iters:
        A, B, C, hist = als(T, A, B, C, cfg.als_max_iters, cfg.als_rel_tol, cfg.debug)
    e = _elimination_mode(T.shape, k)
    if e is not None:
        facs = [A, B, C]
        m1, m2 = [m for m in range(3) if m != e]
        M = np.moveaxis(T, e, 0).reshape(T.shape[e], -1)
        F1, F2, X, _ = _varpro_lm(M, facs[m1], facs[m2], cfg.gn_max_iters, 1e-12)
        facs[e], facs[m1], facs[m2] = np.swapaxes(X, 1, 2), F1, F2
        A, B, C = facs
    else:
        A, B, C, _ = polish(T, A, B, C, cfg.gn_max_iters, 1e-12)
    finite = np.all(np.isfinite(A.reshape(n, -1)), axis=1) & np.all(np.isfinite(B.reshape(n, -1)), axis=1) \
        & np.all(np.isfinite(C.reshape(n, -1)), axis=1)
    res = np.full(n, np.inf)
    close = np.zeros(n, dtype=bool)
    if finite.any():
        fi = np.flatnonzero(finite)
        res[fi] = _objective(T, A[fi], B[fi], C[fi]) / nt
        close[fi] = res[fi] < 1e-4
    if close.any():
        ci = np.flatnonzero(close)
        A[ci], B[ci], C[ci], res[ci] = polish(T, A[ci], B[ci], C[ci], cfg.polish_max_iters, cfg.polish_tol)
    status = []
    for i in range(n):
        if not finite[i] or not np.isfinite(res[i]):
            status.append(NONFINITE)
            continue
        scale = np.linalg.norm(A[i], axis=0) * np.linalg.norm(B[i], axis=0) * np.linalg.norm(C[i], axis=0)
        if scale.max() > cfg.degenerate_ratio * nt:
            status.append(DEGENERATE)
        elif res[i] < cfg.success_residual:
            status.append(SUCCESS)
        else:
            status.append(NO_CONVERGENCE)
    return BatchResult(A, B, C, res, status, hist)


def decompose_once(T, k: int, start: Decomposition, cfg: SolverConfig = SolverConfig()) -> Decomposition | None:
    """Decompose ``T`` as a sum of ``k`` simple tensors from one start; ``None`` on failure."""
    if k < 1 or start.k != k:
        raise ValueError(f"start has {start.k} terms, expected k={k} >= 1")
    T = _tensor_array(T)
    if start.shape.dims != T.shape:
        raise ValueError(f"start shape {start.shape.dims} does not match tensor shape {T.shape}")
    out = run_starts(T, [X[None] for X in start.factor_matrices()], cfg)
    if out.status[0] != SUCCESS:
        log.debug("start failed: %s (residual %.3e)", out.status[0], out.residual[0])
        return None
    return Decomposition.from_factors(out.A[0], out.B[0], out.C[0])


def relative_residual(T, d: Decomposition) -> float:
    T = _tensor_array(T)
    A, B, C = d.factor_matrices()
    return float(_objective(T, A[None], B[None], C[None])[0] / np.linalg.norm(T))


def canonical_term(term: SimpleTensor) -> SimpleTensor:
    """``b`` and ``c`` made canonical unit vectors; ``a`` carries the scale and phase."""
    b = canonical_rep(term.b)
    c = canonical_rep(term.c)
    a = term.a * np.vdot(b, term.b) * np.vdot(c, term.c)
    return SimpleTensor(a, b, c)


def _term_key(term: SimpleTensor) -> tuple:
    v = np.concatenate([term.b, term.c, canonical_rep(term.a)])
    return tuple(np.round(np.concatenate([v.real, v.imag]), 6)) + tuple(np.concatenate([v.real, v.imag]))


def canonicalize(d: Decomposition) -> Decomposition:
    """Canonical representative of the class of ``d`` under term order and scaling.

    Each term becomes ``a (x) b (x) c`` with ``b, c`` unit vectors whose
    first non-negligible coordinate is positive real, so the remaining
    scalar ``|a|`` is the single positive weight of the term; terms are
    sorted by a key built from these coordinates.
    """
    terms = sorted((canonical_term(t) for t in d.terms), key=_term_key)
    return Decomposition(tuple(terms), d.shape)


def decomposition_key(d: Decomposition) -> tuple:
    return tuple(_term_key(t) for t in canonicalize(d).terms)


def _factor_sin2(X, Y):
    """Squared sines of angles between unit columns: ``out[i, j]`` for ``X[:, i], Y[:, j]``."""
    X = X / np.linalg.norm(X, axis=0)
    Y = Y / np.linalg.norm(Y, axis=0)
    G = X.conj().T @ Y
    resid = Y[:, None, :] - X[:, :, None] * G[None]
    return np.minimum(np.sum(np.abs(resid) ** 2, axis=0), 1.0)


def term_distances(d1: Decomposition, d2: Decomposition) -> np.ndarray:
    """Chordal distances between the rank-1 terms as points of ``P^N``."""
    logc = np.zeros((d1.k, d2.k))
    for X, Y in zip(d1.factor_matrices(), d2.factor_matrices()):
        logc += np.log1p(-np.minimum(_factor_sin2(X, Y), 1 - 1e-300))
    return np.sqrt(np.clip(-np.expm1(logc), 0.0, 1.0))


def equivalent(d1: Decomposition, d2: Decomposition, tol: float = 1e-6) -> bool:
    """Same set of projective terms, matched by an optimal assignment."""
    if d1.k != d2.k or d1.shape != d2.shape:
        raise ValueError(f"cannot compare decompositions with k={d1.k}, {d2.k} / shapes {d1.shape.dims}, {d2.shape.dims}")
    cost = term_distances(d1, d2)
    rows, cols = linear_sum_assignment(cost)
    return bool(cost[rows, cols].max() < tol)


@dataclass(frozen=True, eq=False)
class DecompositionClass:
    representative: Decomposition
    members_found: int
    best_residual: float

    def to_json(self) -> dict:
        from .jsonio import decomposition_to_json

        return {
            "members_found": self.members_found,
            "best_residual": self.best_residual,
            "weights": [float(np.linalg.norm(t.a)) for t in self.representative.terms],
            "decomposition": decomposition_to_json(self.representative),
        }


def cluster(decomps, residuals, tol: float) -> list[DecompositionClass]:
    """Group decompositions into equivalence classes, independently of input order."""
    items = sorted(
        ((decomposition_key(d), float(r), canonicalize(d)) for d, r in zip(decomps, residuals)),
        key=lambda x: (x[0], x[1]),
    )
    groups: list[list] = []
    for key, res, d in items:
        for g in groups:
            if equivalent(g[0][2], d, tol):
                g.append((key, res, d))
                break
        else:
            groups.append([(key, res, d)])
    classes = []
    for g in groups:
        key, res, rep = min(g, key=lambda x: (x[1], x[0]))
        classes.append((key, DecompositionClass(rep, len(g), res)))
    return [c for _, c in sorted(classes, key=lambda x: x[0])]


def tensor_id(T) -> str:
    data = np.ascontiguousarray(_tensor_array(T), dtype=complex)
    return hashlib.sha256(data.tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class MultiplicityReport:
    tensor_id: str
    k: int
    classes: list
    starts_used: int
    status_counts: dict
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def distinct_count(self) -> int:
        return len(self.classes)

    @property
    def successes(self) -> int:
        return self.status_counts.get(SUCCESS, 0)

    def to_json(self) -> dict:
        from .jsonio import SCHEMA_VERSION

        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "multiplicity",
            "tensor_id": self.tensor_id,
            "k": self.k,
            "distinct_count": self.distinct_count,
            "starts_used": self.starts_used,
            "status_counts": dict(sorted(self.status_counts.items())),
            "basin_counts": [c.members_found for c in self.classes],
            "classes": [c.to_json() for c in self.classes],
            "seed": self.config.seed,
            "config": asdict(self.config),
        }


def random_starts(shape: Shape3, k: int, n: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(complex_normal(rng, (n, dim, k)) for dim in shape.dims)


def multistart_decompose(T, k: int, cfg: SolverConfig = SolverConfig(), extra_starts=()) -> MultiplicityReport:
    """Decompose from ``cfg.num_starts`` Gaussian starts and count distinct classes.

    ``extra_starts`` (decompositions) are run before the random ones.
    """
    if not isinstance(T, Tensor3):
        T = Tensor3(Shape3(*np.shape(T)), T)
    rng = derive_rng(cfg.seed, STARTS_KEY)
    A, B, C = random_starts(T.shape, k, cfg.num_starts, rng)
    if extra_starts:
        mats = [d.factor_matrices() for d in extra_starts]
        A, B, C = (np.concatenate([np.array([m[i] for m in mats]), X]) for i, X in enumerate((A, B, C)))
    found, residuals, statuses = [], [], Counter()
    n = len(A)
    for lo in range(0, n, cfg.batch_size):
        sl = slice(lo, min(n, lo + cfg.batch_size))
        out = run_starts(T.data, (A[sl], B[sl], C[sl]), cfg)
        statuses.update(out.status)
        for i, st in enumerate(out.status):
            if st == SUCCESS:
                found.append(Decomposition.from_factors(out.A[i], out.B[i], out.C[i]))
                residuals.append(out.residual[i])
        log.info("starts %d/%d: %d successes", sl.stop, n, statuses[SUCCESS])
    classes = cluster(found, residuals, cfg.cluster_tol)
    return MultiplicityReport(tensor_id(T), k, classes, n, dict(statuses), cfg)
