"""The special fourfold ``Y`` through eight general points of ``P^2 x P^5 x P^5``.

Convention: ``C^6`` is identified with ``C^2 (x) C^3`` by
``e_{3j+l} <-> e_j (x) e_l`` (zero-based, ``j`` the ``P^1`` index and ``l``
the ``P^2`` index), i.e. ``q (x) t`` is stored as ``np.kron(t, q)``.  A Segre
embedding ``P^2 x P^1 -> P^5`` is ``s(q, t) = S @ np.kron(t, q)`` with ``S``
invertible.

``Y`` is the image of ``zeta(q, t, t') = q (x) s(q, t) (x) s'(q, t')``, a
Segre-Veronese fourfold of multidegree (3, 1, 1) spanning a ``P^39``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multilinear import (
    DEFAULT_RANK_TOL,
    Shape3,
    SimpleTensor,
    chordal_distance,
    complex_normal,
    numerical_rank,
    rank_gap,
)

__all__ = [
    "DegenerateInputError",
    "ConstructionError",
    "FitProblem",
    "SegreFit",
    "Fourfold",
    "fit_segre_embedding",
    "build_fourfold",
    "evaluate_fourfold",
    "fourfold_jacobian",
    "fiber_vector",
]

X_SHAPE = Shape3(3, 6, 6)
SPAN_DIM = 40
FIT_NULLITY = 4


class DegenerateInputError(ValueError):
    """Input points are not in general position for the construction."""


class ConstructionError(RuntimeError):
    pass


def fiber_vector(q, t) -> np.ndarray:
    """``q (x) t`` in the C^6 ordering used throughout (``np.kron(t, q)``)."""
    return np.kron(t, q)


def _fiber_vector_batch(q, t):
    return np.einsum("...j,...l->...jl", t, q).reshape(q.shape[:-1] + (6,))


def _right_null(v) -> np.ndarray:
    """Orthonormal basis (columns) of ``{r : v^T r = 0}``."""
    _, _, vh = np.linalg.svd(np.atleast_2d(v))
    return vh[1:].conj().T


@dataclass(frozen=True, eq=False)
class FitProblem:
    P: np.ndarray  # (m, 6) points of P^5
    Q: np.ndarray  # (m, 3) points of P^2

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=complex))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=complex))
        if P.shape[1] != 6 or Q.shape[1] != 3 or len(P) != len(Q):
            raise ValueError(f"expected paired (m,6) and (m,3) arrays, got {P.shape} and {Q.shape}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    def check_distinct(self, tol: float = 1e-6) -> None:
        for pts, name in ((self.P, "P"), (self.Q, "Q")):
            for i in range(len(pts)):
                for j in range(i):
                    if chordal_distance(pts[i], pts[j]) <= tol:
                        raise DegenerateInputError(f"points {name}{j} and {name}{i} coincide")


@dataclass(frozen=True, eq=False)
class SegreFit:
    S: np.ndarray
    t: np.ndarray  # (m, 2)
    residuals: np.ndarray  # chordal distances, (m,)
    nullity: int
    gap: float

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.S))

    def embed(self, q, t) -> np.ndarray:
        return self.S @ fiber_vector(q, t)


def fit_conditions(fp: FitProblem) -> np.ndarray:
    """Rows of the linear system on ``vec(M)`` (row-major) for ``M P_i in Q_i (x) C^2``.

    Each pair contributes four rows: the annihilator of ``Q_i (x) C^2`` under
    the bilinear pairing is spanned by ``e_j (x) r`` with ``r^T Q_i = 0``.
    """
    rows = []
    for p, q in zip(fp.P, fp.Q):
        R = _right_null(q)
        for j in range(2):
            for r in R.T:
                w = np.kron(np.eye(2)[j], r)
                rows.append(np.kron(w, p))
    return np.array(rows)


def fit_segre_embedding(fp: FitProblem, rng, rel_tol: float = DEFAULT_RANK_TOL, max_draws: int = 20) -> SegreFit:
    """Find ``S`` with ``P_i`` on the line ``s({Q_i} x P^1)`` for all ``i``.

    Solves for ``M = S^{-1}`` as the nullspace of a ``4m x 36`` system and
    draws a random invertible element of it.
    """
    fp.check_distinct()
    A = fit_conditions(fp)
    r = numerical_rank(A, rel_tol)
    nullity = 36 - r
    if nullity != FIT_NULLITY:
        raise DegenerateInputError(f"fit nullspace has dimension {nullity}, expected {FIT_NULLITY}")
    gap = rank_gap(A, r)
    _, _, vh = np.linalg.svd(A)
    null = vh[r:].conj().T  # (36, 4)
    for _ in range(max_draws):
        M = (null @ complex_normal(rng, nullity)).reshape(6, 6)
        if np.linalg.cond(M) < 1e8:
            break
    else:
        raise ConstructionError(f"no invertible nullspace element in {max_draws} draws")
    S = np.linalg.inv(M)
    ts, res = [], []
    for p, q in zip(fp.P, fp.Q):
        basis = np.kron(np.eye(2), q[:, None])  # columns e_j (x) q
        t = np.linalg.lstsq(basis, M @ p, rcond=None)[0]
        ts.append(t)
        res.append(chordal_distance(S @ fiber_vector(q, t), p))
    return SegreFit(S, np.array(ts), np.array(res), nullity, gap)


@dataclass(frozen=True, eq=False)
class Fourfold:
    anchors: tuple[SimpleTensor, ...]
    fit_b: SegreFit
    fit_c: SegreFit
    span_basis: np.ndarray = field(repr=False)  # (40, 108), orthonormal rows
    anchor_params: np.ndarray = field(repr=False)  # (8, 7): q | t | t'
    span_gap: float = float("inf")

    # the abstract model's interface: 7 affine parameters, 40 coordinates
    n_params = 7
    ambient_dim = SPAN_DIM
    dims = (3, 2, 2)
    variety_dim = 4

    @property
    def S(self):
        return self.fit_b.S

    @property
    def S_prime(self):
        return self.fit_c.S

    def split(self, u):
        u = np.asarray(u, dtype=complex)
        return u[..., :3], u[..., 3:5], u[..., 5:7]

    def join(self, q, t, s):
        return np.concatenate([np.asarray(q), np.asarray(t), np.asarray(s)], axis=-1)

    def random_params(self, rng, size=()):
        size = (size,) if isinstance(size, int) else tuple(size)
        return complex_normal(rng, size + (7,))

    def ambient(self, u) -> np.ndarray:
        """``zeta(u)`` in ``C^108``; batched over leading axes."""
        q, t, s = self.split(u)
        y1 = _fiber_vector_batch(q, t) @ self.S.T
        y2 = _fiber_vector_batch(q, s) @ self.S_prime.T
        out = np.einsum("...i,...j,...k->...ijk", q, y1, y2)
        return out.reshape(out.shape[:-3] + (108,))

    def ambient_jacobian(self, u) -> np.ndarray:
        """(..., 108, 7) derivative of ``zeta``."""
        q, t, s = self.split(u)
        S, Sp = self.S, self.S_prime
        y1 = _fiber_vector_batch(q, t) @ S.T
        y2 = _fiber_vector_batch(q, s) @ Sp.T
        lead = q.shape[:-1]
        e3, e2 = np.eye(3), np.eye(2)
        # d y1 / d q_i = S (t (x) e_i);  d y1 / d t_j = S (e_j (x) q)
        dy1_dq = np.einsum("xjl,...j,li->...xi", S.reshape(6, 2, 3), t, e3)
        dy2_dq = np.einsum("xjl,...j,li->...xi", Sp.reshape(6, 2, 3), s, e3)
        dy1_dt = np.einsum("xjl,ji,...l->...xi", S.reshape(6, 2, 3), e2, q)
        dy2_ds = np.einsum("xjl,ji,...l->...xi", Sp.reshape(6, 2, 3), e2, q)
        Jq = (
            np.einsum("ai,...b,...c->...abci", e3, y1, y2)
            + np.einsum("...a,...bi,...c->...abci", q, dy1_dq, y2)
            + np.einsum("...a,...b,...ci->...abci", q, y1, dy2_dq)
        ).reshape(lead + (108, 3))
        Jt = np.einsum("...a,...bi,...c->...abci", q, dy1_dt, y2).reshape(lead + (108, 2))
        Js = np.einsum("...a,...b,...ci->...abci", q, y1, dy2_ds).reshape(lead + (108, 2))
        return np.concatenate([Jq, Jt, Js], axis=-1)

    def evaluate(self, u) -> np.ndarray:
        """Coordinates of ``zeta(u)`` in ``span_basis``."""
        return self.ambient(u) @ self.span_basis.conj().T

    def jacobian(self, u) -> np.ndarray:
        return self.span_basis.conj() @ self.ambient_jacobian(u)

    def span_residual(self, v) -> float:
        """Relative norm of the part of ``v`` outside the span."""
        v = np.asarray(v, dtype=complex).reshape(-1)
        inside = self.span_basis.T @ (self.span_basis.conj() @ v)
        return float(np.linalg.norm(v - inside) / np.linalg.norm(v))

    def anchor_distances(self) -> np.ndarray:
        return np.array(
            [chordal_distance(self.ambient(u), x.full().reshape(-1)) for u, x in zip(self.anchor_params, self.anchors)]
        )

    def segre_point(self, u) -> SimpleTensor:
        """``zeta(u)`` as a simple tensor of ``X``."""
        q, t, s = self.split(np.asarray(u, dtype=complex))
        return SimpleTensor(q, self.S @ fiber_vector(q, t), self.S_prime @ fiber_vector(q, s))

    def to_json(self) -> dict:
        from .jsonio import SCHEMA_VERSION, encode_complex

        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "fourfold",
            "convention": "C^6 = C^2 (x) C^3 via e_{3j+l} <-> e_j (x) e_l; s(q,t) = S kron(t, q)",
            "S": encode_complex(self.S),
            "S_prime": encode_complex(self.S_prime),
            "anchors": [{"a": encode_complex(x.a), "b": encode_complex(x.b), "c": encode_complex(x.c)} for x in self.anchors],
            "anchor_params": encode_complex(self.anchor_params),
            "span_basis": encode_complex(self.span_basis),
            "fit_nullity": [self.fit_b.nullity, self.fit_c.nullity],
            "fit_residuals": list(self.fit_b.residuals) + list(self.fit_c.residuals),
            "span_gap": self.span_gap,
        }


def build_fourfold(points, rng, rel_tol: float = DEFAULT_RANK_TOL, n_samples: int = 2 * SPAN_DIM) -> Fourfold:
    """Construct ``Y`` through eight simple tensors of shape (3, 6, 6)."""
    points = tuple(points)
    if len(points) != 8 or any(p.shape != X_SHAPE for p in points):
        raise ValueError("need exactly 8 simple tensors of shape (3, 6, 6)")
    Q = np.array([p.a for p in points])
    fit_b = fit_segre_embedding(FitProblem(np.array([p.b for p in points]), Q), rng, rel_tol)
    fit_c = fit_segre_embedding(FitProblem(np.array([p.c for p in points]), Q), rng, rel_tol)
    anchor_params = np.concatenate([Q, fit_b.t, fit_c.t], axis=1)

    proto = Fourfold(points, fit_b, fit_c, np.zeros((SPAN_DIM, 108)), anchor_params)
    samples = proto.ambient(complex_normal(rng, (n_samples, 7)))
    r = numerical_rank(samples, rel_tol)
    if r != SPAN_DIM:
        raise ConstructionError(f"span of Y has dimension {r}, expected {SPAN_DIM}")
    gap = rank_gap(samples, r)
    _, _, vh = np.linalg.svd(samples)
    return Fourfold(points, fit_b, fit_c, vh[:SPAN_DIM], anchor_params, gap)


def evaluate_fourfold(Y: Fourfold, u) -> tuple[np.ndarray, np.ndarray]:
    """``(ambient vector in C^108, coordinates in span_basis)``."""
    u = np.asarray(u, dtype=complex)
    for part in Y.split(u):
        if not np.any(part):
            raise ValueError("every factor of the parameter triple must be nonzero")
    v = Y.ambient(u)
    return v, Y.span_basis.conj() @ v


def fourfold_jacobian(Y: Fourfold, u) -> np.ndarray:
    """40 x 7 derivative in span coordinates."""
    return Y.jacobian(np.asarray(u, dtype=complex))
