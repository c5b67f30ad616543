"""Dense complex 3-way tensors, simple tensors and decompositions.

Everything here works in complex double precision.  Index order for the flat
layout is ``i*n2*n3 + j*n3 + k`` (C order), so ``Tensor3.data`` can be
reshaped freely with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_RANK_TOL",
    "Shape3",
    "Tensor3",
    "SimpleTensor",
    "Decomposition",
    "ProjectivePoint",
    "assemble",
    "flatten",
    "unflatten",
    "numerical_rank",
    "rank_gap",
    "chordal_distance",
    "canonical_rep",
    "derive_rng",
    "complex_normal",
    "sample_segre_point",
    "random_decomposition",
    "rank_one_matrix",
]

DEFAULT_RANK_TOL = 1e-8


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Shape3:
    """Dimensions ``(n1, n2, n3)`` of ``C^n1 (x) C^n2 (x) C^n3``."""

    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for n in self:
            if int(n) != n or n < 2:
                raise ValueError(f"every factor dimension must be an integer >= 2, got {tuple(self)}")

    def __iter__(self):
        return iter((self.n1, self.n2, self.n3))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def projective(self) -> tuple[int, int, int]:
        """The ``(a1, a2, a3)`` with ``n_i = a_i + 1``."""
        return (self.n1 - 1, self.n2 - 1, self.n3 - 1)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def ambient_projective_dim(self) -> int:
        return self.size - 1

    @property
    def segre_dim(self) -> int:
        """Dimension of the Segre variety ``P^a1 x P^a2 x P^a3``."""
        return sum(self.projective)


def _as_shape(shape) -> Shape3:
    return shape if isinstance(shape, Shape3) else Shape3(*shape)


@dataclass(frozen=True, eq=False)
class Tensor3:
    shape: Shape3
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = _as_shape(self.shape)
        data = np.asarray(self.data, dtype=complex)
        if data.size != shape.size:
            raise ValueError(f"data has {data.size} entries, shape {shape.dims} needs {shape.size}")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor entries must be finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", _frozen(data.reshape(shape.dims)))

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat))

    def __eq__(self, other):
        return (
            isinstance(other, Tensor3)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class SimpleTensor:
    """The rank-1 tensor ``a (x) b (x) c``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in "abc":
            v = np.asarray(getattr(self, name), dtype=complex).reshape(-1)
            if not np.any(v):
                raise ValueError(f"factor {name} of a simple tensor is zero")
            object.__setattr__(self, name, _frozen(v))

    @property
    def shape(self) -> Shape3:
        return Shape3(len(self.a), len(self.b), len(self.c))

    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.a, self.b, self.c

    def full(self) -> np.ndarray:
        return np.einsum("i,j,k->ijk", self.a, self.b, self.c)

    def scale(self) -> float:
        return float(np.linalg.norm(self.a) * np.linalg.norm(self.b) * np.linalg.norm(self.c))


@dataclass(frozen=True, eq=False)
class Decomposition:
    terms: tuple[SimpleTensor, ...]
    shape: Shape3

    def __post_init__(self):
        terms = tuple(self.terms)
        shape = _as_shape(self.shape)
        if not terms:
            raise ValueError("a decomposition needs at least one term")
        for t in terms:
            if t.shape != shape:
                raise ValueError(f"term of shape {t.shape.dims} in a decomposition of shape {shape.dims}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "shape", shape)

    def __len__(self):
        return len(self.terms)

    @property
    def k(self) -> int:
        return len(self.terms)

    def factor_matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack the factors as columns: shapes ``(n1,k), (n2,k), (n3,k)``."""
        return tuple(np.column_stack([t.factors()[m] for t in self.terms]) for m in range(3))

    @classmethod
    def from_factors(cls, A, B, C) -> "Decomposition":
        A, B, C = (np.asarray(X, dtype=complex) for X in (A, B, C))
        terms = tuple(SimpleTensor(A[:, r], B[:, r], C[:, r]) for r in range(A.shape[1]))
        return cls(terms, Shape3(A.shape[0], B.shape[0], C.shape[0]))


def assemble(d: Decomposition) -> Tensor3:
    A, B, C = d.factor_matrices()
    return Tensor3(d.shape, np.einsum("ir,jr,kr->ijk", A, B, C))


def flatten(t: Tensor3 | np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (modes are 1, 2, 3).

    Rows are indexed by the chosen mode, columns by the remaining two indices
    in lexicographic order.
    """
    data = t.data if isinstance(t, Tensor3) else np.asarray(t)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    moved = np.moveaxis(data, mode - 1, 0)
    return moved.reshape(moved.shape[0], -1)


def unflatten(m: np.ndarray, mode: int, shape) -> Tensor3:
    shape = _as_shape(shape)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    dims = list(shape.dims)
    lead = dims.pop(mode - 1)
    arr = np.asarray(m).reshape([lead] + dims)
    return Tensor3(shape, np.moveaxis(arr, 0, mode - 1))


def _singular_values(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def numerical_rank(m, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol * sigma_max``."""
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    s = _singular_values(m)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def rank_gap(m, rank: int | None = None, rel_tol: float = DEFAULT_RANK_TOL) -> float:
    """Ratio ``sigma_r / sigma_{r+1}`` at the numerical rank ``r``.

    Returns ``inf`` when the rank is full (there is no next singular value)
    or the next singular value is exactly zero.
    """
    s = _singular_values(m)
    if rank is None:
        rank = numerical_rank(m, rel_tol)
    if rank == 0 or rank >= s.size or s[rank] == 0:
        return float("inf")
    return float(s[rank - 1] / s[rank])


def canonical_rep(v) -> np.ndarray:
    """Unit-norm representative whose first non-negligible coordinate is positive real."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("the zero vector is not a projective point")
    v = v / nrm
    # "non-negligible" keeps the choice stable under round-off
    lead = np.flatnonzero(np.abs(v) > 1e-8)[0]
    return v * (abs(v[lead]) / v[lead])


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    rep: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rep", _frozen(canonical_rep(self.rep)))

    @property
    def dim(self) -> int:
        return len(self.rep) - 1


def chordal_distance(p, q) -> float:
    """``sqrt(1 - |<p,q>|^2)`` for unit representatives; accepts raw vectors too."""
    p = p.rep if isinstance(p, ProjectivePoint) else np.asarray(p, dtype=complex).reshape(-1)
    q = q.rep if isinstance(q, ProjectivePoint) else np.asarray(q, dtype=complex).reshape(-1)
    if p.shape != q.shape:
        raise ValueError(f"ambient dimension mismatch: {p.size} vs {q.size}")
    p = p / np.linalg.norm(p)
    q = q / np.linalg.norm(q)
    # norm of the part of p orthogonal to q; no cancellation at small angles
    return float(min(1.0, np.linalg.norm(p - q * np.vdot(q, p))))


# Seed splitting: every experiment gets SeedSequence(seed, spawn_key=keys), where
# keys is a tuple of small integers naming the stage (see pipeline.STAGE_KEYS).
def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex Gaussian entries (real and imaginary parts of variance 1/2)."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def sample_segre_point(shape, rng: np.random.Generator) -> SimpleTensor:
    shape = _as_shape(shape)
    return SimpleTensor(*(complex_normal(rng, n) for n in shape))


def random_decomposition(shape, k: int, rng: np.random.Generator) -> Decomposition:
    shape = _as_shape(shape)
    return Decomposition(tuple(sample_segre_point(shape, rng) for _ in range(k)), shape)


def rank_one_matrix(terms: Sequence[SimpleTensor]) -> np.ndarray:
    """Rows are the flattened rank-1 tensors."""
    return np.array([t.full().reshape(-1) for t in terms])
