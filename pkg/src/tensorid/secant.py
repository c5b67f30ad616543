"""Secant dimensions of Segre and Segre-Veronese varieties via Terracini's lemma.

The affine cone over ``S_k(X)`` has, at a general point of the span of
``x_1..x_k``, tangent space equal to the span of the affine tangent spaces at
the ``x_i``.  Stacking ``k`` Jacobians of a parametrization at random points
and taking the numerical rank therefore gives ``dim S_k(X) + 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .multilinear import DEFAULT_RANK_TOL, Shape3, _as_shape, complex_normal, numerical_rank, rank_gap

log = logging.getLogger(__name__)


class GenericityError(RuntimeError):
    """A randomized rank disagreed between independent samples."""

    def __init__(self, message, values=()):
        super().__init__(message)
        self.values = tuple(values)


def monomial_exponents(n: int, d: int) -> np.ndarray:
    """Exponent vectors of all degree-``d`` monomials in ``n`` variables, lexicographic
    (``x0^d`` first)."""
    rows = []
    for idx in combinations_with_replacement(range(n), d):
        e = np.zeros(n, dtype=int)
        for i in idx:
            e[i] += 1
        rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, n)


def eval_monomials(x: np.ndarray, E: np.ndarray) -> np.ndarray:
    """``x`` of shape (..., n) -> (..., m)."""
    return np.prod(x[..., None, :] ** E, axis=-1)


def diff_monomials(x: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Derivatives of the monomials, shape (..., m, n)."""
    n = E.shape[1]
    cols = []
    for i in range(n):
        Ei = E.copy()
        Ei[:, i] = np.maximum(Ei[:, i] - 1, 0)
        cols.append(E[:, i] * np.prod(x[..., None, :] ** Ei, axis=-1))
    return np.stack(cols, axis=-1)


class SegreVeronese:
    """``P^{n1-1} x P^{n2-1} x P^{n3-1}`` embedded by forms of multidegree ``degrees``.

    Coordinates are the products of monomials of each factor, ordered
    lexicographically factor by factor; degrees ``(1,1,1)`` is the Segre
    embedding with the usual ``kron`` ordering.  Parameters are the
    concatenated affine factor vectors.
    """

    def __init__(self, dims, degrees=(1, 1, 1)):
        self.dims = tuple(int(n) for n in dims)
        self.degrees = tuple(int(d) for d in degrees)
        if len(self.dims) != 3 or len(self.degrees) != 3:
            raise ValueError("three factors expected")
        if min(self.dims) < 2 or min(self.degrees) < 1:
            raise ValueError(f"bad factors {self.dims} / degrees {self.degrees}")
        self.exponents = [monomial_exponents(n, d) for n, d in zip(self.dims, self.degrees)]
        self.block_dims = tuple(comb(n + d - 1, d) for n, d in zip(self.dims, self.degrees))
        self.ambient_dim = int(np.prod(self.block_dims))
        self.n_params = sum(self.dims)
        self._offsets = np.cumsum((0,) + self.dims)

    @property
    def name(self) -> str:
        if self.degrees == (1, 1, 1):
            return f"Segre{self.dims}"
        return f"SegreVeronese{self.dims}{self.degrees}"

    @property
    def variety_dim(self) -> int:
        return sum(self.dims) - 3

    def split(self, params):
        params = np.asarray(params, dtype=complex)
        o = self._offsets
        return params[..., o[0]:o[1]], params[..., o[1]:o[2]], params[..., o[2]:o[3]]

    def join(self, x, y, z) -> np.ndarray:
        return np.concatenate([np.asarray(x), np.asarray(y), np.asarray(z)], axis=-1)

    def random_params(self, rng, size=()) -> np.ndarray:
        size = (size,) if isinstance(size, int) else tuple(size)
        return complex_normal(rng, size + (self.n_params,))

    def _blocks(self, params):
        return [eval_monomials(x, E) for x, E in zip(self.split(params), self.exponents)]

    def evaluate(self, params) -> np.ndarray:
        u, v, w = self._blocks(params)
        out = np.einsum("...a,...b,...c->...abc", u, v, w)
        return out.reshape(out.shape[:-3] + (self.ambient_dim,))

    def jacobian(self, params) -> np.ndarray:
        """Shape (..., ambient_dim, n_params)."""
        x, y, z = self.split(params)
        u, v, w = self._blocks(params)
        du, dv, dw = (diff_monomials(s, E) for s, E in zip((x, y, z), self.exponents))
        lead = u.shape[:-1]
        Jx = np.einsum("...ai,...b,...c->...abci", du, v, w).reshape(lead + (self.ambient_dim, self.dims[0]))
        Jy = np.einsum("...a,...bi,...c->...abci", u, dv, w).reshape(lead + (self.ambient_dim, self.dims[1]))
        Jz = np.einsum("...a,...b,...ci->...abci", u, v, dw).reshape(lead + (self.ambient_dim, self.dims[2]))
        return np.concatenate([Jx, Jy, Jz], axis=-1)

    def __repr__(self):
        return self.name


def Segre(shape) -> SegreVeronese:
    return SegreVeronese(_as_shape(shape).dims, (1, 1, 1))


@dataclass(frozen=True)
class SecantDimension:
    k: int
    affine_dim: int
    projective_dim: int
    expected_projective_dim: int
    defect: int
    gap: float

    def to_json(self, seed=None) -> dict:
        out = {
            "k": self.k,
            "affine_dim": self.affine_dim,
            "projective_dim": self.projective_dim,
            "expected": self.expected_projective_dim,
            "defect": self.defect,
            "gap": self.gap,
        }
        if seed is not None:
            out["seed"] = seed
        return out


def terracini_matrix(param: SegreVeronese, k: int, rng) -> np.ndarray:
    pts = param.random_params(rng, k)
    return np.concatenate(list(param.jacobian(pts)), axis=1)


def terracini_dimension(param: SegreVeronese, k: int, rng, rel_tol: float = DEFAULT_RANK_TOL) -> SecantDimension:
    """Dimension of ``S_k`` of ``param`` from two independent Terracini samples."""
    if k < 1:
        raise ValueError("k must be positive")
    ranks, gaps = [], []
    for _ in range(2):
        m = terracini_matrix(param, k, rng)
        r = numerical_rank(m, rel_tol)
        ranks.append(r)
        gaps.append(rank_gap(m, r))
    if ranks[0] != ranks[1]:
        raise GenericityError(f"Terracini rank differs between samples: {ranks}", ranks)
    affine = ranks[0]
    expected = min(param.ambient_dim - 1, k * (param.variety_dim + 1) - 1)
    return SecantDimension(k, affine, affine - 1, expected, expected - (affine - 1), min(gaps))


def expected_secant_dimension(shape, k: int) -> int:
    shape = _as_shape(shape)
    return min(shape.ambient_projective_dim, k * shape.segre_dim + k - 1)


def generic_rank_profile(shape, rng, rel_tol: float = DEFAULT_RANK_TOL) -> tuple[int, list[SecantDimension]]:
    """Walk ``k = 1, 2, ...`` until the secant variety fills the ambient space."""
    shape = _as_shape(shape)
    param = Segre(shape)
    dims = []
    for k in range(1, shape.size + 1):
        sd = terracini_dimension(param, k, rng, rel_tol)
        dims.append(sd)
        if sd.affine_dim == shape.size:
            break
    rank = dims[-1].k
    naive = next(k for k in range(1, shape.size + 1) if expected_secant_dimension(shape, k) == shape.ambient_projective_dim)
    if rank != naive:
        defective = [d.k for d in dims if d.defect]
        log.warning("generic rank %d of %s differs from the dimension count %d (defective at k=%s)",
                    rank, shape.dims, naive, defective)
    return rank, dims


def generic_rank(shape, rng, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    return generic_rank_profile(shape, rng, rel_tol)[0]


@dataclass(frozen=True)
class BalanceClass:
    balanced: bool
    threshold: int
    bound: int
    k: int | None = None

    @property
    def label(self) -> str:
        return "balanced" if self.balanced else "unbalanced"

    @property
    def identifiable(self) -> bool | None:
        """Known only in the unbalanced range, where ``k <= bound`` is an iff."""
        if self.balanced or self.k is None:
            return None
        return self.k <= self.bound


def classify_balance(a1: int, a2: int, a3: int, k: int | None = None) -> BalanceClass:
    """Balanced/unbalanced split for ``P^a1 x P^a2 x P^a3`` with ``a1 <= a2 <= a3``.

    Unbalanced means ``a3 >= (a1+1)(a2+1) - (a1+a2)``; there the variety is
    k-identifiable iff ``k <= (a1+1)(a2+1) - (1+a1+a2)``.
    """
    if not a1 <= a2 <= a3:
        raise ValueError(f"expected a1 <= a2 <= a3, got {(a1, a2, a3)}")
    prod = (a1 + 1) * (a2 + 1)
    threshold = prod - (a1 + a2)
    return BalanceClass(a3 < threshold, threshold, prod - (1 + a1 + a2), k)
