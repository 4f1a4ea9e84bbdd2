"""Union-of-subspaces models: subspace selection, projection and sums.

A model describes a family ``S`` of linear subspaces. ``select(v, order)``
returns a member of ``S^order`` (sums of ``order`` members of ``S``) close to
``v``. For k-sparse, block-sparse and low-rank models the selection is the
exact best approximation; for dictionary and analysis models it is a
thresholding surrogate.

Index sets are sorted ``int`` arrays. Ties in thresholding go to the lowest
index.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .operators import AnalysisOperator, ShapeError, SynthesisDictionary

MAX_PUBLIC_ORDER = 2
RANK_DROP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Subspace:
    """A member of ``S^order`` for some model.

    Exactly one of ``support``, ``cosupport``, ``basis`` or ``parts`` carries
    the description, depending on the model variant.
    """

    variant: str
    order: int = 1
    support: Optional[np.ndarray] = None
    cosupport: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    left: Optional[np.ndarray] = None
    right: Optional[np.ndarray] = None
    parts: Optional[tuple] = None

    def __repr__(self):
        if self.support is not None:
            desc = f"support={self.support.tolist()}"
        elif self.cosupport is not None:
            desc = f"|cosupport|={self.cosupport.size}"
        elif self.basis is not None:
            desc = f"dim={self.basis.shape[1]}"
        else:
            desc = f"parts={self.parts}"
        return f"Subspace({self.variant}, order={self.order}, {desc})"


def top_indices(values, count):
    """Sorted indices of the ``count`` largest entries; ties go to the lowest index."""
    count = max(0, min(int(count), values.size))
    order = np.argsort(-np.asarray(values), kind="stable")
    return np.sort(order[:count])


def bottom_indices(values, count):
    """Sorted indices of the ``count`` smallest entries; ties go to the lowest index."""
    count = max(0, min(int(count), values.size))
    order = np.argsort(np.asarray(values), kind="stable")
    return np.sort(order[:count])


def _check_order(order):
    if order not in range(1, MAX_PUBLIC_ORDER + 1):
        raise ValueError(f"selection order must be 1 or 2, got {order}")


def _selection_basis(n, support):
    support = np.asarray(support, dtype=int)
    return sp.csc_matrix((np.ones(support.size), (support, np.arange(support.size))),
                         shape=(n, support.size))


def orthonormalize(columns, tol=RANK_DROP_TOL):
    """Orthonormal basis of the column span, via pivoted QR with a drop tolerance."""
    columns = np.asarray(columns, dtype=float)
    if columns.shape[1] == 0:
        return columns
    q, r, _ = sla.qr(columns, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * max(1.0, diag[0])))
    return q[:, :rank]


class UnionModel:
    """Common interface of all union-of-subspaces models."""

    variant = "abstract"
    exact = False

    def __init__(self, n):
        self.n = int(n)

    # subclasses implement _select, project, sum, basis, _random_base

    def select(self, v, order=1):
        _check_order(order)
        return self._select(self._vector(v), order)

    def _vector(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ShapeError(f"{self.variant}: expected a vector of length {self.n}, got {v.shape}")
        return v

    def _check(self, *subs):
        for s in subs:
            if s.variant != self.variant:
                raise ValueError(f"subspace of model {s.variant!r} used with model {self.variant!r}")

    def project(self, sub, v):
        self._check(sub)
        v = self._vector(v)
        B = self.basis(sub)
        return np.asarray(B @ (B.T @ v)).ravel()

    def dimension(self, sub):
        return self.basis(sub).shape[1]

    def random_subspace(self, order, rng):
        """A random member of ``S^order``: the sum of ``order`` random members of ``S``."""
        sub = self._random_base(rng)
        for _ in range(order - 1):
            sub = self.sum(sub, self._random_base(rng))
        return sub

    def random_signal(self, rng):
        """Random vector in a random member of ``S`` with Gaussian coordinates."""
        B = self.basis(self._random_base(rng))
        coeffs = rng.standard_normal(B.shape[1])
        return np.asarray(B @ coeffs).ravel()

    def width_sample(self, g, order):
        """Per-sample value whose mean estimates ``w(U^order ∩ S^{n-1})``.

        The generic version projects onto the greedy selection, which is a
        lower bound on the supremum.
        """
        sub = self._select(g, order, theory=True)
        return float(np.linalg.norm(self.project(sub, g)))

    sup_exact = False


# -- support-based models ------------------------------------------------------


class _SupportModel(UnionModel):
    def project(self, sub, v):
        self._check(sub)
        v = self._vector(v)
        out = np.zeros_like(v)
        out[sub.support] = v[sub.support]
        return out

    def sum(self, a, b):
        self._check(a, b)
        return Subspace(self.variant, a.order + b.order, support=np.union1d(a.support, b.support))

    def basis(self, sub):
        self._check(sub)
        return _selection_basis(self.n, sub.support)

    def dimension(self, sub):
        return int(sub.support.size)


class KSparseModel(_SupportModel):
    """Vectors in ``R^n`` with at most ``k`` nonzeros (CoSaMP)."""

    variant = "ksparse"
    exact = True
    sup_exact = True

    def __init__(self, n, k):
        super().__init__(n)
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        self.k = int(k)

    def _select(self, v, order, theory=False):
        return Subspace(self.variant, order, support=top_indices(np.abs(v), order * self.k))

    def _random_base(self, rng):
        return Subspace(self.variant, 1, support=np.sort(rng.choice(self.n, self.k, replace=False)))

    def width_sample(self, g, order):
        return float(np.linalg.norm(g[self._select(g, order).support]))

    def __repr__(self):
        return f"KSparseModel(n={self.n}, k={self.k})"


class BlockSparseModel(_SupportModel):
    """``k``-sparse vectors whose nonzeros fill ``k/J`` of the ``n/J`` contiguous blocks."""

    variant = "blocksparse"
    exact = True
    sup_exact = True

    def __init__(self, n, k, J):
        super().__init__(n)
        if J < 1 or n % J or k % J:
            raise ValueError(f"block size J={J} must divide both n={n} and k={k}")
        if not 1 <= k <= n:
            raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
        self.k = int(k)
        self.J = int(J)
        self.blocks = self.n // self.J

    def _blocks_to_support(self, blocks):
        return (blocks[:, None] * self.J + np.arange(self.J)[None, :]).ravel()

    def _top_blocks(self, v, order):
        norms = np.linalg.norm(v.reshape(self.blocks, self.J), axis=1)
        return top_indices(norms, order * self.k // self.J)

    def _select(self, v, order, theory=False):
        blocks = self._top_blocks(v, order)
        return Subspace(self.variant, order, support=self._blocks_to_support(blocks))

    def _random_base(self, rng):
        blocks = np.sort(rng.choice(self.blocks, self.k // self.J, replace=False))
        return Subspace(self.variant, 1, support=self._blocks_to_support(blocks))

    def width_sample(self, g, order):
        return float(np.linalg.norm(g[self._select(g, order).support]))

    def __repr__(self):
        return f"BlockSparseModel(n={self.n}, k={self.k}, J={self.J})"


# -- low rank --------------------------------------------------------------------


class LowRankModel(UnionModel):
    """Rank-``r`` matrices of shape ``n1 x n2`` vectorized row-major (ADMiRA).

    Members of ``S`` are spans of ``r`` orthonormal rank-one matrices
    ``u_i v_i^T``.
    """

    variant = "lowrank"
    exact = True
    sup_exact = True

    def __init__(self, n1, n2, r):
        super().__init__(n1 * n2)
        if not 1 <= r <= min(n1, n2):
            raise ValueError(f"need 1 <= r <= min(n1, n2), got r={r}")
        self.n1, self.n2, self.r = int(n1), int(n2), int(r)

    def matricize(self, v):
        return np.asarray(v, dtype=float).reshape(self.n1, self.n2)

    def _factors_subspace(self, left, right, order):
        basis = np.einsum("ik,jk->ijk", left, right).reshape(self.n, left.shape[1])
        return Subspace(self.variant, order, basis=basis, left=left, right=right)

    def _select(self, v, order, theory=False):
        U, _, Vt = np.linalg.svd(self.matricize(v), full_matrices=False)
        q = min(order * self.r, U.shape[1])
        return self._factors_subspace(U[:, :q], Vt[:q].T, order)

    def project(self, sub, v):
        self._check(sub)
        v = self._vector(v)
        return sub.basis @ (sub.basis.T @ v)

    def sum(self, a, b):
        self._check(a, b)
        basis = orthonormalize(np.hstack([a.basis, b.basis]))
        return Subspace(self.variant, a.order + b.order, basis=basis)

    def basis(self, sub):
        self._check(sub)
        return sub.basis

    def _random_base(self, rng):
        left, _ = np.linalg.qr(rng.standard_normal((self.n1, self.r)))
        right, _ = np.linalg.qr(rng.standard_normal((self.n2, self.r)))
        return self._factors_subspace(left, right, 1)

    def width_sample(self, g, order):
        s = np.linalg.svd(self.matricize(g), compute_uv=False)
        return float(np.linalg.norm(s[: order * self.r]))

    def __repr__(self):
        return f"LowRankModel(n1={self.n1}, n2={self.n2}, r={self.r})"


# -- synthesis and analysis ----------------------------------------------------


def omp_support(D, v, count):
    """Greedy OMP support of size ``count`` for ``v`` in dictionary ``D``."""
    residual = v.copy()
    chosen = []
    for _ in range(min(count, D.atoms)):
        corr = np.abs(D.adjoint(residual))
        if chosen:
            corr[chosen] = -np.inf
        chosen.append(int(np.argmax(corr)))
        Dt = D.columns(chosen)
        coef, *_ = np.linalg.lstsq(Dt, v, rcond=None)
        residual = v - Dt @ coef
    return np.sort(np.array(chosen, dtype=int))


class SynthesisModel(UnionModel):
    """``x = D alpha`` with ``alpha`` ``k``-sparse (SSCoSaMP-style selection)."""

    variant = "synthesis"
    exact = False

    def __init__(self, D, k, selector="threshold"):
        if not isinstance(D, SynthesisDictionary):
            D = SynthesisDictionary(D)
        super().__init__(D.rows)
        if not 1 <= k <= D.atoms:
            raise ValueError(f"need 1 <= k <= d, got k={k}, d={D.atoms}")
        if selector not in ("threshold", "omp"):
            raise ValueError(f"unknown selector {selector!r}")
        self.D = D
        self.k = int(k)
        self.selector = selector

    def _select(self, v, order, theory=False):
        count = order * self.k
        if self.selector == "omp":
            support = omp_support(self.D, v, count)
        else:
            support = top_indices(np.abs(self.D.adjoint(v)), count)
        return Subspace(self.variant, order, support=support)

    def sum(self, a, b):
        self._check(a, b)
        return Subspace(self.variant, a.order + b.order, support=np.union1d(a.support, b.support))

    def basis(self, sub):
        self._check(sub)
        return orthonormalize(self.D.columns(sub.support))

    def _random_base(self, rng):
        return Subspace(self.variant, 1, support=np.sort(rng.choice(self.D.atoms, self.k, replace=False)))

    def random_signal(self, rng):
        sub = self._random_base(rng)
        alpha = np.zeros(self.D.atoms)
        alpha[sub.support] = rng.standard_normal(self.k)
        return self.D.apply(alpha)

    def __repr__(self):
        return f"SynthesisModel({self.D!r}, k={self.k}, selector={self.selector})"


class AnalysisModel(UnionModel):
    """Vectors with ``Omega x`` vanishing on at least ``ell`` rows (ACoSaMP-style).

    Selection keeps a cosupport of size ``ell`` at every order; sums of
    subspaces intersect cosupports. ``theory=True`` in width estimation uses
    the minimal cosupport size ``order*ell - (order-1)*p`` of ``S^order``.
    """

    variant = "analysis"
    exact = False

    def __init__(self, Omega, ell):
        if not isinstance(Omega, AnalysisOperator):
            Omega = AnalysisOperator(Omega)
        super().__init__(Omega.cols)
        if not 0 <= ell <= Omega.rows:
            raise ValueError(f"need 0 <= ell <= p, got ell={ell}, p={Omega.rows}")
        self.Omega = Omega
        self.ell = int(ell)

    def cosupport_size(self, order, theory=False):
        if not theory:
            return self.ell
        return max(0, order * self.ell - (order - 1) * self.Omega.rows)

    def _select(self, v, order, theory=False):
        size = self.cosupport_size(order, theory)
        return Subspace(self.variant, order, cosupport=bottom_indices(np.abs(self.Omega.apply(v)), size))

    def project(self, sub, v):
        self._check(sub)
        return self.Omega.project_null(sub.cosupport, self._vector(v))

    def sum(self, a, b):
        self._check(a, b)
        return Subspace(self.variant, a.order + b.order,
                        cosupport=np.intersect1d(a.cosupport, b.cosupport))

    def basis(self, sub):
        self._check(sub)
        return self.Omega.nullspace_basis(sub.cosupport)

    def _random_base(self, rng):
        cos = np.sort(rng.choice(self.Omega.rows, self.ell, replace=False))
        return Subspace(self.variant, 1, cosupport=cos)

    def __repr__(self):
        return f"AnalysisModel({self.Omega!r}, ell={self.ell})"


# -- combined ----------------------------------------------------------------------


class CombinedModel(UnionModel):
    """Sum of several models: members are sums of one member from each part."""

    variant = "combined"
    exact = False

    def __init__(self, parts):
        parts = tuple(parts)
        if len(parts) < 2:
            raise ValueError("a combined model needs at least two parts")
        dims = {p.n for p in parts}
        if len(dims) != 1:
            raise ValueError(f"parts have different ambient dimensions {dims}")
        super().__init__(dims.pop())
        self.parts = parts

    def _select(self, v, order, theory=False):
        subs = tuple(p._select(v, order, theory=theory) for p in self.parts)
        return Subspace(self.variant, order, parts=subs)

    def sum(self, a, b):
        self._check(a, b)
        subs = tuple(p.sum(x, y) for p, x, y in zip(self.parts, a.parts, b.parts))
        return Subspace(self.variant, a.order + b.order, parts=subs)

    def basis(self, sub):
        self._check(sub)
        blocks = []
        for p, s in zip(self.parts, sub.parts):
            B = p.basis(s)
            blocks.append(B.toarray() if sp.issparse(B) else B)
        return orthonormalize(np.hstack(blocks))

    def _random_base(self, rng):
        return Subspace(self.variant, 1, parts=tuple(p._random_base(rng) for p in self.parts))

    def random_signal(self, rng):
        return sum(p.random_signal(rng) for p in self.parts)

    def __repr__(self):
        return f"CombinedModel({', '.join(repr(p) for p in self.parts)})"


def combined(D, k, Omega, ell):
    """Synthesis + analysis combined model."""
    return CombinedModel([SynthesisModel(D, k), AnalysisModel(Omega, ell)])


# -- functional interface ----------------------------------------------------------


def select_subspace(model, v, order=1):
    return model.select(v, order)


def project(sub, v, model):
    return model.project(sub, v)


def sum_subspaces(a, b, model):
    return model.sum(a, b)


def subspace_basis(sub, model):
    """Orthonormal basis of ``sub`` as a dense ``n x dim`` array."""
    B = model.basis(sub)
    return B.toarray() if sp.issparse(B) else np.asarray(B)
