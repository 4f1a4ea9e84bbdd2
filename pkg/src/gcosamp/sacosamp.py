"""Synthesis-analysis CoSaMP for signals ``x = D alpha + x2``.

``alpha`` is ``k``-sparse in the dictionary ``D``; ``Omega x2`` vanishes on at
least ``ell`` rows. Supports are chosen by thresholding ``D^T proxy`` and
cosupports by the smallest entries of ``|Omega proxy|``. The least-squares
step is either one joint problem over both components (``unified``) or two
problems solved one after the other (``split``: dictionary part first, then
the analysis part on what is left).
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .engine import (NumericalAbort, RecoverySettings, _as_operator, cgls, halt_check)
from .metrics import psnr
from .models import bottom_indices, top_indices
from .operators import ShapeError

LS_MODES = ("unified", "split")
RANK_RATIO = 1e-12
REGULARIZER = 1e-10


@dataclass
class CombinedState:
    support: np.ndarray
    cosupport: np.ndarray
    alpha: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    residual: np.ndarray


@dataclass
class SACoSaMPRecord:
    t: int
    residual_norm: float
    subspace_dim: int
    support_size: int
    cosupport_size: int
    merged_support_size: int
    merged_cosupport_size: int
    error_norm: float = math.nan
    intermediate_error_norm: float = math.nan
    psnr_x2: float = math.nan
    ls_iterations: int = 0
    ls_converged: bool = True
    ls_orthogonality: float = 0.0
    regularized: bool = False
    x2_feasibility: float = 0.0


@dataclass
class SACoSaMPTrace:
    records: List[SACoSaMPRecord] = field(default_factory=list)
    halt_reason: Optional[str] = None

    CSV_HEADER = "t,residual_norm,error_norm,intermediate_error_norm,subspace_dim,|T|,|Λ|,psnr_x2"

    @property
    def iterations(self):
        return len(self.records)

    @property
    def residual_norms(self):
        return [r.residual_norm for r in self.records]

    def to_csv(self):
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(f"{r.t},{r.residual_norm!r},{r.error_norm!r},{r.intermediate_error_norm!r},"
                         f"{r.subspace_dim},{r.support_size},{r.cosupport_size},{r.psnr_x2!r}")
        lines.append(f"halt,{self.halt_reason}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


@dataclass
class SACoSaMPResult:
    x1: np.ndarray
    x2: np.ndarray
    x: np.ndarray
    trace: SACoSaMPTrace
    state: CombinedState


@dataclass
class JointLSSolution:
    alpha: np.ndarray
    x2: np.ndarray
    iterations: int
    converged: bool
    regularized: bool
    orthogonality: float


def _dense(B):
    return B.toarray() if sp.issparse(B) else np.asarray(B)


def _solve(M, y, c0, settings):
    """CGLS with a tiny ridge term when the columns of ``M`` are (nearly) dependent."""
    damp = 0.0
    regularized = False
    if M.shape[1]:
        if M.shape[1] > M.shape[0]:
            regularized, scale = True, float(np.sum(M * M))
        else:
            eig = np.linalg.eigvalsh(M.T @ M)
            regularized, scale = bool(eig[0] <= RANK_RATIO * eig[-1]), float(eig[-1])
        if regularized:
            damp = REGULARIZER * scale
    sol = cgls(M, y, c0, settings.ls_max_iterations, settings.ls_tolerance, damp)
    return sol, regularized


def joint_constrained_ls(A, y, D, Omega, merged_support, merged_cosupport, settings=None,
                         alpha0=None, x20=None):
    """Joint least squares over ``alpha`` supported on ``T`` and ``x2`` with ``Omega_Lambda x2 = 0``.

    ``x2`` is parameterized in an orthonormal basis of the null space of
    ``Omega_Lambda``; both blocks are solved together by CGLS.
    """
    settings = settings or RecoverySettings()
    A = _as_operator(A)
    y = np.asarray(y, dtype=float)
    T = np.asarray(merged_support, dtype=int)
    N = Omega.nullspace_basis(np.asarray(merged_cosupport, dtype=int))
    DT = D.columns(T)
    M = np.hstack([A.matmat(DT), A.matmat(N)])
    c0 = None
    if alpha0 is not None or x20 is not None:
        a0 = np.zeros(T.size) if alpha0 is None else np.asarray(alpha0)[T]
        b0 = np.zeros(N.shape[1]) if x20 is None else np.asarray(N.T @ x20).ravel()
        c0 = np.concatenate([a0, b0])
    sol, regularized = _solve(M, y, c0, settings)
    alpha = np.zeros(D.atoms)
    alpha[T] = sol.coords[:T.size]
    x2 = np.asarray(N @ sol.coords[T.size:]).ravel()
    ynorm = np.linalg.norm(y)
    resid = y - M @ sol.coords
    ortho = float(np.max(np.abs(M.T @ resid))) / ynorm if M.shape[1] and ynorm > 0 else 0.0
    return JointLSSolution(alpha, x2, sol.iterations, sol.converged, regularized, ortho)


def split_constrained_ls(A, y, D, Omega, merged_support, merged_cosupport, settings=None,
                         alpha0=None, x20=None):
    """Two separate least-squares fits: dictionary part against ``y - A x2``,
    then the analysis part against ``y - A D alpha``."""
    settings = settings or RecoverySettings()
    A = _as_operator(A)
    y = np.asarray(y, dtype=float)
    T = np.asarray(merged_support, dtype=int)
    x2_prev = np.zeros(A.cols) if x20 is None else np.asarray(x20, dtype=float)

    M1 = A.matmat(D.columns(T))
    c1 = None if alpha0 is None else np.asarray(alpha0)[T]
    sol1, reg1 = _solve(M1, y - A.apply(x2_prev), c1, settings)
    alpha = np.zeros(D.atoms)
    alpha[T] = sol1.coords

    N = Omega.nullspace_basis(np.asarray(merged_cosupport, dtype=int))
    M2 = A.matmat(N)
    target = y - A.apply(D.apply(alpha))
    sol2, reg2 = _solve(M2, target, np.asarray(N.T @ x2_prev).ravel(), settings)
    x2 = np.asarray(N @ sol2.coords).ravel()

    ynorm = np.linalg.norm(y)
    ortho = 0.0
    if ynorm > 0:
        r2 = target - M2 @ sol2.coords
        ortho = float(np.max(np.abs(M2.T @ r2), initial=0.0)) / ynorm
    return JointLSSolution(alpha, x2, sol1.iterations + sol2.iterations,
                           sol1.converged and sol2.converged, reg1 or reg2, ortho)


def _guard(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericalAbort(f"non-finite values after {name}")


def run_sacosamp(A, y, D, Omega, k, ell, ls_mode="unified", settings=None,
                 truth_x1=None, truth_x2=None, peak=255.0):
    """Recover ``x = x1 + x2`` from ``y = A x + e``; returns :class:`SACoSaMPResult`.

    Parameters
    ----------
    A : LinearOperator or ndarray
        Measurement operator, ``m x n``.
    D : SynthesisDictionary
        ``n x d`` dictionary for the sparse component ``x1``.
    Omega : AnalysisOperator
        ``p x n`` analysis operator for the cosparse component ``x2``.
    k, ell : int
        Sparsity of ``alpha`` and cosparsity of ``x2``.
    ls_mode : {"unified", "split"}
        Joint least squares, or two successive per-component fits.
    truth_x1, truth_x2 : ndarray, optional
        Ground truth used only for the trace (error norms and PSNR of ``x2``).
    """
    if ls_mode not in LS_MODES:
        raise ValueError(f"ls_mode must be one of {LS_MODES}, got {ls_mode!r}")
    settings = settings or RecoverySettings()
    A = _as_operator(A)
    y = np.asarray(y, dtype=float)
    n = A.cols
    if y.shape != (A.rows,):
        raise ShapeError(f"measurements have shape {y.shape}, operator is {A.shape}")
    if D.rows != n or Omega.cols != n:
        raise ShapeError("dictionary, analysis operator and measurement operator disagree on n")
    p, d = Omega.rows, D.atoms
    if not 0 <= ell <= p:
        raise ValueError(f"need 0 <= ell <= p, got ell={ell}, p={p}")
    if not 0 <= k <= d:
        raise ValueError(f"need 0 <= k <= d, got k={k}, d={d}")
    truth = None
    if truth_x1 is not None or truth_x2 is not None:
        truth = (np.zeros(n) if truth_x1 is None else truth_x1) + (np.zeros(n) if truth_x2 is None else truth_x2)
    solver = joint_constrained_ls if ls_mode == "unified" else split_constrained_ls

    support = np.array([], dtype=int)
    cosupport = np.arange(p)
    alpha = np.zeros(d)
    x1 = np.zeros(n)
    x2 = np.zeros(n)
    r = y.copy()
    trace = SACoSaMPTrace()
    history = [float(np.linalg.norm(y))]
    for t in range(1, settings.max_iterations + 1):
        proxy = A.adjoint(r)
        _guard("proxy", proxy)
        merged_support = np.union1d(support, top_indices(np.abs(D.adjoint(proxy)), 2 * k))
        merged_cosupport = np.intersect1d(cosupport, bottom_indices(np.abs(Omega.apply(proxy)), ell))

        ls = solver(A, y, D, Omega, merged_support, merged_cosupport, settings, alpha, x2)
        _guard("least squares", np.concatenate([ls.alpha, ls.x2]))

        support = top_indices(np.abs(ls.alpha), k)
        cosupport = bottom_indices(np.abs(Omega.apply(ls.x2)), ell)
        alpha = np.zeros(d)
        alpha[support] = ls.alpha[support]
        x1 = D.apply(alpha)
        x2 = Omega.project_null(cosupport, ls.x2)
        r = y - A.apply(x1 + x2)
        _guard("residual", r)

        null_dim = Omega.nullspace_basis(cosupport).shape[1]
        rec = SACoSaMPRecord(
            t=t,
            residual_norm=float(np.linalg.norm(r)),
            subspace_dim=int(support.size + null_dim),
            support_size=int(support.size),
            cosupport_size=int(cosupport.size),
            merged_support_size=int(merged_support.size),
            merged_cosupport_size=int(merged_cosupport.size),
            ls_iterations=ls.iterations,
            ls_converged=ls.converged,
            ls_orthogonality=ls.orthogonality,
            regularized=ls.regularized,
            x2_feasibility=float(np.linalg.norm(Omega.apply(x2)[cosupport])) if cosupport.size else 0.0,
        )
        if truth is not None:
            rec.error_norm = float(np.linalg.norm(x1 + x2 - truth))
            rec.intermediate_error_norm = float(np.linalg.norm(D.apply(ls.alpha) + ls.x2 - truth))
        if truth_x2 is not None:
            rec.psnr_x2 = psnr(truth_x2, x2, peak)
        trace.records.append(rec)
        history.append(rec.residual_norm)
        reason = halt_check(history, settings, t)
        if reason is not None:
            trace.halt_reason = reason
            break

    state = CombinedState(support, cosupport, alpha, x1, x2, r)
    return SACoSaMPResult(x1=x1, x2=x2, x=x1 + x2, trace=trace, state=state)
