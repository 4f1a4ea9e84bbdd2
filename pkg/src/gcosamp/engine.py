"""Generalized CoSaMP over an arbitrary union-of-subspaces model."""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .operators import DenseOperator, LinearOperator, ShapeError

HALT_REASONS = ("residual-floor", "stagnation", "max-iterations")


class NumericalAbort(RuntimeError):
    """A non-finite value appeared inside an iteration."""


@dataclass(frozen=True)
class RecoverySettings:
    max_iterations: int = 50
    residual_relative_improvement_floor: float = 1e-4
    absolute_residual_floor: float = 1e-9
    ls_max_iterations: int = 200
    ls_tolerance: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1 or self.ls_max_iterations < 1:
            raise ValueError("iteration limits must be >= 1")
        for name in ("residual_relative_improvement_floor", "absolute_residual_floor", "ls_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterationRecord:
    t: int
    residual_norm: float
    subspace_dim: int
    error_norm: float = math.nan
    intermediate_error_norm: float = math.nan
    ls_iterations: int = 0
    ls_converged: bool = True
    ls_orthogonality: float = 0.0
    membership_drift: float = 0.0


@dataclass
class RecoveryTrace:
    records: List[IterationRecord] = field(default_factory=list)
    estimate: Optional[np.ndarray] = None
    halt_reason: Optional[str] = None

    CSV_HEADER = "t,residual_norm,error_norm,intermediate_error_norm,subspace_dim"

    @property
    def iterations(self):
        return len(self.records)

    @property
    def residual_norms(self):
        return [r.residual_norm for r in self.records]

    @property
    def ls_all_converged(self):
        return all(r.ls_converged for r in self.records)

    def to_csv(self):
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(f"{r.t},{r.residual_norm!r},{r.error_norm!r},"
                         f"{r.intermediate_error_norm!r},{r.subspace_dim}")
        lines.append(f"halt,{self.halt_reason}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# -- least squares -----------------------------------------------------------------


@dataclass
class LSSolution:
    coords: np.ndarray
    iterations: int
    converged: bool


def cgls(M, y, x0=None, max_iter=200, tol=1e-10, damp=0.0):
    """Conjugate gradients on the normal equations of ``min ||y - M x||^2 + damp ||x||^2``.

    Stops when ``||M^T (y - M x) - damp x|| <= tol * ||M^T y||``.
    """
    dim = M.shape[1]
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    ref = np.linalg.norm(M.T @ y)
    if dim == 0 or ref == 0.0:
        return LSSolution(np.zeros(dim), 0, True)
    r = y - M @ x
    s = M.T @ r - damp * x
    p = s.copy()
    gamma = s @ s
    threshold = (tol * ref) ** 2
    it = 0
    while gamma > threshold and it < max_iter:
        q = M @ p
        delta = q @ q + damp * (p @ p)
        if delta <= 0.0:
            break
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * q
        s = M.T @ r - damp * x
        gamma_new = s @ s
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        it += 1
    return LSSolution(x, it, bool(gamma <= threshold))


def _as_operator(A):
    return A if isinstance(A, LinearOperator) else DenseOperator(A)


def _subspace_ls(A, y, basis, settings, x0=None):
    M = A.matmat(basis)
    c0 = None if x0 is None else np.asarray(basis.T @ x0).ravel()
    sol = cgls(M, y, c0, settings.ls_max_iterations, settings.ls_tolerance)
    x = np.asarray(basis @ sol.coords).ravel()
    residual = y - M @ sol.coords
    ynorm = np.linalg.norm(y)
    ortho = float(np.max(np.abs(M.T @ residual))) / ynorm if M.shape[1] and ynorm > 0 else 0.0
    return x, sol, ortho


def constrained_least_squares(A, y, sub, model, settings=None, x0=None):
    """``argmin ||y - A z||`` over ``z`` in the subspace ``sub``.

    Solved by CGLS in the coordinates of an orthonormal basis of ``sub``;
    ``x0`` (a point of ``sub``) warm-starts the iteration.
    """
    settings = settings or RecoverySettings()
    A = _as_operator(A)
    y = np.asarray(y, dtype=float)
    if y.shape != (A.rows,):
        raise ShapeError(f"measurements have shape {y.shape}, operator is {A.shape}")
    x, _, _ = _subspace_ls(A, y, model.basis(sub), settings, x0)
    return x


# -- stopping ------------------------------------------------------------------------


def halt_check(residuals, settings, t=None):
    """Return the halt reason, or ``None`` to continue.

    ``residuals`` lists residual norms oldest first; the last entry belongs
    to iteration ``t`` (default ``len(residuals)``).
    """
    if not residuals:
        raise ValueError("halt_check needs at least one residual")
    t = len(residuals) if t is None else t
    current = residuals[-1]
    if current < settings.absolute_residual_floor:
        return "residual-floor"
    if len(residuals) >= 2:
        previous = residuals[-2]
        if previous > 0 and (previous - current) / previous < settings.residual_relative_improvement_floor:
            return "stagnation"
    if t >= settings.max_iterations:
        return "max-iterations"
    return None


def _guard(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericalAbort(f"non-finite values after {name}")


# -- the algorithm ---------------------------------------------------------------------


def run_gcosamp(A, y, model, settings=None, truth=None):
    """Recover ``x`` in the union ``model`` from ``y = A x + e``.

    Each iteration selects an order-2 subspace from the proxy ``A^T r``, adds
    it to the current subspace, solves least squares there, and prunes back
    to an order-1 subspace. Returns a :class:`RecoveryTrace`.
    """
    settings = settings or RecoverySettings()
    A = _as_operator(A)
    y = np.asarray(y, dtype=float)
    if y.shape != (A.rows,):
        raise ShapeError(f"measurements have shape {y.shape}, operator is {A.shape}")
    if model.n != A.cols:
        raise ShapeError(f"model dimension {model.n} does not match operator columns {A.cols}")
    if truth is not None:
        truth = np.asarray(truth, dtype=float)

    trace = RecoveryTrace()
    x = np.zeros(A.cols)
    current = None
    r = y.copy()
    history = [float(np.linalg.norm(y))]
    for t in range(1, settings.max_iterations + 1):
        proxy = A.adjoint(r)
        _guard("proxy", proxy)
        delta = model.select(proxy, 2)
        merged = delta if current is None else model.sum(current, delta)

        basis = model.basis(merged)
        x_tilde, sol, ortho = _subspace_ls(A, y, basis, settings, x if current is not None else None)
        _guard("least squares", x_tilde)

        current = model.select(x_tilde, 1)
        x = model.project(current, x_tilde)
        _guard("pruning", x)
        r = y - A.apply(x)
        _guard("residual", r)

        rec = IterationRecord(
            t=t,
            residual_norm=float(np.linalg.norm(r)),
            subspace_dim=int(model.dimension(current)),
            ls_iterations=sol.iterations,
            ls_converged=sol.converged,
            ls_orthogonality=ortho,
            membership_drift=float(np.linalg.norm(model.project(current, x) - x)),
        )
        if truth is not None:
            rec.error_norm = float(np.linalg.norm(x - truth))
            rec.intermediate_error_norm = float(np.linalg.norm(x_tilde - truth))
        trace.records.append(rec)
        history.append(rec.residual_norm)

        reason = halt_check(history, settings, t)
        if reason is not None:
            trace.halt_reason = reason
            break
    trace.estimate = x
    return trace
