"""Gaussian mean width estimates, closed-form width bounds, the recovery
bound report, and Monte-Carlo checks of the two Gaussian-matrix lemmas the
guarantees rest on (norm concentration on a set, projected contraction).
"""
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .models import (AnalysisModel, BlockSparseModel, CombinedModel, KSparseModel, LowRankModel,
                     SynthesisModel, subspace_basis)

EXACT_SUP = "exact-sup"
LOWER_BOUND_SUP = "lower-bound-sup"
CONVERGENCE_FACTOR = 14.5 ** 2
POWER_TOL = 1e-10
POWER_MAX_ITER = 1000


def expected_gaussian_norm(m):
    """``b_m = E ||g||_2`` for ``g ~ N(0, I_m)``, i.e. ``sqrt(2) Gamma((m+1)/2) / Gamma(m/2)``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return math.sqrt(2.0) * math.exp(gammaln((m + 1) / 2.0) - gammaln(m / 2.0))


# -- mean width ---------------------------------------------------------------------


@dataclass
class WidthEstimate:
    mean: float
    std_error: float
    samples: int
    exactness: str
    analytic_upper: Optional[float] = None
    analytic_lower: Optional[float] = None

    def to_csv(self):
        names = [f.name for f in fields(self)]
        values = ["" if v is None else str(v) for v in asdict(self).values()]
        return ",".join(names) + "\n" + ",".join(values) + "\n"


def width_samples(model, B, g):
    """Per-sample suprema (or greedy lower bounds) for the rows of ``g``."""
    return np.array([model.width_sample(row, B) for row in np.atleast_2d(g)])


def _max_dimension(model, B):
    if isinstance(model, (KSparseModel, BlockSparseModel)):
        return min(B * model.k, model.n)
    if isinstance(model, LowRankModel):
        return min(B * model.r, model.n1, model.n2)
    return None


def mc_mean_width(model, B, samples=1000, seed=0, C=1.0, delta=None):
    """Monte-Carlo estimate of ``w(U^B ∩ S^{n-1})``.

    For k-sparse, block-sparse and low-rank models the supremum per sample is
    exact. For the other models it is the norm of the projection onto the
    greedily selected subspace, so the mean underestimates the width.
    ``analytic_upper`` is the closed-form bound when one is available;
    ``analytic_lower`` is ``b_dim`` for any fixed member of maximal dimension.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, model.n))
    values = width_samples(model, B, g)
    upper = None
    try:
        upper = width_upper_bound(model, B, C=C, delta=delta)
    except (TypeError, ValueError):
        pass
    dim = _max_dimension(model, B)
    lower = expected_gaussian_norm(dim) if dim else None
    return WidthEstimate(
        mean=float(values.mean()),
        std_error=float(values.std(ddof=1) / math.sqrt(samples)),
        samples=int(samples),
        exactness=EXACT_SUP if getattr(model, "sup_exact", False) else LOWER_BOUND_SUP,
        analytic_upper=upper,
        analytic_lower=lower,
    )


# -- closed-form bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class TreeSparse:
    """Descriptor of k-sparse vectors whose support forms a rooted subtree (width bound only)."""

    n: int
    k: int


def structured_sparsity_bound(k, gamma, C=1.0):
    """Width bound ``sqrt(C (k + 2 gamma))`` for a union of at most ``exp(gamma)`` k-dim subspaces."""
    if C <= 0:
        raise ValueError("C must be positive")
    return math.sqrt(C * (k + 2.0 * gamma))


def generic_width_bound(w1, B):
    """``w(U^B) <= B w(U^1)``."""
    return B * w1


def _check_delta(delta):
    if delta is None:
        raise ValueError("a restricted isometry constant delta is required")
    if not 0 <= delta < 1:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")


def width_upper_bound(model, B, C=1.0, delta=None, w1=None):
    """Closed-form upper bound on ``w(U^B ∩ S^{n-1})``.

    Parameters
    ----------
    model : UnionModel or TreeSparse
    B : int
        Order of the union.
    C : float
        Absolute constant of the sparse, tree, block, synthesis and analysis bounds.
    delta : float, optional
        Restricted isometry constant of the dictionary (synthesis) or of the
        analysis operator (analysis); required for those models.
    w1 : float, optional
        Width of ``U^1`` for models without a closed form; gives ``B * w1``.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    if isinstance(model, KSparseModel):
        s = min(B * model.k, model.n)
        return math.sqrt(C * s * math.log(2.0 * model.n / s))
    if isinstance(model, TreeSparse):
        return B * math.sqrt(C * model.k)
    if isinstance(model, BlockSparseModel):
        k, J, n = model.k, model.J, model.n
        return B * math.sqrt(C * (k + (k / J) * math.log(n / k)))
    if isinstance(model, LowRankModel):
        return (math.sqrt(model.n1) + math.sqrt(model.n2)) * math.sqrt(B * model.r)
    if isinstance(model, SynthesisModel):
        _check_delta(delta)
        return C * math.sqrt(B * model.k / (1.0 - delta) * math.log(model.D.atoms))
    if isinstance(model, AnalysisModel):
        _check_delta(delta)
        p = model.Omega.rows
        return C * math.sqrt(B * (p - model.ell) / (1.0 - delta) * math.log(p))
    if isinstance(model, CombinedModel):
        return sum(width_upper_bound(part, B, C=C, delta=delta) for part in model.parts)
    if w1 is not None:
        return generic_width_bound(w1, B)
    raise TypeError(f"no closed-form width bound for {type(model).__name__}; pass w1")


# -- bound report -----------------------------------------------------------------------


@dataclass
class BoundReport:
    m: int
    b_m: float
    w4: float
    w3: float
    eta: float
    m0: float
    mu1: float
    mu2: float
    rho1: float
    xi1: float
    rho2: float
    xi2: float
    rho_m: float
    xi_m: float
    noise_coefficient: float
    converges: bool
    threshold: float
    probability_floor: float

    def to_csv(self):
        names = [f.name for f in fields(self)]
        values = [str(v) for v in asdict(self).values()]
        return ",".join(names) + "\n" + ",".join(values) + "\n"


def corollary_rho(m, m0):
    """Closed-form contraction factor as a function of ``m`` (1 when no contraction is guaranteed)."""
    lo = m / math.sqrt(m + 1.0) - math.sqrt(m0)
    if lo <= 0:
        return 1.0
    hi = math.sqrt(m) + math.sqrt(m0)
    return min(1.0, 4.0 * (hi ** 2 - lo ** 2) / (lo * hi))


def corollary_xi(m, m0):
    """Closed-form noise factor as a function of ``m`` (``inf`` when undefined)."""
    lo = m / math.sqrt(m + 1.0) - math.sqrt(m0)
    denom = m * m / (m + 1.0) - m0
    if lo <= 0 or denom <= 0:
        return math.inf
    hi = math.sqrt(m) + math.sqrt(m0)
    return 2.0 * math.sqrt(m0) * math.sqrt((m + 1.0) / m) / denom * (2.0 + hi / lo)


def convergence_threshold(m0):
    return CONVERGENCE_FACTOR * m0 + 1.0


def bound_report(m, w4, w3=None, eta=3.0, m0=None):
    """Recovery bound quantities for ``m`` Gaussian measurements.

    ``m0`` defaults to ``(w4 + eta)^2``; passing it directly overrides the
    width. Step sizes are set to their largest permitted value
    ``(b_m + sqrt(m0))^-2``. The noise coefficient is ``inf`` when no
    contraction is guaranteed.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    w3 = w4 if w3 is None else w3
    if not w4 >= w3 >= 0:
        raise ValueError(f"need w4 >= w3 >= 0, got w4={w4}, w3={w3}")
    if m0 is None:
        m0 = (w4 + eta) ** 2
    if m0 <= 0:
        raise ValueError("m0 must be positive")
    b = expected_gaussian_norm(m)
    root = math.sqrt(m0)
    mu = (b + root) ** -2
    rho12 = 1.0 - mu * (b - root) ** 2
    rho_m = corollary_rho(m, m0)
    xi_m = corollary_xi(m, m0)
    noise = xi_m / (1.0 - rho_m) if rho_m < 1.0 else math.inf
    threshold = convergence_threshold(m0)
    return BoundReport(
        m=int(m), b_m=b, w4=float(w4), w3=float(w3), eta=float(eta), m0=float(m0),
        mu1=mu, mu2=mu, rho1=rho12, xi1=mu * (w3 + eta), rho2=rho12, xi2=mu * root,
        rho_m=rho_m, xi_m=xi_m, noise_coefficient=noise, converges=bool(m > threshold),
        threshold=threshold, probability_floor=max(0.0, 1.0 - 6.0 * math.exp(-eta ** 2 / 2.0)),
    )


# -- lemma verifiers --------------------------------------------------------------------


@dataclass
class VerificationResult:
    pass_rate: float
    floor: float
    passes: int
    trials: int
    width: float
    bound: float

    @property
    def holds(self):
        return self.pass_rate >= self.floor


def spectral_norm(M, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0):
    """Largest singular value of a symmetric matrix by power iteration."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        z = M @ x
        new = float(np.linalg.norm(z))
        if new == 0.0:
            return 0.0
        x = z / new
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def _trial_rng(seed, trial):
    return np.random.default_rng([seed, trial])


def verify_gordon(model, B, m, eta=3.0, trials=500, seed=0, width=None, width_samples_count=2000):
    """Fraction of trials with ``||A u|| in [b_m - w - eta, b_m + w + eta]``.

    ``u`` is a random unit vector of a random member of ``S^B``; ``A`` is a
    fresh ``m x n`` standard Gaussian matrix each trial. ``w`` is the
    Monte-Carlo width of ``U^B`` unless given.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if width is None:
        width = mc_mean_width(model, B, width_samples_count, seed).mean
    b = expected_gaussian_norm(m)
    lo, hi = b - width - eta, b + width + eta
    passes = 0
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        basis = subspace_basis(model.random_subspace(B, rng), model)
        u = basis @ rng.standard_normal(basis.shape[1])
        u /= np.linalg.norm(u)
        A = rng.standard_normal((m, model.n))
        passes += lo <= np.linalg.norm(A @ u) <= hi
    floor = 1.0 - 2.0 * math.exp(-eta ** 2 / 2.0)
    return VerificationResult(float(passes / trials), floor, int(passes), trials, float(width), hi)


def max_step(m, width, eta):
    return (expected_gaussian_norm(m) + width + eta) ** -2


def verify_projected_contraction(model, B, m, mu=None, eta=3.0, trials=500, seed=0, width=None,
                                 width_samples_count=2000):
    """Fraction of trials with ``||P_V (I - mu A^T A) P_V|| <= 1 - mu (b_m - w - eta)_+^2``.

    The norm is computed in the coordinates of an orthonormal basis of a
    random member ``V`` of ``S^B``. ``mu`` defaults to the largest permitted
    value ``(b_m + w + eta)^-2``; larger values are rejected.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if width is None:
        width = mc_mean_width(model, B, width_samples_count, seed).mean
    limit = max_step(m, width, eta)
    mu = limit if mu is None else mu
    if not 0 <= mu <= limit * (1 + 1e-12):
        raise ValueError(f"mu must lie in [0, {limit}], got {mu}")
    gap = max(0.0, expected_gaussian_norm(m) - width - eta)
    bound = 1.0 - mu * gap ** 2
    passes = 0
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        basis = subspace_basis(model.random_subspace(B, rng), model)
        A = rng.standard_normal((m, model.n))
        AB = A @ basis
        G = np.eye(basis.shape[1]) - mu * (AB.T @ AB)
        passes += spectral_norm(G, seed=trial) <= bound + 1e-12
    floor = 1.0 - 2.0 * math.exp(-eta ** 2 / 2.0)
    return VerificationResult(float(passes / trials), floor, int(passes), trials, float(width), bound)
