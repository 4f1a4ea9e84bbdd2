import numpy as np
import pytest

from gcosamp.engine import RecoverySettings, run_gcosamp
from gcosamp.models import SynthesisModel
from gcosamp.operators import (AnalysisOperator, IdentityOperator, SubsampledFourierOperator, SynthesisDictionary,
                               build_finite_difference, build_local_dct, variable_density_mask)
from gcosamp.sacosamp import joint_constrained_ls, run_sacosamp, split_constrained_ls


def synthesis_problem(seed, n=60, d=80, m=120, k=4, orthonormal=False):
    rng = np.random.default_rng(seed)
    if orthonormal:
        D = SynthesisDictionary(np.linalg.qr(rng.standard_normal((n, n)))[0])
    else:
        D = SynthesisDictionary(rng.standard_normal((n, d)))
    alpha = np.zeros(D.atoms)
    alpha[rng.choice(D.atoms, k, replace=False)] = rng.standard_normal(k)
    A = rng.standard_normal((m, n))
    return A, D, alpha, D.apply(alpha)


def image_problem(seed=0, h=16, w=16, k=4, fraction=0.5):
    rng = np.random.default_rng(seed)
    D = build_local_dct(h, w, 8, 4, 2)
    Om = build_finite_difference(h, w)
    cartoon = np.full((h, w), 50.0)
    cartoon[3:9, 4:12] = 150.0
    alpha = np.zeros(D.atoms)
    alpha[rng.choice(D.atoms, k, replace=False)] = 5 * rng.standard_normal(k)
    A = SubsampledFourierOperator(variable_density_mask(h, w, fraction, seed=seed))
    return A, D, Om, alpha, cartoon.ravel()


def test_zero_measurements():
    A, D, Om, _, _ = image_problem()
    res = run_sacosamp(A, np.zeros(A.rows), D, Om, 4, 400)
    assert np.array_equal(res.x1, np.zeros(256))
    assert np.array_equal(res.x2, np.zeros(256))


def test_identity_analysis_reduces_to_synthesis_recovery():
    A, D, alpha, x = synthesis_problem(1)
    Om = AnalysisOperator(np.eye(60))
    res = run_sacosamp(A, A @ x, D, Om, 4, 60)
    assert np.array_equal(res.x2, np.zeros(60))
    assert np.linalg.norm(res.x - x) < 1e-4 * np.linalg.norm(x)
    # thresholding |D^T x| is a poor pruning rule for a redundant D; OMP pruning is not
    trace = run_gcosamp(A, A @ x, SynthesisModel(D, 4, selector="omp"))
    assert np.linalg.norm(trace.estimate - x) < 1e-4 * np.linalg.norm(x)


@pytest.mark.parametrize("seed", range(3))
def test_trace_equals_synthesis_gcosamp_for_orthonormal_dictionary(seed):
    A, D, alpha, x = synthesis_problem(seed, m=40, orthonormal=True)
    y = A @ x + 0.01 * np.random.default_rng(seed).standard_normal(40)
    Om = AnalysisOperator(np.eye(60))
    res = run_sacosamp(A, y, D, Om, 4, 60, truth_x1=x)
    trace = run_gcosamp(A, y, SynthesisModel(D, 4), truth=x)
    assert res.trace.iterations == trace.iterations
    for a, b in zip(res.trace.records, trace.records):
        assert abs(a.residual_norm - b.residual_norm) < 1e-8
        assert abs(a.error_norm - b.error_norm) < 1e-8
    assert np.linalg.norm(res.x - trace.estimate) < 1e-8


def test_joint_ls_trivial_example():
    n = 5
    y = np.zeros(n)
    y[0] = 5.0
    D = SynthesisDictionary(np.eye(n))
    Om = AnalysisOperator(np.eye(n))
    sol = joint_constrained_ls(IdentityOperator(n), y, D, Om, [0], np.arange(n))
    assert np.allclose(sol.alpha, 5.0 * np.eye(n)[0])
    assert np.array_equal(sol.x2, np.zeros(n))


@pytest.mark.parametrize("solver", [joint_constrained_ls, split_constrained_ls])
def test_ls_feasibility(solver):
    A, D, Om, alpha, cartoon = image_problem(1)
    y = A.apply(D.apply(alpha) + cartoon)
    rng = np.random.default_rng(0)
    T = np.sort(rng.choice(D.atoms, 8, replace=False))
    Lam = np.sort(rng.choice(Om.rows, 380, replace=False))
    sol = solver(A, y, D, Om, T, Lam, RecoverySettings(ls_max_iterations=2000))
    off = np.setdiff1d(np.arange(D.atoms), T)
    assert np.all(sol.alpha[off] == 0)
    assert np.linalg.norm(Om.apply(sol.x2)[Lam]) < 1e-8


def test_joint_ls_residual_orthogonal_to_feasible_directions():
    A, D, Om, alpha, cartoon = image_problem(2)
    y = A.apply(D.apply(alpha) + cartoon)
    rng = np.random.default_rng(1)
    T = np.sort(rng.choice(D.atoms, 8, replace=False))
    Lam = np.sort(rng.choice(Om.rows, 400, replace=False))
    sol = joint_constrained_ls(A, y, D, Om, T, Lam, RecoverySettings(ls_max_iterations=2000))
    r = y - A.apply(D.apply(sol.alpha) + sol.x2)
    directions = np.hstack([D.columns(T), Om.nullspace_basis(Lam).toarray()])
    probes = A.matmat(directions).T @ r
    assert np.max(np.abs(probes)) < 1e-8 * np.linalg.norm(y)


def test_unified_residual_not_above_split():
    A, D, Om, alpha, cartoon = image_problem(3)
    y = A.apply(D.apply(alpha) + cartoon)
    rng = np.random.default_rng(2)
    settings = RecoverySettings(ls_max_iterations=2000)
    for _ in range(5):
        T = np.sort(rng.choice(D.atoms, 8, replace=False))
        Lam = np.sort(rng.choice(Om.rows, 400, replace=False))
        a0 = np.zeros(D.atoms)
        x20 = np.zeros(256)
        u = joint_constrained_ls(A, y, D, Om, T, Lam, settings, a0, x20)
        s = split_constrained_ls(A, y, D, Om, T, Lam, settings, a0, x20)
        ru = np.linalg.norm(y - A.apply(D.apply(u.alpha) + u.x2))
        rs = np.linalg.norm(y - A.apply(D.apply(s.alpha) + s.x2))
        assert ru <= rs * (1 + 1e-9)


def test_rank_deficient_joint_system_is_regularized():
    n = 6
    D = SynthesisDictionary(np.eye(n))
    Om = AnalysisOperator(np.eye(n))
    y = np.arange(1.0, n + 1)
    sol = joint_constrained_ls(IdentityOperator(n), y, D, Om, [0, 1], np.arange(1, n))
    assert sol.regularized
    assert np.allclose(D.apply(sol.alpha) + sol.x2, np.r_[1.0, 2.0, 0, 0, 0, 0], atol=1e-6)


@pytest.mark.parametrize("mode", ["unified", "split"])
def test_iteration_invariants(mode):
    A, D, Om, alpha, cartoon = image_problem(4)
    x1 = D.apply(alpha)
    y = A.apply(x1 + cartoon)
    k, ell = 4, 420
    res = run_sacosamp(A, y, D, Om, k, ell, mode, truth_x1=x1, truth_x2=cartoon)
    prev_cos, prev_sup = Om.rows, 0
    for rec in res.trace.records:
        assert rec.merged_cosupport_size <= min(prev_cos, ell)
        assert rec.merged_support_size <= prev_sup + 2 * k
        assert rec.support_size <= k
        assert rec.cosupport_size >= ell
        assert rec.x2_feasibility < 1e-8
        prev_cos, prev_sup = rec.cosupport_size, rec.support_size
    assert np.array_equal(res.x, res.x1 + res.x2)
    T = res.state.support
    assert np.all(res.state.alpha[np.setdiff1d(np.arange(D.atoms), T)] == 0)
    assert np.allclose(res.x1, D.apply(res.state.alpha))


def test_recovers_small_cartoon_plus_texture():
    A, D, Om, alpha, cartoon = image_problem(5, fraction=0.6)
    x1 = D.apply(alpha)
    zeros = int(np.sum(Om.apply(cartoon) == 0))
    res = run_sacosamp(A, A.apply(x1 + cartoon), D, Om, 4, zeros - 20,
                       settings=RecoverySettings(ls_max_iterations=1000))
    assert np.linalg.norm(res.x - (x1 + cartoon)) < 1e-6 * np.linalg.norm(cartoon)


def test_argument_validation():
    A, D, Om, _, _ = image_problem()
    y = np.zeros(A.rows)
    with pytest.raises(ValueError):
        run_sacosamp(A, y, D, Om, 4, 100, ls_mode="both")
    with pytest.raises(ValueError):
        run_sacosamp(A, y, D, Om, 4, Om.rows + 1)
    with pytest.raises(ValueError):
        run_sacosamp(A, y[:-1], D, Om, 4, 100)


def test_trace_csv_header(tmp_path):
    A, D, Om, alpha, cartoon = image_problem(6)
    res = run_sacosamp(A, A.apply(cartoon), D, Om, 4, 430, truth_x2=cartoon)
    res.trace.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,residual_norm,error_norm,intermediate_error_norm,subspace_dim,|T|,|Λ|,psnr_x2"
    assert lines[-1].startswith("halt,")
    assert len(lines) == res.trace.iterations + 2
