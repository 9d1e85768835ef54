import numpy as np
import pytest
import scipy.sparse as sp

from helmfem import assembly, linalg, mesh
from helmfem.assembly import ProblemData, WaveContext


def test_direct_solve_trivial():
    I = sp.identity(5, format="csr", dtype=complex)
    b = np.arange(1.0, 6.0) + 0j
    np.testing.assert_allclose(linalg.direct_solve(I, b), b)
    A = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 1j]]))
    x = linalg.direct_solve(A, np.array([2.0, 1j]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)


def test_direct_solve_recovers_random_solution():
    rng = np.random.default_rng(0)
    n = 50
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 8 * np.eye(n)
    x_true = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = linalg.direct_solve(sp.csr_matrix(A), A @ x_true)
    np.testing.assert_allclose(x, x_true, atol=1e-8)
    resid = np.linalg.norm(A @ x - A @ x_true)
    assert resid <= 1e-10 * np.linalg.norm(A @ x_true)


def test_direct_solve_singular_raises():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]], dtype=complex))
    with pytest.raises(np.linalg.LinAlgError):
        linalg.direct_solve(A, np.array([1.0, 0.0]))


def test_spd_factor_inner_products():
    I = sp.identity(4, format="csr")
    f = linalg.spd_factor(I)
    v = np.array([1.0, 2.0, 0.0, -1.0]) + 0j
    w = np.array([0.5, 0.0, 1.0, 1.0]) + 0j
    assert f.inner(v, w) == pytest.approx(np.vdot(w, v))

    D = sp.diags([4.0, 9.0]).tocsr()
    f = linalg.spd_factor(D)
    assert f.norm(np.array([1.0, 1.0])) == pytest.approx(np.sqrt(13.0))
    np.testing.assert_allclose(f.solve(np.array([4.0, 9.0])), [1.0, 1.0])


def test_spd_factor_rejects_bad_input():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        linalg.spd_factor(A)
    B = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        linalg.spd_factor(B)


def test_spd_factor_on_assembled_weight():
    dom = mesh.Domain.interval(0, 1)
    space = mesh.build_space_1d(dom, 20)
    ctx = WaveContext(10.0, dom)
    D = assembly.assemble_weight(space, ctx, 1)
    f = linalg.spd_factor(D)
    rng = np.random.default_rng(1)
    b = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
    x = f.solve(b)
    np.testing.assert_allclose(D @ x, b, atol=1e-10 * np.linalg.norm(b))


# ---------------------------------------------------------------------------
# GMRES

def _krylov_residuals(A, b, weight_chol=None, mmax=None):
    """Definition-level oracle: minimize the residual over the Krylov space.

    Grows an orthonormal Krylov basis by Householder QR and solves the dense
    least-squares problem in the (optionally weighted) Euclidean norm; no
    Hessenberg recurrences are involved.
    """
    n = b.size
    mmax = n if mmax is None else mmax
    W = np.eye(n) if weight_chol is None else weight_chol
    res = [np.linalg.norm(W @ b)]
    Q = b[:, None] / np.linalg.norm(b)
    for j in range(1, mmax + 1):
        AQ = W @ (A @ Q)
        y, *_ = np.linalg.lstsq(AQ, W @ b, rcond=None)
        res.append(np.linalg.norm(W @ b - AQ @ y))
        if j < mmax:
            Q, _ = np.linalg.qr(np.hstack([Q, (A @ Q[:, -1])[:, None]]))
    return np.array(res)


def test_gmres_identity_converges_immediately():
    b = np.array([1.0, -2.0, 3.0], dtype=complex)
    out = linalg.weighted_gmres(sp.identity(3, format="csr", dtype=complex), b, tol=1e-12)
    assert out.converged
    assert out.iterations == 1
    np.testing.assert_allclose(out.solution, b, atol=1e-12)


def test_gmres_matches_unweighted_oracle():
    rng = np.random.default_rng(2)
    n = 30
    A = 2 * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n) \
        + 1j * rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    b /= np.linalg.norm(b)
    out = linalg.weighted_gmres(A, b, tol=1e-13, maxit=n)
    oracle = _krylov_residuals(A, b, mmax=out.iterations)
    m = min(len(oracle), len(out.residuals))
    for j in range(m):
        if oracle[j] < 1e-11:
            break
        assert abs(out.residuals[j] - oracle[j]) <= 1e-10


def test_gmres_matches_weighted_oracle():
    rng = np.random.default_rng(3)
    n = 24
    A = 2 * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n) \
        + 1j * rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    L = rng.standard_normal((n, n)) / np.sqrt(n)
    D = L @ L.T + np.eye(n)
    fac = linalg.spd_factor(sp.csr_matrix(D))
    out = linalg.weighted_gmres(A, b, weight=fac, tol=1e-12, maxit=n)
    Wc = np.linalg.cholesky(D).T   # ||v||_D = ||Wc v||_2
    oracle = _krylov_residuals(A, b, weight_chol=Wc, mmax=out.iterations)
    for j in range(min(len(oracle), len(out.residuals))):
        if oracle[j] < 1e-10:
            break
        assert abs(out.residuals[j] - oracle[j]) <= 1e-9 * oracle[0]


def test_gmres_weighted_equals_unweighted_for_identity_weight():
    rng = np.random.default_rng(4)
    n = 20
    A = 3 * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n) + 0j
    fac = linalg.spd_factor(sp.identity(n, format="csr"))
    a = linalg.weighted_gmres(A, b, tol=1e-12)
    c = linalg.weighted_gmres(A, b, weight=fac, tol=1e-12)
    assert a.iterations == c.iterations
    np.testing.assert_allclose(a.residuals, c.residuals, atol=1e-12 * a.residuals[0])


def test_gmres_polynomial_optimality():
    rng = np.random.default_rng(5)
    n = 25
    A = 2 * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n) + 0j
    L = rng.standard_normal((n, n)) / np.sqrt(n)
    D = L @ L.T + np.eye(n)
    fac = linalg.spd_factor(sp.csr_matrix(D))
    out = linalg.weighted_gmres(A, b, weight=fac, tol=1e-10, maxit=12)
    Wc = np.linalg.cholesky(D).T
    for m in (3, 6, 9):
        rm = out.residuals[m]
        for _ in range(20):
            # random residual polynomial q with q(0) = 1
            coef = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            q = b.copy()
            p = b.copy()
            for c in coef:
                p = A @ p
                q = q + c * p
            assert rm <= np.linalg.norm(Wc @ q) + 1e-10


def test_gmres_residual_history_nonincreasing():
    rng = np.random.default_rng(6)
    n = 40
    A = np.eye(n) + 0.8 * rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n) + 0j
    out = linalg.weighted_gmres(A, b, tol=1e-10)
    assert np.all(np.diff(out.residuals) <= 1e-12 * out.residuals[0])


def test_gmres_maxit_flag():
    rng = np.random.default_rng(7)
    n = 50
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal(n) + 0j
    out = linalg.weighted_gmres(A, b, tol=1e-12, maxit=5)
    assert not out.converged
    assert out.iterations == 5
    assert out.achieved > 1e-12


def test_preconditioned_gmres_agrees_with_direct_solve():
    dom = mesh.Domain.interval(0, 1)
    space = mesh.build_space_1d(dom, 30)
    k = 12.0
    ctx = WaveContext(k, dom)
    data = ProblemData.plane_wave(k, dim=1)
    sysm = assembly.assemble_ms(space, ctx, data)
    D = assembly.assemble_weight(space, ctx, 1)
    fac = linalg.spd_factor(D)
    x_direct = linalg.direct_solve(sysm.matrix, sysm.rhs)
    tol = 1e-8
    left = linalg.weighted_gmres((fac, sysm.matrix), sysm.rhs, tol=tol, side="left")
    right = linalg.weighted_gmres((fac, sysm.matrix), sysm.rhs, tol=tol, side="right")
    assert left.converged and right.converged
    scale = np.linalg.norm(x_direct)
    assert np.linalg.norm(left.solution - x_direct) <= 10 * tol * scale
    assert np.linalg.norm(right.solution - x_direct) <= 10 * tol * scale


def test_gmres_tol_validation():
    with pytest.raises(ValueError):
        linalg.weighted_gmres(np.eye(2), np.ones(2), tol=2.0)


# ---------------------------------------------------------------------------
# pencil extremes

def test_pencil_trivial_cases():
    D = sp.diags([2.0, 3.0, 4.0]).tocsr()
    lo, hi = linalg.hermitian_pencil_extremes(D.copy(), D)
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(1.0)
    H = sp.diags([1.0, 2.0, 3.0]).tocsr()
    lo, hi = linalg.hermitian_pencil_extremes(H, sp.identity(3, format="csr"))
    assert (lo, hi) == (pytest.approx(1.0), pytest.approx(3.0))


def test_pencil_rejects_non_hermitian():
    H = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        linalg.hermitian_pencil_extremes(H, sp.identity(2, format="csr"))


def test_pencil_sparse_path_matches_dense():
    rng = np.random.default_rng(8)
    n = 2200
    main = 2.0 + rng.random(n)
    off = 0.3 * (rng.random(n - 1) + 1j * rng.random(n - 1))
    H = sp.diags([off.conj(), main, off], [-1, 0, 1]).tocsr()
    D = sp.diags([-0.2 * np.ones(n - 1), 1.5 + rng.random(n), -0.2 * np.ones(n - 1)],
                 [-1, 0, 1]).tocsr()
    lo, hi = linalg.hermitian_pencil_extremes(H, D)
    import scipy.linalg as sla
    w = sla.eigh(H.toarray(), D.toarray(), eigvals_only=True)
    assert lo == pytest.approx(w[0], rel=1e-7)
    assert hi == pytest.approx(w[-1], rel=1e-7)


def test_pencil_coercivity_bound_for_ms_system():
    k = 20 * np.pi
    dom = mesh.Domain.interval(0, 1)
    n = int(np.ceil(k**1.5))
    space = mesh.build_space_1d(dom, n)
    ctx = WaveContext(k, dom)
    B = assembly.assemble_ms(space, ctx, ProblemData.zero()).matrix
    D = assembly.assemble_weight(space, ctx, 1)
    Hm = (B + B.conj().T) * 0.5
    lo, _ = linalg.hermitian_pencil_extremes(Hm, D)
    assert lo >= 0.125 - 1e-8
