import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
import sympy as sym

from helmfem import assembly, mesh
from helmfem.assembly import ONE_THIRD, K_SQUARED, ProblemData, WaveContext


def _ctx_1d(k=3.0, n=None, beta=None, ls=ONE_THIRD, **kw):
    dom = mesh.Domain.interval(0, 1)
    return WaveContext(k, dom, beta=beta, ls_weight=ls, **kw)


def _space_1d(n, ab=(0, 1)):
    return mesh.build_space_1d(ab, n)


# ---------------------------------------------------------------------------
# symbolic oracles (independent of the assembly code path)

def _sym_basis_1d():
    x = sym.Symbol("x")
    return x, [1 - 3 * x**2 + 2 * x**3, x - 2 * x**2 + x**3,
               3 * x**2 - 2 * x**3, -(x**2) + x**3]


def _sym_core_1d():
    """Exact 4x4 mass/stiffness/bilaplacian blocks on a unit element."""
    x, phi = _sym_basis_1d()
    M = sym.Matrix(4, 4, lambda i, j: sym.integrate(phi[i] * phi[j], (x, 0, 1)))
    S = sym.Matrix(4, 4, lambda i, j: sym.integrate(sym.diff(phi[i], x) * sym.diff(phi[j], x), (x, 0, 1)))
    L1 = sym.Matrix(4, 4, lambda i, j: sym.integrate(sym.diff(phi[i], x, 2) * sym.diff(phi[j], x, 2), (x, 0, 1)))
    return M, S, L1


def _sym_ms_1d(kv, betav, Av, x0v):
    """Exact MS matrix on a single unit element, from the 1-d form."""
    x, phi = _sym_basis_1d()
    k, beta, A, x0 = [sym.nsimplify(v) for v in (kv, betav, Av, x0v)]
    I = sym.I
    B = sym.zeros(4, 4)
    for i in range(4):
        for j in range(4):
            u, v = phi[j], phi[i]
            du, dv = sym.diff(u, x), sym.diff(v, x)
            d2u, d2v = sym.diff(u, x, 2), sym.diff(v, x, 2)
            mult = (x - x0) * du - I * k * beta * u + A / k**2 * d2u + A * u
            vol = sym.integrate(du * dv + k**2 * u * v + mult * (d2v + k**2 * v), (x, 0, 1))
            bnd = 0
            for xv, xi in ((0, -1), (1, 1)):
                ue, ve, dve = u.subs(x, xv), v.subs(x, xv), dv.subs(x, xv)
                bnd += (I * k * (xv - x0) * ue * dve - k**2 * beta * ue * ve
                        - I * k * beta * ue * dve * xi + (xv - x0) * xi * k**2 * ue * ve)
            B[i, j] = vol - bnd
    return np.array(B.evalf(), dtype=complex)


def test_ms_matrix_matches_symbolic_oracle():
    k, beta, x0 = 3.0, 4.625, 0.5
    space = _space_1d(1)
    for Av, tag in ((1.0 / 3.0, ONE_THIRD), (k**2, K_SQUARED)):
        ctx = _ctx_1d(k=k, ls=tag)
        got = assembly.assemble_ms(space, ctx, ProblemData.zero()).matrix.toarray()
        want = _sym_ms_1d(k, beta, Av, x0)
        np.testing.assert_allclose(got, want, atol=1e-12 * np.abs(want).max())


def test_core_blocks_match_symbolic_oracle():
    space = _space_1d(1)
    core = assembly.assemble_core(space, _ctx_1d(k=2.0))
    M, S, L1 = (np.array(m.evalf(), dtype=float) for m in _sym_core_1d())
    np.testing.assert_allclose(core.mass.toarray(), M, atol=1e-14)
    np.testing.assert_allclose(core.stiffness.toarray(), S, atol=1e-13)
    np.testing.assert_allclose(core.bilaplacian.toarray(), L1, atol=1e-11)
    assert core.mass[0, 0] == pytest.approx(13 / 35)
    assert core.bilaplacian[0, 0] == pytest.approx(12.0)


def test_bilaplacian_diagonal_scaling():
    h = 0.2
    space = _space_1d(1, ab=(0, h))
    core = assembly.assemble_core(space, _ctx_1d(k=2.0))
    assert core.bilaplacian[0, 0] == pytest.approx(12 / h**3, rel=1e-12)
    assert core.mass[0, 0] == pytest.approx(13 * h / 35, rel=1e-12)


def _naive_lap_mass(space):
    """Test-side quadrature of the (Laplacian, value) cross matrix."""
    t, w = mesh.gauss_rule(8)
    val, _, d2 = mesh.local_tables_1d(space, t)
    h = space.h_dirs[0]
    K = np.zeros((space.ndof, space.ndof))
    block = np.einsum("q,iq,jq->ij", w * h, d2, val)
    for dofs in space.dof_map:
        K[np.ix_(dofs, dofs)] += block
    return K


def test_helmholtz_pair_identity():
    k = 3.7
    space = _space_1d(3)
    core = assembly.assemble_core(space, _ctx_1d(k=k))
    K = _naive_lap_mass(space)
    mixed = 0.5 * (K + K.T)
    want = core.bilaplacian.toarray() + 2 * k**2 * mixed + k**4 * core.mass.toarray()
    got = core.helmholtz_pair.toarray()
    np.testing.assert_allclose(got, want, atol=1e-10 * np.abs(want).max())


def test_core_symmetry_and_definiteness():
    for space, ctx in [
        (_space_1d(5), _ctx_1d(k=4.0)),
        (mesh.build_space_2d(((0, 0), (1, 1)), 3, 2), WaveContext(4.0, mesh.Domain.rectangle((0, 0), (1, 1)))),
    ]:
        core = assembly.assemble_core(space, ctx)
        for name in ("stiffness", "mass", "boundary_mass", "boundary_tangential",
                     "boundary_normal", "bilaplacian", "helmholtz_pair"):
            A = getattr(core, name).toarray()
            assert np.abs(A - A.T).max() <= 1e-12 * max(np.abs(A).max(), 1)
            evals = np.linalg.eigvalsh(A)
            assert evals.min() >= -1e-9 * max(np.abs(A).max(), 1), name
        assert np.linalg.eigvalsh(core.mass.toarray()).min() > 0


def test_boundary_tangential_empty_in_1d():
    core = assembly.assemble_core(_space_1d(4), _ctx_1d())
    assert core.boundary_tangential.nnz == 0


def test_standard_matrix_and_symmetry():
    k = 5.0
    space = _space_1d(6)
    ctx = _ctx_1d(k=k)
    core = assembly.assemble_core(space, ctx)
    sys = assembly.assemble_standard(space, ctx, ProblemData.zero())
    want = core.stiffness - k**2 * core.mass - 1j * k * core.boundary_mass
    np.testing.assert_allclose(sys.matrix.toarray(), want.toarray(), atol=1e-13)
    A = sys.matrix.toarray()
    assert np.abs(A - A.T).max() < 1e-12 * np.abs(A).max()          # symmetric
    assert np.abs(A - A.conj().T).max() > 1e-3 * np.abs(A).max()    # not Hermitian
    np.testing.assert_array_equal(sys.rhs, 0)


def test_plane_wave_boundary_datum():
    data = ProblemData.plane_wave(k=7.0, dim=1)
    g0 = data.boundary(np.array([[0.0]]), np.array([-1.0]))
    g1 = data.boundary(np.array([[1.0]]), np.array([1.0]))
    assert g0[0] == pytest.approx(-2j * 7.0)
    assert g1[0] == pytest.approx(0.0)


def test_ls_hermitian_and_volume_block():
    k = 6.0
    space = _space_1d(5)
    ctx = _ctx_1d(k=k)
    sys = assembly.assemble_ls(space, ctx, ProblemData.zero())
    A = sys.matrix.toarray()
    assert np.abs(A - A.conj().T).max() <= 1e-12 * np.abs(A).max()
    np.testing.assert_array_equal(sys.rhs, 0)

    # strip the impedance-trace block (built here independently from traces)
    core = assembly.assemble_core(space, ctx)
    h = space.h_dirs[0]
    tr = np.zeros((2, space.ndof), dtype=complex)   # value traces
    dr = np.zeros((2, space.ndof), dtype=complex)   # d/dn traces
    tr[0, 0] = 1.0
    dr[0, 1] = -1.0
    tr[1, space.ndof - 2] = 1.0
    dr[1, space.ndof - 1] = 1.0
    bnd = np.zeros((space.ndof, space.ndof), dtype=complex)
    for m in range(2):
        ci = dr[m] + 1j * k * tr[m]
        cj = dr[m] - 1j * k * tr[m]
        bnd += np.outer(ci, cj)
    vol = A - bnd
    np.testing.assert_allclose(vol, core.helmholtz_pair.toarray(),
                               atol=1e-10 * np.abs(vol).max())


@pytest.mark.parametrize("tag,variant", [(ONE_THIRD, 1), (K_SQUARED, 2)])
def test_ms_coercivity_random_vectors(tag, variant):
    rng = np.random.default_rng(11)
    dom = mesh.Domain.interval(0, 1)
    for k, n in ((5.0, 8), (20.0, 24)):
        space = _space_1d(n)
        ctx = WaveContext(k, dom, ls_weight=tag)   # beta at the threshold
        B = assembly.assemble_ms(space, ctx, ProblemData.zero()).matrix.toarray()
        D = assembly.assemble_weight(space, ctx, variant).toarray()
        gamma = dom.gamma
        for _ in range(200):
            v = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            lhs = np.real(v.conj() @ (B @ v))
            rhs = (gamma / 4) * np.real(v.conj() @ (D @ v))
            assert lhs >= rhs - 1e-9 * abs(rhs)


def test_ms_coercivity_random_vectors_2d():
    rng = np.random.default_rng(12)
    dom = mesh.Domain.rectangle((0, 0), (1, 1))
    space = mesh.build_space_2d(dom, 4, 4)
    for tag, variant in ((ONE_THIRD, 1), (K_SQUARED, 2)):
        ctx = WaveContext(9.0, dom, ls_weight=tag)
        B = assembly.assemble_ms(space, ctx, ProblemData.zero()).matrix.toarray()
        D = assembly.assemble_weight(space, ctx, variant).toarray()
        for _ in range(100):
            v = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            lhs = np.real(v.conj() @ (B @ v))
            rhs = (dom.gamma / 4) * np.real(v.conj() @ (D @ v))
            assert lhs >= rhs - 1e-9 * abs(rhs)


def test_require_coercive_flag():
    space = _space_1d(4)
    ctx = _ctx_1d(beta=1.0)   # below the 4.625 threshold
    with pytest.raises(ValueError):
        assembly.assemble_ms(space, ctx, ProblemData.zero(), require_coercive=True)
    assembly.assemble_ms(space, ctx, ProblemData.zero())   # allowed when not enforced


@pytest.mark.parametrize("dim", [1, 2])
def test_bz_reproduces_ms(dim):
    k = 4.0
    if dim == 1:
        dom = mesh.Domain.interval(0, 1)
        space = mesh.build_space_1d(dom, 5)
        data = ProblemData.modulated_plane_wave(k)
    else:
        dom = mesh.Domain.rectangle((0, 0), (1, 1))
        space = mesh.build_space_2d(dom, 3, 3)
        data = ProblemData.plane_wave(k, dim=2)
    for tag in (ONE_THIRD, K_SQUARED):
        ctx = WaveContext(k, dom, ls_weight=tag)
        beta = ctx.beta_value
        z1 = (dim - 1) / 2 + 1j * k * beta
        ms = assembly.assemble_ms(space, ctx, data)
        bz = assembly.assemble_bz(space, ctx, z1, np.conj(z1), data)
        scale = np.abs(ms.matrix.toarray()).max()
        np.testing.assert_allclose(bz.matrix.toarray(), ms.matrix.toarray(),
                                   atol=1e-10 * scale)
        rscale = max(np.abs(ms.rhs).max(), 1e-30)
        np.testing.assert_allclose(bz.rhs, ms.rhs, atol=1e-10 * rscale)


@pytest.mark.parametrize("dim", [1, 2])
def test_a0_vanishes(dim):
    if dim == 1:
        dom = mesh.Domain.interval(0, 1)
        space = mesh.build_space_1d(dom, 6)
    else:
        dom = mesh.Domain.rectangle((0, 0), (1, 1))
        space = mesh.build_space_2d(dom, 3, 4)
    ctx = WaveContext(5.0, dom)
    a0 = assembly.assemble_a0(space, ctx)
    core = assembly.assemble_core(space, ctx)
    snorm = np.abs(core.stiffness.toarray()).max()
    assert np.abs(a0.toarray()).max() <= 1e-9 * snorm


@pytest.mark.parametrize("dim", [1, 2])
def test_bz_decomposition(dim):
    k = 4.5
    if dim == 1:
        dom = mesh.Domain.interval(0, 1)
        space = mesh.build_space_1d(dom, 4)
    else:
        dom = mesh.Domain.rectangle((0, 0), (1, 1))
        space = mesh.build_space_2d(dom, 2, 3)
    ctx = WaveContext(k, dom, ls_weight=ONE_THIRD)
    z1, z2 = 0.7 - 0.3j, -1.1 + 2.2j
    bz = assembly.assemble_bz(space, ctx, z1, z2, ProblemData.zero()).matrix.toarray()
    a_st = assembly.assemble_standard(space, ctx, ProblemData.zero()).matrix.toarray()
    core = assembly.assemble_core(space, ctx)
    a0 = assembly.assemble_a0(space, ctx).toarray()
    ax = assembly.assemble_ax(space, ctx).toarray()
    A_w = ctx.ls_weight_value
    want = z1 * a_st + (A_w / k**2) * core.helmholtz_pair.toarray() + z2 * a0 + ax
    np.testing.assert_allclose(bz, want, atol=1e-9 * np.abs(want).max())


# ---------------------------------------------------------------------------
# weight matrices and norms

def _quadrature_norm_sq(space, ctx, coeffs, variant):
    """Independent graph-norm evaluation through point evaluation."""
    k, L = ctx.k, ctx.norm_length
    rule = mesh.quadrature_rule(space, 10)
    pts = rule.points.reshape(-1, space.dim)
    w = rule.weights.ravel()
    val, grad, lap = mesh.evaluate_function(space, coeffs, pts)
    helm = lap + k**2 * val
    vol = (w * (np.abs(grad) ** 2).sum(axis=1)).sum() + k**2 * (w * np.abs(val) ** 2).sum()
    if variant == 1:
        vol += (w * np.abs(lap) ** 2).sum() / k**2
    else:
        vol += (w * np.abs(helm) ** 2).sum()
    bnd = 0.0
    for face in mesh.boundary_faces(space):
        fp = rule.face_points[face.name].reshape(-1, space.dim)
        fw = rule.face_weights[face.name].ravel()
        fval, fgrad, _ = mesh.evaluate_function(space, coeffs, fp)
        dn = fgrad @ face.normal
        tgrad = fgrad - np.outer(dn, face.normal)
        bnd += (fw * np.abs(dn) ** 2).sum()
        bnd += (fw * (np.abs(tgrad) ** 2).sum(axis=1)).sum()
        bnd += k**2 * (fw * np.abs(fval) ** 2).sum()
    return vol + L * bnd


@pytest.mark.parametrize("dim", [1, 2])
def test_weight_norm_identity(dim):
    rng = np.random.default_rng(21)
    if dim == 1:
        dom = mesh.Domain.interval(0, 1)
        space = mesh.build_space_1d(dom, 7)
    else:
        dom = mesh.Domain.rectangle((0, 0), (1, 1))
        space = mesh.build_space_2d(dom, 3, 3)
    ctx = WaveContext(10.0, dom)
    for variant in (1, 2):
        D = assembly.assemble_weight(space, ctx, variant)
        for _ in range(10):
            v = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            quad = np.real(v.conj() @ (D @ v))
            direct = _quadrature_norm_sq(space, ctx, v, variant)
            assert quad == pytest.approx(direct, rel=1e-10)


def test_weight_spd_cholesky():
    dom = mesh.Domain.interval(0, 1)
    space = mesh.build_space_1d(dom, 20)
    ctx = WaveContext(10.0, dom)
    for variant in (1, 2):
        D = assembly.assemble_weight(space, ctx, variant).toarray()
        np.testing.assert_allclose(D, D.T, atol=1e-12 * np.abs(D).max())
        sla.cholesky(D)   # raises if not positive definite


def test_norm_equivalence_sandwich():
    rng = np.random.default_rng(31)
    dom = mesh.Domain.interval(0, 1)
    space = mesh.build_space_1d(dom, 12)
    for k in (0.5, 3.0, 40.0):
        ctx = WaveContext(k, dom)
        D1 = assembly.assemble_weight(space, ctx, 1)
        D2 = assembly.assemble_weight(space, ctx, 2)
        lo = 1.0 / max(3.0, 2.0 / k**2)
        hi = 2.0 * k**2 + 1.0
        for _ in range(50):
            v = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            q1 = np.real(v.conj() @ (D1 @ v))
            q2 = np.real(v.conj() @ (D2 @ v))
            assert lo * q1 - 1e-9 * q1 <= q2 <= hi * q1 + 1e-9 * q1


def test_continuity_constants_reported():
    rng = np.random.default_rng(41)
    dom = mesh.Domain.interval(0, 1)
    space = mesh.build_space_1d(dom, 16)
    k = 15.0
    out = {}
    for tag, variant in ((ONE_THIRD, 1), (K_SQUARED, 2)):
        ctx = WaveContext(k, dom, ls_weight=tag)
        B = assembly.assemble_ms(space, ctx, ProblemData.zero()).matrix
        D = assembly.assemble_weight(space, ctx, variant).toarray()
        Dch = sla.cholesky(D, lower=True)
        best = 0.0
        for _ in range(100):
            v = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            w = rng.standard_normal(space.ndof) + 1j * rng.standard_normal(space.ndof)
            num = abs(np.vdot(w, B @ v))
            den = np.linalg.norm(Dch.conj().T @ v) * np.linalg.norm(Dch.conj().T @ w)
            best = max(best, num / den)
        out[variant] = best / k if variant == 1 else best
    # empirical continuity constants: reported, only sanity-checked here
    print(f"continuity C (variant 1, scaled by k): {out[1]:.3f}; (variant 2): {out[2]:.3f}")
    assert np.isfinite(out[1]) and out[1] > 0
    assert np.isfinite(out[2]) and out[2] > 0


def test_standard_form_indefinite_beyond_first_eigenvalue():
    # k = 2*pi exceeds the first Dirichlet eigenvalue sqrt(lambda_1) = pi
    k = 2 * np.pi
    space = _space_1d(20)
    ctx = _ctx_1d(k=k)
    core = assembly.assemble_core(space, ctx)
    S = core.stiffness.toarray()
    M = core.mass.toarray()
    evals, vecs = sla.eigh(S - k**2 * M, S + k**2 * M)
    assert evals[0] < 0
    v = vecs[:, 0]
    sys = assembly.assemble_standard(space, ctx, ProblemData.zero())
    quad = np.vdot(v, sys.matrix @ v)
    assert np.real(quad) < 0
