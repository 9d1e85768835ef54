"""Norms, best approximations, field-of-values constants, and growth fits.

Error norms are evaluated against manufactured solutions by element and
face quadrature; orthogonal projections solve the Gram system of the
chosen norm.  The field-of-values machinery turns coercivity/continuity
of an assembled system into a GMRES iteration bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly, linalg, mesh

__all__ = [
    "NORM_KEYS",
    "ErrorReport",
    "FovEstimate",
    "FitResult",
    "error_norms",
    "orthogonal_projection",
    "gram_matrix",
    "gram_condition_estimate",
    "quasi_opt_ratio",
    "fov_constants",
    "gamma_from_sigma",
    "elman_iteration_bound",
    "fit_growth_rate",
]

NORM_KEYS = ("l2", "h1k", "v1", "v2")


@dataclass(frozen=True)
class ErrorReport:
    """Absolute/relative errors and exact-solution norms, keyed by NORM_KEYS."""

    absolute: dict
    relative: dict
    exact: dict


@dataclass(frozen=True)
class FovEstimate:
    """Field-of-values bounds of a weighted preconditioned system.

    ``coercivity`` is a lower bound on the distance of the weighted numerical
    range from the origin (the smallest generalized eigenvalue of the
    Hermitian part), ``operator_norm`` the exact weighted operator norm.
    """

    coercivity: float
    operator_norm: float
    cos_sigma: float
    sigma: float
    gamma_sigma: float
    eps: float
    definite: bool


@dataclass(frozen=True)
class FitResult:
    exponent: float
    intercept: float
    residual: float


# ---------------------------------------------------------------------------
# discrete field evaluation on quadrature grids

def _volume_eval(space, coeffs, npts):
    """Per-element values/gradients/Laplacians of a discrete function.

    Returns (pts, w, val, grad, lap) with pts (ne, nq, d), shared weights
    w (nq,) including the Jacobian, and fields of shape (ne, nq[, d]).
    """
    t, w = mesh.gauss_rule(npts)
    origins = space.element_origins()
    c = np.asarray(coeffs)[space.dof_map]
    if space.dim == 1:
        h = space.h_dirs[0]
        val_t, d1_t, d2_t = mesh.local_tables_1d(space, t)
        pts = (origins[:, 0][:, None] + h * t[None, :])[:, :, None]
        val = np.einsum("ea,aq->eq", c, val_t)
        grad = np.einsum("ea,aq->eq", c, d1_t)[:, :, None]
        lap = np.einsum("ea,aq->eq", c, d2_t)
        return pts, w * h, val, grad, lap
    hx, hy = space.h_dirs
    val_t, gx_t, gy_t, lap_t, sref, tref = mesh.local_tables_2d(space, t, t)
    wj = (w[:, None] * w[None, :]).ravel() * hx * hy
    pts = np.empty((space.n_elements, sref.size, 2))
    pts[:, :, 0] = origins[:, 0][:, None] + hx * sref[None, :]
    pts[:, :, 1] = origins[:, 1][:, None] + hy * tref[None, :]
    val = np.einsum("el,lq->eq", c, val_t)
    grad = np.stack([np.einsum("el,lq->eq", c, gx_t),
                     np.einsum("el,lq->eq", c, gy_t)], axis=-1)
    lap = np.einsum("el,lq->eq", c, lap_t)
    return pts, wj, val, grad, lap


def _face_eval(space, coeffs, face, npts):
    """Traces (pts, w, val, grad) of a discrete function on one face group."""
    c = np.asarray(coeffs)[space.dof_map[face.elements]]
    if space.dim == 1:
        tt = np.array([face.ref_coord])
        val_t, d1_t, _ = mesh.local_tables_1d(space, tt)
        (a, b), = space.domain.bounds
        x = a if face.name == "left" else b
        pts = np.array([[[x]]])
        val = np.einsum("ea,aq->eq", c, val_t)
        grad = np.einsum("ea,aq->eq", c, d1_t)[:, :, None]
        return pts, np.array([1.0]), val, grad
    t, w = mesh.gauss_rule(npts)
    tang = 1 - face.axis
    htan = space.h_dirs[tang]
    val_t, gx_t, gy_t = mesh.face_tables_2d(space, face, t)
    lo, hi = space.domain.bounds[face.axis]
    fixed = lo if face.ref_coord == 0.0 else hi
    orig = space.element_origins()[face.elements][:, tang]
    pts = np.empty((face.elements.size, t.size, 2))
    pts[:, :, tang] = orig[:, None] + htan * t[None, :]
    pts[:, :, face.axis] = fixed
    val = np.einsum("el,lq->eq", c, val_t)
    grad = np.stack([np.einsum("el,lq->eq", c, gx_t),
                     np.einsum("el,lq->eq", c, gy_t)], axis=-1)
    return pts, w * htan, val, grad


def _exact_fields(data, pts_flat):
    val = data.exact_value(pts_flat)
    grad = np.asarray(data.exact_gradient(pts_flat))
    lap = data.exact_laplacian(pts_flat)
    return val, grad, lap


def _norms_from_fields(space, ctx, vol, faces):
    """Assemble the four squared norms from pointwise (difference) fields."""
    k, L = ctx.k, ctx.norm_length
    w, val, grad, lap = vol
    sq = lambda a: np.abs(a) ** 2
    l2 = float(np.einsum("q,eq->", w, sq(val)))
    gr = float(np.einsum("q,eq->", w, sq(grad).sum(axis=-1)))
    lp = float(np.einsum("q,eq->", w, sq(lap)))
    helm = float(np.einsum("q,eq->", w, sq(lap + k**2 * val)))
    bnd = 0.0
    for face, (wf, fval, fgrad) in faces:
        n = face.normal
        dn = fgrad @ n
        tg = fgrad - dn[:, :, None] * n[None, None, :]
        bnd += float(np.einsum("q,eq->", wf, sq(dn)))
        bnd += float(np.einsum("q,eq->", wf, sq(tg).sum(axis=-1)))
        bnd += k**2 * float(np.einsum("q,eq->", wf, sq(fval)))
    h1k = gr + k**2 * l2
    return {
        "l2": l2,
        "h1k": h1k,
        "v1": lp / k**2 + h1k + L * bnd,
        "v2": helm + h1k + L * bnd,
    }


def _plane_wave_exact_norms(space, ctx, data):
    """Closed-form norms of exp(ik a.x) on the interval/rectangle."""
    k, L = ctx.k, ctx.norm_length
    a = np.asarray(data.direction)
    if space.dim == 1:
        (lo, hi), = space.domain.bounds
        vol = hi - lo
        bnd = 2 * k**2 * a[0] ** 2 + 2 * k**2
    else:
        (ax, bx), (ay, by) = space.domain.bounds
        vol = (bx - ax) * (by - ay)
        perim = 2 * ((bx - ax) + (by - ay))
        bnd = 2 * k**2 * perim
    sq = {
        "l2": vol,
        "h1k": 2 * k**2 * vol,
        "v1": 3 * k**2 * vol + L * bnd,
        "v2": 2 * k**2 * vol + L * bnd,
    }
    return {key: math.sqrt(v) for key, v in sq.items()}


def error_norms(space, coeffs, data, ctx, pts_per_dir=None):
    """Errors of a coefficient vector against the manufactured solution.

    Integration uses an oscillation-aware elevated quadrature; exact-solution
    norms come from closed forms for plane waves, from quadrature otherwise.
    """
    if data.exact_value is None:
        raise ValueError("manufactured exact solution required")
    npts = assembly.data_rule_points(space, ctx.k) if pts_per_dir is None else int(pts_per_dir)
    pts, w, val, grad, lap = _volume_eval(space, coeffs, npts)
    flat = pts.reshape(-1, space.dim)
    uval, ugrad, ulap = _exact_fields(data, flat)
    shape2 = pts.shape[:2]
    dval = val - uval.reshape(shape2)
    dgrad = grad - ugrad.reshape(shape2 + (space.dim,))
    dlap = lap - ulap.reshape(shape2)

    faces_err, faces_exact = [], []
    for face in mesh.boundary_faces(space):
        fpts, fw, fval, fgrad = _face_eval(space, coeffs, face, npts)
        fflat = fpts.reshape(-1, space.dim)
        euval = data.exact_value(fflat).reshape(fpts.shape[:2])
        eugrad = np.asarray(data.exact_gradient(fflat)).reshape(fpts.shape[:2] + (space.dim,))
        faces_err.append((face, (fw, fval - euval, fgrad - eugrad)))
        faces_exact.append((face, (fw, euval, eugrad)))

    err_sq = _norms_from_fields(space, ctx, (w, dval, dgrad, dlap), faces_err)
    absolute = {key: math.sqrt(max(v, 0.0)) for key, v in err_sq.items()}

    if data.label == "plane_wave":
        exact = _plane_wave_exact_norms(space, ctx, data)
    else:
        s2 = pts.shape[:2]
        ex_sq = _norms_from_fields(
            space, ctx,
            (w, uval.reshape(s2), ugrad.reshape(s2 + (space.dim,)), ulap.reshape(s2)),
            faces_exact)
        exact = {key: math.sqrt(max(v, 0.0)) for key, v in ex_sq.items()}

    relative = {key: absolute[key] / exact[key] if exact[key] > 0 else math.inf
                for key in NORM_KEYS}
    return ErrorReport(absolute, relative, exact)


# ---------------------------------------------------------------------------
# orthogonal projections

def gram_matrix(space, norm_kind, ctx):
    """Gram matrix of the chosen norm on the discrete space."""
    core = assembly.assemble_core(space, ctx)
    k = ctx.k
    if norm_kind == "l2":
        return core.mass
    if norm_kind == "h1k":
        return (core.stiffness + k**2 * core.mass).tocsr()
    if norm_kind == "v1":
        return assembly.assemble_weight(space, ctx, 1)
    if norm_kind == "v2":
        return assembly.assemble_weight(space, ctx, 2)
    raise ValueError(f"unknown norm {norm_kind!r}")


def _projection_rhs(space, data, norm_kind, ctx):
    k, L = ctx.k, ctx.norm_length
    dim = space.dim

    def vol_coeff(pts):
        flat = pts.reshape(-1, dim)
        shape = pts.shape[:2]
        u = data.exact_value(flat).reshape(shape)
        out = {}
        if norm_kind == "l2":
            out["val"] = u
            return out
        g = np.asarray(data.exact_gradient(flat)).reshape(shape + (dim,))
        out["val"] = k**2 * u
        out["gx"] = g[:, :, 0]
        if dim == 2:
            out["gy"] = g[:, :, 1]
        if norm_kind == "h1k":
            return out
        lap = data.exact_laplacian(flat).reshape(shape)
        if norm_kind == "v1":
            out["lap"] = lap / k**2
        else:  # v2: Helmholtz residual against the test Helmholtz operator
            helm = lap + k**2 * u
            out["lap"] = out.get("lap", 0) + helm
            out["val"] = out["val"] + k**2 * helm
        return out

    rhs = assembly.volume_functional(space, k, vol_coeff)
    if norm_kind in ("v1", "v2"):
        def bnd_coeff(pts, face):
            flat = pts.reshape(-1, dim)
            shape = pts.shape[:2]
            u = data.exact_value(flat).reshape(shape)
            g = np.asarray(data.exact_gradient(flat)).reshape(shape + (dim,))
            n = face.normal
            dn = g @ n
            out = {"dn": L * dn, "val": L * k**2 * u}
            if dim == 2:
                tang = 1 - face.axis
                out["gx" if tang == 0 else "gy"] = L * g[:, :, tang]
            return out
        rhs = rhs + assembly.boundary_functional(space, k, bnd_coeff)
    return rhs


def orthogonal_projection(space, data, norm_kind, ctx):
    """Coefficients of the norm-orthogonal projection (best approximation)."""
    if norm_kind not in NORM_KEYS:
        raise ValueError(f"unknown norm {norm_kind!r}")
    G = gram_matrix(space, norm_kind, ctx)
    rhs = _projection_rhs(space, data, norm_kind, ctx)
    return linalg.spd_factor(G).solve(rhs)


def gram_condition_estimate(space, norm_kind, ctx):
    """1-norm condition estimate of the Gram matrix of the chosen norm."""
    G = sp.csc_matrix(gram_matrix(space, norm_kind, ctx))
    lu = spla.splu(G)
    n = G.shape[0]
    # the Gram matrix is symmetric, so the solve is its own transpose
    inv = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lu.solve, dtype=float)
    return float(spla.onenormest(G) * spla.onenormest(inv))


def quasi_opt_ratio(space, ctx, data):
    """Galerkin error over best-approximation error in the first graph norm.

    The Galerkin solution is the coercive system with the 1/3 stabilization
    weight, matching the norm the ratio is measured in.
    """
    ms_ctx = ctx if ctx.ls_weight == assembly.ONE_THIRD else \
        assembly.WaveContext(ctx.k, ctx.domain, ctx.beta, assembly.ONE_THIRD,
                             ctx.norm_length, ctx.formulation)
    sysm = assembly.assemble_ms(space, ms_ctx, data)
    u_gal = linalg.direct_solve(sysm.matrix, sysm.rhs)
    u_best = orthogonal_projection(space, data, "v1", ms_ctx)
    e_gal = error_norms(space, u_gal, data, ms_ctx).absolute["v1"]
    e_best = error_norms(space, u_best, data, ms_ctx).absolute["v1"]
    return e_gal / e_best


# ---------------------------------------------------------------------------
# field-of-values constants and the iteration bound

def gamma_from_sigma(sigma):
    """Contraction factor of the improved Elman-type residual bound."""
    return 2.0 * math.sin(sigma / (4.0 - 2.0 * sigma / math.pi))


def fov_constants(B, D, tol=1e-9, maxiter=5000, seed=0):
    """Coercivity/continuity bounds of the weighted left-preconditioned system.

    For the system matrix B with SPD weight D, the weighted numerical range
    of D^{-1}B has distance from the origin at least the smallest eigenvalue
    of the pencil (Herm(B), D); the weighted operator norm is the square root
    of the largest eigenvalue of (B* D^{-1} B, D).
    """
    Dfac = D if isinstance(D, linalg.SpdFactor) else linalg.spd_factor(D)
    Bs = sp.csr_matrix(B)
    n = Bs.shape[0]
    Hm = (Bs + Bs.getH()) * 0.5
    coer, _ = linalg.hermitian_pencil_extremes(Hm, Dfac, tol=tol, maxiter=maxiter, seed=seed)

    Dmat = Dfac.matrix
    if n <= linalg._DENSE_EIG_LIMIT:
        Bd = Bs.toarray()
        T = Bd.conj().T @ Dfac.solve(Bd)
        T = (T + T.conj().T) * 0.5
        w = sla.eigh(T, Dmat.toarray(), eigvals_only=True)
        lam_max = float(w[-1])
    else:
        BH = Bs.getH().tocsr()
        op = spla.LinearOperator((n, n), matvec=lambda x: BH @ Dfac.solve(Bs @ x),
                                 dtype=complex)
        Minv = spla.LinearOperator((n, n), matvec=Dfac.solve, dtype=complex)
        rng = np.random.default_rng(seed)
        try:
            w = spla.eigsh(op, k=1, M=Dmat, Minv=Minv, which="LA",
                           v0=rng.standard_normal(n), tol=tol, maxiter=maxiter,
                           return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise np.linalg.LinAlgError(f"operator-norm iteration did not converge: {exc}") from exc
        lam_max = float(np.real(w[0]))
    norm = math.sqrt(max(lam_max, 0.0))

    definite = coer > 0.0
    cos_sigma = coer / norm if norm > 0 else -math.inf
    sigma = math.acos(min(max(cos_sigma, -1.0), 1.0))
    gamma = gamma_from_sigma(sigma)
    return FovEstimate(coer, norm, cos_sigma, sigma, gamma, math.pi / 2 - sigma, definite)


def elman_iteration_bound(fov, delta):
    """Iterations guaranteed to reduce the weighted residual by delta.

    Returns None when the bound does not apply (numerical range may touch
    the origin, or the contraction factor is not below one).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    gamma = fov.gamma_sigma
    if not fov.definite or gamma >= 1.0:
        return None
    c0 = (2.0 + 2.0 / math.sqrt(3.0)) * (2.0 + gamma)
    if delta >= c0:
        return 0
    if gamma == 0.0:
        return 1
    return max(math.ceil(math.log(delta / c0) / math.log(gamma)), 0)


def fit_growth_rate(ks, values):
    """Least-squares slope of log(values) against log(ks)."""
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if ks.size != values.size or ks.size < 2:
        raise ValueError("need two same-length samples at least")
    if np.any(ks <= 0) or np.any(values <= 0):
        raise ValueError("samples must be positive")
    x, y = np.log(ks), np.log(values)
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissae")
    coeffs, res, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(res[0]) if res.size else 0.0
    return FitResult(float(coeffs[0]), float(coeffs[1]), residual)
