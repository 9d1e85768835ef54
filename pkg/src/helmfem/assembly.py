"""Galerkin assembly for the Helmholtz interior impedance problem.

Builds the standard, least-squares, and Morawetz-multiplier (MS) systems,
the generalized stabilized family they are special cases of, and the real
SPD weight matrices that represent the two graph norms on the C1 space.
All sesquilinear forms conjugate the test (second) argument; the basis is
real, so conjugation only flips explicit ik factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import mesh

__all__ = [
    "ONE_THIRD",
    "K_SQUARED",
    "WaveContext",
    "CoreMatrices",
    "AssembledSystem",
    "ProblemData",
    "assemble_core",
    "assemble_standard",
    "assemble_ls",
    "assemble_ms",
    "assemble_bz",
    "assemble_a0",
    "assemble_ax",
    "assemble_weight",
    "volume_functional",
    "boundary_functional",
]

ONE_THIRD = "one-third"
K_SQUARED = "k-squared"


@dataclass(frozen=True)
class WaveContext:
    """Problem parameters shared by all formulations.

    ``ls_weight`` selects the least-squares stabilization weight: the tags
    ``ONE_THIRD`` and ``K_SQUARED`` pick the two standard choices, any float
    is used verbatim.  ``beta`` defaults to the smallest value for which the
    MS form is provably coercive on the given domain.  ``norm_length`` is
    the length weight of the boundary terms in the graph norms (default 1).
    """

    k: float
    domain: mesh.Domain
    beta: float | None = None
    ls_weight: float | str = ONE_THIRD
    norm_length: float = 1.0
    formulation: str = "ms"

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("wavenumber must be positive")
        if self.norm_length <= 0:
            raise ValueError("norm length weight must be positive")

    @property
    def beta_value(self):
        return self.domain.beta_threshold() if self.beta is None else float(self.beta)

    @property
    def ls_weight_value(self):
        if self.ls_weight == ONE_THIRD:
            return 1.0 / 3.0
        if self.ls_weight == K_SQUARED:
            return self.k**2
        return float(self.ls_weight)

    @property
    def center(self):
        return np.asarray(self.domain.center, dtype=float)


@dataclass(frozen=True)
class CoreMatrices:
    """The real symmetric building blocks of every assembled system."""

    stiffness: sp.csr_matrix           # grad-grad
    mass: sp.csr_matrix                # value-value
    boundary_mass: sp.csr_matrix       # trace-trace on the boundary
    boundary_tangential: sp.csr_matrix  # tangential gradients (no entries in 1-d)
    boundary_normal: sp.csr_matrix     # normal derivatives
    bilaplacian: sp.csr_matrix         # Laplacian-Laplacian
    helmholtz_pair: sp.csr_matrix      # (Lap + k^2)-(Lap + k^2)


@dataclass(frozen=True)
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    ctx: WaveContext


@dataclass(frozen=True)
class ProblemData:
    """Volume source and impedance boundary datum, optionally manufactured.

    ``source`` maps an (m, dim) point array to complex values (None means
    identically zero); ``boundary`` additionally receives the outward unit
    normal of the face.  Manufactured instances carry the exact solution in
    closed form.
    """

    source: object
    boundary: object
    exact_value: object = None
    exact_gradient: object = None
    exact_laplacian: object = None
    exact_cross: object = None
    label: str = "custom"
    k: float | None = None
    direction: tuple | None = None

    @classmethod
    def zero(cls, dim=1):
        return cls(None, lambda x, n: np.zeros(x.shape[0], dtype=complex), label="zero")

    @classmethod
    def plane_wave(cls, k, dim=1, direction=None):
        """Exact solution exp(ik a.x): zero source, impedance trace datum."""
        if direction is None:
            direction = [1.0] + [0.0] * (dim - 1)
        a = np.asarray(direction, dtype=float)
        nrm = np.linalg.norm(a)
        if nrm == 0:
            raise ValueError("direction must be a nonzero vector")
        a = a / nrm
        k = float(k)

        def value(x):
            return np.exp(1j * k * (np.asarray(x) @ a))

        def gradient(x):
            return 1j * k * a[None, :] * value(x)[:, None]

        def laplacian(x):
            return -(k**2) * value(x)

        def cross(x):
            return -(k**2) * a[0] * a[1] * value(x)

        def boundary(x, n):
            return 1j * k * (float(a @ np.asarray(n)) - 1.0) * value(x)

        return cls(None, boundary, value, gradient, laplacian, cross,
                   label="plane_wave", k=k, direction=tuple(a))

    @classmethod
    def modulated_plane_wave(cls, k):
        """1-d exact solution (1 + x/2) exp(ikx) with a nonzero source."""
        k = float(k)

        def value(x):
            x0 = np.asarray(x)[:, 0]
            return (1.0 + 0.5 * x0) * np.exp(1j * k * x0)

        def gradient(x):
            x0 = np.asarray(x)[:, 0]
            g = (1j * k * (1.0 + 0.5 * x0) + 0.5) * np.exp(1j * k * x0)
            return g[:, None]

        def laplacian(x):
            x0 = np.asarray(x)[:, 0]
            return (-(k**2) * (1.0 + 0.5 * x0) + 1j * k) * np.exp(1j * k * x0)

        def source(x):
            # f = -(lap + k^2) u = -ik exp(ikx)
            x0 = np.asarray(x)[:, 0]
            return -1j * k * np.exp(1j * k * x0)

        def boundary(x, n):
            return float(n[0]) * gradient(x)[:, 0] - 1j * k * value(x)

        return cls(source, boundary, value, gradient, laplacian,
                   label="modulated_plane_wave", k=k, direction=(1.0,))


# ---------------------------------------------------------------------------
# low-level helpers

def _pair(w, test, trial):
    """Element matrix with entries [i, j] = sum_q w_q test[i, q] trial[j, q]."""
    return np.einsum("q,iq,jq->ij", w, test, trial, optimize=True)


def _scatter(space, dofs, data):
    """Accumulate per-element blocks (ne, nl, nl) into a global CSR matrix."""
    rows = np.broadcast_to(dofs[:, :, None], data.shape)
    cols = np.broadcast_to(dofs[:, None, :], data.shape)
    mat = sp.coo_matrix((np.ascontiguousarray(data).ravel(),
                         (rows.ravel(), cols.ravel())),
                        shape=(space.ndof, space.ndof))
    return mat.tocsr()


def _scatter_same(space, block, elements=None):
    dofs = space.dof_map if elements is None else space.dof_map[elements]
    data = np.broadcast_to(block, (dofs.shape[0],) + block.shape)
    return _scatter(space, dofs, data)


def _scatter_linear(space, base, lin_x, lin_y=None, elements=None):
    """Blocks base + cx*lin_x (+ cy*lin_y), cx/cy the centered element origins."""
    dofs = space.dof_map if elements is None else space.dof_map[elements]
    origins = space.element_origins()
    if elements is not None:
        origins = origins[elements]
    c = origins - np.asarray(space.domain.center)[None, :]
    data = np.broadcast_to(base, (dofs.shape[0],) + base.shape).astype(complex)
    data = data + c[:, 0][:, None, None] * lin_x
    if lin_y is not None:
        data = data + c[:, 1][:, None, None] * lin_y
    return _scatter(space, dofs, data)


def data_rule_points(space, k):
    """Quadrature order per direction for non-polynomial data and errors.

    12 points suffice in resolved regimes; the order grows with kh so that
    oscillatory integrands stay accurate on badly under-resolved meshes.
    """
    kh = float(k) * max(space.h_dirs)
    return int(min(48, max(12, math.ceil(1.5 * kh) + 4)))


def _volume_tables_1d(space, npts=None):
    t, w = mesh.gauss_rule(space.quad_points if npts is None else npts)
    val, d1, d2 = mesh.local_tables_1d(space, t)
    return t, w * space.h_dirs[0], val, d1, d2


def _volume_tables_2d(space, npts=None):
    q = space.quad_points if npts is None else npts
    t, w = mesh.gauss_rule(q)
    val, gx, gy, lap, sref, tref = mesh.local_tables_2d(space, t, t)
    wj = (w[:, None] * w[None, :]).ravel() * space.h_dirs[0] * space.h_dirs[1]
    return sref, tref, wj, val, gx, gy, lap


def _face_quad(space, face, npts=None):
    """Tangential rule and trace tables for one boundary face group."""
    q = space.quad_points if npts is None else npts
    t, w = mesh.gauss_rule(q)
    if space.dim == 1:
        # point "integration": one node, weight 1
        tt = np.array([face.ref_coord])
        val, d1, _ = mesh.local_tables_1d(space, tt)
        return np.array([1.0]), val, d1, d1 * face.normal[0], None, np.zeros(1)
    tang = 1 - face.axis
    htan = space.h_dirs[tang]
    val, gx, gy = mesh.face_tables_2d(space, face, t)
    wf = w * htan
    dn = face.normal[0] * gx + face.normal[1] * gy
    gt = gx if tang == 0 else gy
    return wf, val, (gx, gy), dn, gt, t


def _face_origin_offsets(space, face):
    """Centered coordinates of the face: tangential element origins and the
    fixed-axis offset (x - x0) on the face."""
    origins = space.element_origins()[face.elements]
    x0 = np.asarray(space.domain.center)
    lo, hi = space.domain.bounds[face.axis]
    fixed = (lo if face.ref_coord == 0.0 else hi) - x0[face.axis]
    if space.dim == 1:
        return np.zeros(1), fixed
    tang = 1 - face.axis
    return origins[:, tang] - x0[tang], fixed


def _face_blocks(space, face, base, lin_tang=None):
    """Scatter per-face blocks base + ct*lin_tang over the face's elements."""
    dofs = space.dof_map[face.elements]
    ct, _ = _face_origin_offsets(space, face)
    data = np.broadcast_to(base, (dofs.shape[0],) + base.shape).astype(complex)
    if lin_tang is not None:
        data = data + ct[:, None, None] * lin_tang
    return _scatter(space, dofs, data)


# ---------------------------------------------------------------------------
# core matrices

def assemble_core(space, ctx):
    """The seven real symmetric matrices every formulation is built from."""
    k = ctx.k
    if space.dim == 1:
        _, wj, val, d1, d2 = _volume_tables_1d(space)
        S = _scatter_same(space, _pair(wj, d1, d1))
        M = _scatter_same(space, _pair(wj, val, val))
        L1 = _scatter_same(space, _pair(wj, d2, d2))
        lk = d2 + k**2 * val
        L2 = _scatter_same(space, _pair(wj, lk, lk))
        N0 = sp.csr_matrix((space.ndof, space.ndof))
        N2 = sp.csr_matrix((space.ndof, space.ndof))
        for face in mesh.boundary_faces(space):
            wf, v, d, dn, _, _ = _face_quad(space, face)
            N0 = N0 + _face_blocks(space, face, _pair(wf, v, v))
            N2 = N2 + _face_blocks(space, face, _pair(wf, dn, dn))
        N1 = sp.csr_matrix((space.ndof, space.ndof))  # no tangential direction
        return CoreMatrices(S, M, N0.tocsr(), N1, N2.tocsr(), L1, L2)

    _, _, wj, val, gx, gy, lap = _volume_tables_2d(space)
    S = _scatter_same(space, _pair(wj, gx, gx) + _pair(wj, gy, gy))
    M = _scatter_same(space, _pair(wj, val, val))
    L1 = _scatter_same(space, _pair(wj, lap, lap))
    lk = lap + k**2 * val
    L2 = _scatter_same(space, _pair(wj, lk, lk))
    N0 = sp.csr_matrix((space.ndof, space.ndof))
    N1 = sp.csr_matrix((space.ndof, space.ndof))
    N2 = sp.csr_matrix((space.ndof, space.ndof))
    for face in mesh.boundary_faces(space):
        wf, v, _, dn, gt, _ = _face_quad(space, face)
        N0 = N0 + _face_blocks(space, face, _pair(wf, v, v))
        N1 = N1 + _face_blocks(space, face, _pair(wf, gt, gt))
        N2 = N2 + _face_blocks(space, face, _pair(wf, dn, dn))
    return CoreMatrices(S, M, N0.tocsr(), N1.tocsr(), N2.tocsr(), L1, L2)


def assemble_weight(space, ctx, variant):
    """Real SPD weight matrix of the variant-j graph norm (j = 1 or 2)."""
    if variant not in (1, 2):
        raise ValueError("weight variant must be 1 or 2")
    k, L = ctx.k, ctx.norm_length
    core = assemble_core(space, ctx)
    bnd = k**2 * core.boundary_mass + core.boundary_tangential + core.boundary_normal
    if variant == 1:
        vol = core.bilaplacian / k**2
    else:
        vol = core.helmholtz_pair
    D = vol + core.stiffness + k**2 * core.mass + L * bnd
    D = (D + D.T) * 0.5
    return sp.csr_matrix(D.real) if np.iscomplexobj(D.data) else D.tocsr()


# ---------------------------------------------------------------------------
# right-hand sides

def volume_functional(space, k, coeff):
    """Assemble sum_q w f-coefficients against (val, grad, lap) of the basis.

    ``coeff(pts)`` returns a dict with optional keys val/gx/gy/lap mapping to
    (ne, nq) coefficient fields already multiplied by the data.
    """
    npts = data_rule_points(space, k)
    rhs = np.zeros(space.ndof, dtype=complex)
    if space.dim == 1:
        t, w = mesh.gauss_rule(npts)
        val, d1, d2 = mesh.local_tables_1d(space, t)
        wj = w * space.h_dirs[0]
        x = space.element_origins()[:, 0][:, None] + space.h_dirs[0] * t[None, :]
        fields = coeff(x[:, :, None])
        tables = {"val": val, "gx": d1, "lap": d2}
        for key, table in tables.items():
            if key in fields:
                contrib = np.einsum("q,eq,iq->ei", wj, fields[key], table, optimize=True)
                np.add.at(rhs, space.dof_map.ravel(), contrib.ravel())
        return rhs
    t, w = mesh.gauss_rule(npts)
    val, gx, gy, lap, sref, tref = mesh.local_tables_2d(space, t, t)
    wj = (w[:, None] * w[None, :]).ravel() * space.h_dirs[0] * space.h_dirs[1]
    origins = space.element_origins()
    pts = np.empty((space.n_elements, sref.size, 2))
    pts[:, :, 0] = origins[:, 0][:, None] + space.h_dirs[0] * sref[None, :]
    pts[:, :, 1] = origins[:, 1][:, None] + space.h_dirs[1] * tref[None, :]
    fields = coeff(pts)
    tables = {"val": val, "gx": gx, "gy": gy, "lap": lap}
    for key, table in tables.items():
        if key in fields:
            contrib = np.einsum("q,eq,iq->ei", wj, fields[key], table, optimize=True)
            np.add.at(rhs, space.dof_map.ravel(), contrib.ravel())
    return rhs


def boundary_functional(space, k, coeff):
    """Like volume_functional but on the boundary; coefficients get (pts, face)."""
    npts = data_rule_points(space, k)
    rhs = np.zeros(space.ndof, dtype=complex)
    for face in mesh.boundary_faces(space):
        if space.dim == 1:
            wf, v, d1, dn, _, _ = _face_quad(space, face)
            (a, b), = space.domain.bounds
            x = np.array([[a if face.name == "left" else b]])
            fields = coeff(x[None, :, :], face)
            tables = {"val": v, "gx": d1, "dn": dn}
            for key, table in tables.items():
                if key in fields:
                    contrib = np.einsum("q,eq,iq->ei", wf, fields[key], table, optimize=True)
                    np.add.at(rhs, space.dof_map[face.elements].ravel(), contrib.ravel())
            continue
        t, w = mesh.gauss_rule(npts)
        tang = 1 - face.axis
        htan = space.h_dirs[tang]
        val, gx, gy = mesh.face_tables_2d(space, face, t)
        wf = w * htan
        dn = face.normal[0] * gx + face.normal[1] * gy
        lo, hi = space.domain.bounds[face.axis]
        fixed = lo if face.ref_coord == 0.0 else hi
        orig = space.element_origins()[face.elements][:, tang]
        pts = np.empty((face.elements.size, t.size, 2))
        pts[:, :, tang] = orig[:, None] + htan * t[None, :]
        pts[:, :, face.axis] = fixed
        fields = coeff(pts, face)
        tables = {"val": val, "gx": gx, "gy": gy, "dn": dn}
        for key, table in tables.items():
            if key in fields:
                contrib = np.einsum("q,eq,iq->ei", wf, fields[key], table, optimize=True)
                np.add.at(rhs, space.dof_map[face.elements].ravel(), contrib.ravel())
    return rhs


def _center_offsets(pts, x0):
    return pts - np.asarray(x0)[None, None, :]


# ---------------------------------------------------------------------------
# standard formulation

def assemble_standard(space, ctx, data):
    """System of the standard H1 variational formulation: S - k^2 M - ik N0."""
    k = ctx.k
    core = assemble_core(space, ctx)
    A = core.stiffness.astype(complex) - k**2 * core.mass - 1j * k * core.boundary_mass
    rhs = np.zeros(space.ndof, dtype=complex)
    if data.source is not None:
        rhs += volume_functional(space, k, lambda pts: {"val": data.source(pts.reshape(-1, space.dim)).reshape(pts.shape[:2])})
    rhs += boundary_functional(space, k, lambda pts, face: {
        "val": data.boundary(pts.reshape(-1, space.dim), face.normal).reshape(pts.shape[:2])})
    return AssembledSystem(A.tocsr(), rhs, ctx)


# ---------------------------------------------------------------------------
# least-squares formulation

def assemble_ls(space, ctx, data):
    """Least-squares system: Helmholtz residual plus impedance-trace residual.

    The functional is the first-order condition of minimizing
    |Lu + f|^2 + |d_n u - iku - g|^2, so the load pairs f with the Helmholtz
    operator of the test function and g with its impedance trace.
    """
    k = ctx.k
    core = assemble_core(space, ctx)
    A = core.helmholtz_pair.astype(complex)
    for face in mesh.boundary_faces(space):
        wf, v, _, dn, _, _ = _face_quad(space, face)
        block = _pair(wf, dn + 1j * k * v, dn - 1j * k * v)
        A = A + _face_blocks(space, face, block)
    rhs = np.zeros(space.ndof, dtype=complex)
    if data.source is not None:
        def vol_coeff(pts):
            f = data.source(pts.reshape(-1, space.dim)).reshape(pts.shape[:2])
            return {"val": -(k**2) * f, "lap": -f}
        rhs += volume_functional(space, k, vol_coeff)

    def bnd_coeff(pts, face):
        g = data.boundary(pts.reshape(-1, space.dim), face.normal).reshape(pts.shape[:2])
        return {"dn": g, "val": 1j * k * g}
    rhs += boundary_functional(space, k, bnd_coeff)
    return AssembledSystem(A.tocsr(), rhs, ctx)


# ---------------------------------------------------------------------------
# MS formulation

def assemble_ms(space, ctx, data, require_coercive=False):
    """System of the Morawetz-multiplier formulation.

    All position-dependent terms use coordinates centered at the domain's
    star center.  With ``require_coercive`` the multiplier coefficient must
    be at least the domain's coercivity threshold.
    """
    k, beta, A_w = ctx.k, ctx.beta_value, ctx.ls_weight_value
    if require_coercive and beta < space.domain.beta_threshold() - 1e-12:
        raise ValueError(
            f"beta={beta} below the coercivity threshold "
            f"{space.domain.beta_threshold():.6g} of the domain")
    d = space.dim
    half = 0.5 * (d - 1)

    if d == 1:
        h = space.h_dirs[0]
        t, wj, val, d1, d2 = _volume_tables_1d(space)
        li = d2 + k**2 * val
        trial_base = h * t[None, :] * d1 + (-1j * k * beta + half) * val \
            + (A_w / k**2) * d2 + A_w * val
        e_base = _pair(wj, d1, d1) + k**2 * _pair(wj, val, val) + _pair(wj, li, trial_base)
        e_lin = _pair(wj, li, d1)
        B = _scatter_linear(space, e_base.astype(complex), e_lin.astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, d1t, dn, _, _ = _face_quad(space, face)
            _, c = _face_origin_offsets(space, face)
            xi = face.normal[0]
            g = d1t  # physical derivative trace
            block = -(1j * k * c * _pair(wf, g, v)
                      - k**2 * beta * _pair(wf, v, v)
                      - 1j * k * beta * xi * _pair(wf, g, v)
                      + c * xi * k**2 * _pair(wf, v, v))
            B = B + _face_blocks(space, face, block)
    else:
        sref, tref, wj, val, gx, gy, lap = _volume_tables_2d(space)
        hx, hy = space.h_dirs
        li = lap + k**2 * val
        trial_base = hx * sref[None, :] * gx + hy * tref[None, :] * gy \
            + (-1j * k * beta + half) * val + (A_w / k**2) * lap + A_w * val
        e_base = _pair(wj, gx, gx) + _pair(wj, gy, gy) + k**2 * _pair(wj, val, val) \
            + _pair(wj, li, trial_base)
        B = _scatter_linear(space, e_base.astype(complex),
                            _pair(wj, li, gx).astype(complex),
                            _pair(wj, li, gy).astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, (gxf, gyf), dn, gt, tq = _face_quad(space, face)
            ct, cfix = _face_origin_offsets(space, face)
            tang = 1 - face.axis
            htan = space.h_dirs[tang]
            gfix = gxf if face.axis == 0 else gyf
            xn = cfix * face.normal[face.axis]   # (x - x0) . n, constant on the face
            # test-side multiplier trace:  x.grad(v) + (ik beta + half) v
            test_base = htan * tq[None, :] * gt + cfix * gfix + (1j * k * beta + half) * v
            t1_base = 1j * k * _pair(wf, test_base, v)
            t1_lin = 1j * k * _pair(wf, gt, v)
            # trial-side tangential multiplier against the normal derivative
            trial_tang = htan * tq[None, :] * gt + (-1j * k * beta + half) * v
            t2_base = _pair(wf, dn, trial_tang)
            t2_lin = _pair(wf, dn, gt)
            t3 = xn * (k**2 * _pair(wf, v, v) - _pair(wf, gt, gt))
            B = B + _face_blocks(space, face, -(t1_base + t2_base + t3),
                                 -(t1_lin + t2_lin))

    rhs = np.zeros(space.ndof, dtype=complex)
    if data.source is not None:
        def vol_coeff(pts):
            f = data.source(pts.reshape(-1, space.dim)).reshape(pts.shape[:2])
            off = _center_offsets(pts, space.domain.center)
            out = {"val": (1j * k * beta + half - A_w) * f, "lap": -(A_w / k**2) * f,
                   "gx": off[:, :, 0] * f}
            if space.dim == 2:
                out["gy"] = off[:, :, 1] * f
            return out
        rhs += volume_functional(space, k, vol_coeff)

    def bnd_coeff(pts, face):
        g = data.boundary(pts.reshape(-1, space.dim), face.normal).reshape(pts.shape[:2])
        off = _center_offsets(pts, space.domain.center)
        out = {"val": (1j * k * beta + half) * g, "gx": off[:, :, 0] * g}
        if space.dim == 2:
            out["gy"] = off[:, :, 1] * g
        return out
    rhs += boundary_functional(space, k, bnd_coeff)
    return AssembledSystem(B.tocsr(), rhs, ctx)


# ---------------------------------------------------------------------------
# generalized stabilized family

def assemble_bz(space, ctx, z1, z2, data):
    """The two-parameter stabilized family containing the MS formulation.

    With z1 = conj(z2) = (d-1)/2 + ik*beta this reproduces assemble_ms
    entrywise (checked in the tests, since the two take different code
    paths on purpose).
    """
    k, A_w = ctx.k, ctx.ls_weight_value
    z1, z2 = complex(z1), complex(z2)
    d = space.dim

    if d == 1:
        h = space.h_dirs[0]
        t, wj, val, d1, d2 = _volume_tables_1d(space)
        li = d2 + k**2 * val
        trial_base = h * t[None, :] * d1 + z2 * val + (A_w / k**2) * li
        e_base = (1.0 + z1 + z2) * _pair(wj, d1, d1) \
            + (1.0 - z1 - z2) * k**2 * _pair(wj, val, val) \
            + _pair(wj, li, trial_base)
        B = _scatter_linear(space, e_base.astype(complex),
                            _pair(wj, li, d1).astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, d1t, dn, _, _ = _face_quad(space, face)
            _, c = _face_origin_offsets(space, face)
            xi = face.normal[0]
            block = -(1j * k * (c * _pair(wf, d1t, v) + z1 * _pair(wf, v, v))
                      + z2 * xi * _pair(wf, d1t, v)
                      + c * xi * k**2 * _pair(wf, v, v))
            B = B + _face_blocks(space, face, block)
    else:
        sref, tref, wj, val, gx, gy, lap = _volume_tables_2d(space)
        hx, hy = space.h_dirs
        li = lap + k**2 * val
        trial_base = hx * sref[None, :] * gx + hy * tref[None, :] * gy \
            + z2 * val + (A_w / k**2) * li
        e_base = (z1 + z2) * (_pair(wj, gx, gx) + _pair(wj, gy, gy)) \
            + (2.0 - z1 - z2) * k**2 * _pair(wj, val, val) \
            + _pair(wj, li, trial_base)
        B = _scatter_linear(space, e_base.astype(complex),
                            _pair(wj, li, gx).astype(complex),
                            _pair(wj, li, gy).astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, (gxf, gyf), dn, gt, tq = _face_quad(space, face)
            ct, cfix = _face_origin_offsets(space, face)
            tang = 1 - face.axis
            htan = space.h_dirs[tang]
            gfix = gxf if face.axis == 0 else gyf
            xn = cfix * face.normal[face.axis]
            test_full = htan * tq[None, :] * gt + cfix * gfix + z1 * v
            t1_base = 1j * k * _pair(wf, test_full, v)
            t1_lin = 1j * k * _pair(wf, gt, v)
            trial_tang = htan * tq[None, :] * gt + z2 * v
            t2_base = _pair(wf, dn, trial_tang)
            t2_lin = _pair(wf, dn, gt)
            t3 = xn * (k**2 * _pair(wf, v, v) - _pair(wf, gt, gt))
            B = B + _face_blocks(space, face, -(t1_base + t2_base + t3),
                                 -(t1_lin + t2_lin))

    rhs = np.zeros(space.ndof, dtype=complex)
    if data.source is not None:
        def vol_coeff(pts):
            f = data.source(pts.reshape(-1, space.dim)).reshape(pts.shape[:2])
            off = _center_offsets(pts, space.domain.center)
            out = {"val": (z1 - A_w) * f, "lap": -(A_w / k**2) * f,
                   "gx": off[:, :, 0] * f}
            if space.dim == 2:
                out["gy"] = off[:, :, 1] * f
            return out
        rhs += volume_functional(space, k, vol_coeff)

    def bnd_coeff(pts, face):
        g = data.boundary(pts.reshape(-1, space.dim), face.normal).reshape(pts.shape[:2])
        off = _center_offsets(pts, space.domain.center)
        out = {"val": z1 * g, "gx": off[:, :, 0] * g}
        if space.dim == 2:
            out["gy"] = off[:, :, 1] * g
        return out
    rhs += boundary_functional(space, k, bnd_coeff)
    return AssembledSystem(B.tocsr(), rhs, ctx)


def assemble_a0(space, ctx):
    """Matrix of the form that vanishes identically on the C1 space.

    grad-grad - k^2 mass + value against the test Helmholtz operator, minus
    the boundary value/normal-derivative pairing; integration by parts makes
    it zero, so its entries measure assembly consistency.
    """
    k = ctx.k
    if space.dim == 1:
        _, wj, val, d1, d2 = _volume_tables_1d(space)
        li = d2 + k**2 * val
        block = _pair(wj, d1, d1) - k**2 * _pair(wj, val, val) + _pair(wj, li, val)
        A = _scatter_same(space, block.astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, d1t, dn, _, _ = _face_quad(space, face)
            A = A + _face_blocks(space, face, -_pair(wf, dn, v))
        return A.tocsr()
    _, _, wj, val, gx, gy, lap = _volume_tables_2d(space)
    li = lap + k**2 * val
    block = _pair(wj, gx, gx) + _pair(wj, gy, gy) - k**2 * _pair(wj, val, val) \
        + _pair(wj, li, val)
    A = _scatter_same(space, block.astype(complex))
    for face in mesh.boundary_faces(space):
        wf, v, _, dn, _, _ = _face_quad(space, face)
        A = A + _face_blocks(space, face, -_pair(wf, dn, v))
    return A.tocsr()


def assemble_ax(space, ctx):
    """Matrix of the position-multiplier form entering the stabilized family."""
    k = ctx.k
    d = space.dim
    if d == 1:
        h = space.h_dirs[0]
        t, wj, val, d1, d2 = _volume_tables_1d(space)
        li = d2 + k**2 * val
        e_base = _pair(wj, d1, d1) + k**2 * _pair(wj, val, val) \
            + _pair(wj, li, h * t[None, :] * d1)
        A = _scatter_linear(space, e_base.astype(complex),
                            _pair(wj, li, d1).astype(complex))
        for face in mesh.boundary_faces(space):
            wf, v, d1t, dn, _, _ = _face_quad(space, face)
            _, c = _face_origin_offsets(space, face)
            xi = face.normal[0]
            block = -(1j * k * c * _pair(wf, d1t, v) + c * xi * k**2 * _pair(wf, v, v))
            A = A + _face_blocks(space, face, block)
        return A.tocsr()
    sref, tref, wj, val, gx, gy, lap = _volume_tables_2d(space)
    hx, hy = space.h_dirs
    li = lap + k**2 * val
    e_base = 2.0 * k**2 * _pair(wj, val, val) \
        + _pair(wj, li, hx * sref[None, :] * gx + hy * tref[None, :] * gy)
    A = _scatter_linear(space, e_base.astype(complex),
                        _pair(wj, li, gx).astype(complex),
                        _pair(wj, li, gy).astype(complex))
    for face in mesh.boundary_faces(space):
        wf, v, (gxf, gyf), dn, gt, tq = _face_quad(space, face)
        ct, cfix = _face_origin_offsets(space, face)
        tang = 1 - face.axis
        htan = space.h_dirs[tang]
        gfix = gxf if face.axis == 0 else gyf
        xn = cfix * face.normal[face.axis]
        test_full = htan * tq[None, :] * gt + cfix * gfix
        t1_base = 1j * k * _pair(wf, test_full, v)
        t1_lin = 1j * k * _pair(wf, gt, v)
        t2_base = _pair(wf, dn, htan * tq[None, :] * gt)
        t2_lin = _pair(wf, dn, gt)
        t3 = xn * (k**2 * _pair(wf, v, v) - _pair(wf, gt, gt))
        A = A + _face_blocks(space, face, -(t1_base + t2_base + t3),
                             -(t1_lin + t2_lin))
    return A.tocsr()
