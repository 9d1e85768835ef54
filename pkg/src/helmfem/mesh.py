"""Uniform C1 cubic (Hermite) finite element spaces on intervals and rectangles.

The degrees of freedom at each mesh node are the function value and the
physical first derivative(s); in 2-d the per-node layout is
(value, d/dx, d/dy, d2/dxdy), so coefficient vectors have a
mesh-independent meaning.  Only uniform meshes are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Domain",
    "C1Space",
    "BasisEval",
    "QuadRule",
    "Face",
    "build_space_1d",
    "build_space_2d",
    "eval_basis",
    "quadrature_rule",
    "boundary_faces",
    "interpolate",
    "evaluate_function",
]


# ---------------------------------------------------------------------------
# reference shape functions

def hermite_shapes(t):
    """Cubic Hermite shape functions on the reference interval [0, 1].

    Returns (values, first derivatives, second derivatives), each of shape
    (4, len(t)).  Local ordering: value-left, slope-left, value-right,
    slope-right.  Derivatives are with respect to the reference coordinate.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    v = np.stack([
        1.0 - 3.0 * t**2 + 2.0 * t**3,
        t - 2.0 * t**2 + t**3,
        3.0 * t**2 - 2.0 * t**3,
        -(t**2) + t**3,
    ])
    d1 = np.stack([
        -6.0 * t + 6.0 * t**2,
        1.0 - 4.0 * t + 3.0 * t**2,
        6.0 * t - 6.0 * t**2,
        -2.0 * t + 3.0 * t**2,
    ])
    d2 = np.stack([
        -6.0 + 12.0 * t,
        -4.0 + 6.0 * t,
        6.0 - 12.0 * t,
        -2.0 + 6.0 * t,
    ])
    return v, d1, d2


def scaled_shapes(t, h):
    """Shape tables on an element of size h, slope DOFs carrying the h factor.

    Returned derivative tables are physical (d/dx, d2/dx2), so a coefficient
    attached to a slope DOF is the physical derivative at the node.
    """
    v, d1, d2 = hermite_shapes(t)
    scale = np.array([1.0, h, 1.0, h])[:, None]
    return v * scale, d1 * scale / h, d2 * scale / h**2


# ---------------------------------------------------------------------------
# domain and space

@dataclass(frozen=True)
class Domain:
    """Interval or axis-aligned rectangle, star-shaped about a center point.

    ``length`` is the characteristic length (interval length, rectangle
    diagonal) and ``gamma`` the star-shapedness constant: every boundary
    face satisfies (x - center) . n >= gamma * length.
    """

    dim: int
    bounds: tuple  # ((ax, bx),) or ((ax, bx), (ay, by))
    center: tuple
    length: float
    gamma: float

    @classmethod
    def interval(cls, a, b, center=None):
        a, b = float(a), float(b)
        if not b > a:
            raise ValueError(f"degenerate interval ({a}, {b})")
        c = 0.5 * (a + b) if center is None else float(center)
        if not a < c < b:
            raise ValueError("star center must lie strictly inside the interval")
        length = b - a
        gamma = min(c - a, b - c) / length
        return cls(1, ((a, b),), (c,), length, gamma)

    @classmethod
    def rectangle(cls, lo, hi, center=None):
        (ax, ay), (bx, by) = (float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1]))
        if not (bx > ax and by > ay):
            raise ValueError("degenerate rectangle")
        c = (0.5 * (ax + bx), 0.5 * (ay + by)) if center is None else (float(center[0]), float(center[1]))
        if not (ax < c[0] < bx and ay < c[1] < by):
            raise ValueError("star center must lie strictly inside the rectangle")
        length = math.hypot(bx - ax, by - ay)
        gamma = min(c[0] - ax, bx - c[0], c[1] - ay, by - c[1]) / length
        return cls(2, ((ax, bx), (ay, by)), c, length, gamma)

    def beta_threshold(self):
        """Smallest multiplier parameter for which coercivity is guaranteed."""
        return 0.5 * self.length * (1.0 + 4.0 / self.gamma + self.gamma / 2.0)

    def face_distances(self):
        """(x - center) . n for each boundary face."""
        out = []
        for axis, (lo, hi) in enumerate(self.bounds):
            out.append(self.center[axis] - lo)
            out.append(hi - self.center[axis])
        return out


@dataclass(frozen=True)
class C1Space:
    """C1 piecewise-(bi)cubic space on a uniform mesh of the domain."""

    domain: Domain
    shape: tuple           # (n,) or (nx, ny) element counts
    nodes: tuple           # per-direction node coordinate arrays
    h_dirs: tuple          # per-direction element sizes
    h: float               # meshwidth (element diameter)
    ndof: int
    dof_map: np.ndarray    # (n_elements, n_local) global DOF indices
    quad_points: int = 6   # Gauss points per direction used in assembly

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n_elements(self):
        return self.dof_map.shape[0]

    @property
    def n_local(self):
        return self.dof_map.shape[1]

    def element_origins(self):
        """Lower-left corner coordinates of every element, shape (ne, dim)."""
        if self.dim == 1:
            return self.nodes[0][:-1][:, None]
        nx, ny = self.shape
        ex, ey = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return np.column_stack([self.nodes[0][ex.ravel()], self.nodes[1][ey.ravel()]])


def build_space_1d(endpoints, n, center=None, quad_points=6):
    """C1 cubic space on a uniform mesh of an interval with n elements."""
    n = int(n)
    if n < 1:
        raise ValueError("element count must be positive")
    dom = endpoints if isinstance(endpoints, Domain) else Domain.interval(endpoints[0], endpoints[1], center)
    (a, b), = dom.bounds
    nodes = np.linspace(a, b, n + 1)
    h = (b - a) / n
    ndof = 2 * n + 2
    e = np.arange(n)[:, None]
    dof_map = 2 * e + np.arange(4)[None, :]
    return C1Space(dom, (n,), (nodes,), (h,), h, ndof, dof_map, quad_points)


def build_space_2d(corners, nx, ny, center=None, quad_points=6):
    """Tensor-product bicubic C1 space on a uniform nx-by-ny rectangle mesh."""
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("element counts must be positive")
    if isinstance(corners, Domain):
        dom = corners
    else:
        dom = Domain.rectangle(corners[0], corners[1], center)
    (ax, bx), (ay, by) = dom.bounds
    nodes_x = np.linspace(ax, bx, nx + 1)
    nodes_y = np.linspace(ay, by, ny + 1)
    hx, hy = (bx - ax) / nx, (by - ay) / ny
    h = math.hypot(hx, hy)
    ndof = (2 * nx + 2) * (2 * ny + 2)

    # local index l = 4*a + b pairs the 1-d local indices in x (a) and y (b);
    # global per-node layout is (v, v_x, v_y, v_xy)
    a = np.arange(4)
    ex = np.repeat(np.arange(nx), ny)
    ey = np.tile(np.arange(ny), nx)
    ia = ex[:, None] + (a >= 2)[None, :]    # (ne, 4) node index in x for each a
    ca = (a % 2)[None, :]
    jb = ey[:, None] + (a >= 2)[None, :]
    cb = (a % 2)[None, :]
    gx = ia[:, :, None] * (ny + 1) + jb[:, None, :]          # node id (ne, 4, 4)
    dof_map = 4 * gx + ca[:, :, None] + 2 * cb[:, None, :]
    dof_map = dof_map.reshape(nx * ny, 16)
    return C1Space(dom, (nx, ny), (nodes_x, nodes_y), (hx, hy), h, ndof, dof_map, quad_points)


# ---------------------------------------------------------------------------
# basis evaluation

@dataclass(frozen=True)
class BasisEval:
    """Value, gradient, and Laplacian of one shape function at one point."""

    value: float
    gradient: np.ndarray
    laplacian: float
    normal_derivative: float | None = None
    tangential_gradient: np.ndarray | None = None


_FACES_1D = {"left": (0.0, -1.0), "right": (1.0, 1.0)}
# 2-d faces: (fixed axis, fixed reference coordinate, outward normal)
_FACES_2D = {
    "left": (0, 0.0, (-1.0, 0.0)),
    "right": (0, 1.0, (1.0, 0.0)),
    "bottom": (1, 0.0, (0.0, -1.0)),
    "top": (1, 1.0, (0.0, 1.0)),
}


def eval_basis(space, element, local_index, point, face=None):
    """Evaluate one local shape function at a reference point of an element.

    ``point`` is a reference coordinate in [0, 1]^dim.  With ``face`` given
    (a key of the domain's boundary faces), the normal derivative and, in
    2-d, the tangential gradient at that boundary point are also filled in.
    """
    if not 0 <= local_index < space.n_local:
        raise IndexError(f"local index {local_index} out of range")
    if not 0 <= element < space.n_elements:
        raise IndexError(f"element {element} out of range")
    if space.dim == 1:
        t = float(point) if np.isscalar(point) else float(np.asarray(point).ravel()[0])
        if not 0.0 <= t <= 1.0:
            raise ValueError("reference point outside the element")
        v, d1, d2 = scaled_shapes([t], space.h_dirs[0])
        ev = BasisEval(v[local_index, 0], d1[local_index, :1].copy(), d2[local_index, 0])
        if face is not None:
            _, nrm = _FACES_1D[face]
            ev = BasisEval(ev.value, ev.gradient, ev.laplacian,
                           normal_derivative=nrm * ev.gradient[0])
        return ev

    s, t = float(point[0]), float(point[1])
    if not (0.0 <= s <= 1.0 and 0.0 <= t <= 1.0):
        raise ValueError("reference point outside the element")
    a, b = divmod(local_index, 4)
    vx, dx, dxx = scaled_shapes([s], space.h_dirs[0])
    vy, dy, dyy = scaled_shapes([t], space.h_dirs[1])
    val = vx[a, 0] * vy[b, 0]
    grad = np.array([dx[a, 0] * vy[b, 0], vx[a, 0] * dy[b, 0]])
    lap = dxx[a, 0] * vy[b, 0] + vx[a, 0] * dyy[b, 0]
    if face is None:
        return BasisEval(val, grad, lap)
    _, _, nrm = _FACES_2D[face]
    nrm = np.asarray(nrm)
    dn = float(grad @ nrm)
    return BasisEval(val, grad, lap, normal_derivative=dn,
                     tangential_gradient=grad - dn * nrm)


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class Face:
    """One boundary face group: the elements along it and its geometry."""

    name: str
    elements: np.ndarray    # element ids adjacent to this face
    axis: int               # fixed axis (0 in 1-d)
    ref_coord: float        # reference coordinate on the fixed axis (0 or 1)
    normal: np.ndarray      # outward unit normal


def boundary_faces(space):
    """Boundary face groups of the mesh, in a fixed order."""
    if space.dim == 1:
        n = space.shape[0]
        return [
            Face("left", np.array([0]), 0, 0.0, np.array([-1.0])),
            Face("right", np.array([n - 1]), 0, 1.0, np.array([1.0])),
        ]
    nx, ny = space.shape
    eid = lambda ex, ey: ex * ny + ey
    return [
        Face("left", eid(0, np.arange(ny)), 0, 0.0, np.array([-1.0, 0.0])),
        Face("right", eid(nx - 1, np.arange(ny)), 0, 1.0, np.array([1.0, 0.0])),
        Face("bottom", eid(np.arange(nx), 0), 1, 0.0, np.array([0.0, -1.0])),
        Face("top", eid(np.arange(nx), ny - 1), 1, 1.0, np.array([0.0, 1.0])),
    ]


def gauss_rule(npts):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(npts))
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class QuadRule:
    """Physical quadrature points/weights per element and per boundary face."""

    points: np.ndarray          # (ne, nq, dim)
    weights: np.ndarray         # (ne, nq), Jacobian included
    face_points: dict           # face name -> (nf, nqf, dim)
    face_weights: dict          # face name -> (nf, nqf)
    degree: int                 # polynomial exactness per direction


def quadrature_rule(space, points_per_dir=None):
    """Tensor Gauss-Legendre rule over all elements and boundary faces."""
    q = space.quad_points if points_per_dir is None else int(points_per_dir)
    t, w = gauss_rule(q)
    origins = space.element_origins()
    if space.dim == 1:
        h = space.h_dirs[0]
        pts = (origins[:, 0][:, None] + h * t[None, :])[:, :, None]
        wts = np.broadcast_to(h * w, pts.shape[:2]).copy()
        fpts, fwts = {}, {}
        for face in boundary_faces(space):
            (a, b), = space.domain.bounds
            x = a if face.name == "left" else b
            fpts[face.name] = np.array([[[x]]])
            fwts[face.name] = np.array([[1.0]])   # point evaluation
        return QuadRule(pts, wts, fpts, fwts, 2 * q - 1)

    hx, hy = space.h_dirs
    s2, t2 = np.meshgrid(t, t, indexing="ij")
    s2, t2 = s2.ravel(), t2.ravel()
    w2 = (w[:, None] * w[None, :]).ravel() * hx * hy
    pts = np.empty((space.n_elements, s2.size, 2))
    pts[:, :, 0] = origins[:, 0][:, None] + hx * s2[None, :]
    pts[:, :, 1] = origins[:, 1][:, None] + hy * t2[None, :]
    wts = np.broadcast_to(w2, pts.shape[:2]).copy()
    fpts, fwts = {}, {}
    for face in boundary_faces(space):
        tang = 1 - face.axis
        htan = space.h_dirs[tang]
        lo, hi = space.domain.bounds[face.axis]
        fixed = lo if face.ref_coord == 0.0 else hi
        orig = origins[face.elements][:, tang]
        p = np.empty((face.elements.size, q, 2))
        p[:, :, tang] = orig[:, None] + htan * t[None, :]
        p[:, :, face.axis] = fixed
        fpts[face.name] = p
        fwts[face.name] = np.broadcast_to(htan * w, p.shape[:2]).copy()
    return QuadRule(pts, wts, fpts, fwts, 2 * q - 1)


# ---------------------------------------------------------------------------
# vectorized basis tables (assembly/analysis backend)

def local_tables_1d(space, t):
    """Shape tables (4, len(t)) at reference points: value, d/dx, d2/dx2."""
    return scaled_shapes(t, space.h_dirs[0])


def local_tables_2d(space, s, t):
    """Tensor-product tables for the 16 local functions at the grid of (s, t).

    Returns (val, gx, gy, lap, sref, tref) with leading shape (16, ns*nt);
    sref/tref are the flattened reference coordinates.
    """
    vx, dx, dxx = scaled_shapes(s, space.h_dirs[0])
    vy, dy, dyy = scaled_shapes(t, space.h_dirs[1])
    val = np.einsum("aq,br->abqr", vx, vy)
    gx = np.einsum("aq,br->abqr", dx, vy)
    gy = np.einsum("aq,br->abqr", vx, dy)
    lap = np.einsum("aq,br->abqr", dxx, vy) + np.einsum("aq,br->abqr", vx, dyy)
    nq = len(s) * len(t)
    sref, tref = np.meshgrid(np.asarray(s, dtype=float), np.asarray(t, dtype=float), indexing="ij")
    out = tuple(arr.reshape(16, nq) for arr in (val, gx, gy, lap))
    return out + (sref.ravel(), tref.ravel())


def face_tables_2d(space, face, t):
    """Traces of the 16 local functions on a boundary face at tangential points t.

    Returns (val, gx, gy) of shape (16, len(t)), full physical gradient.
    """
    t = np.asarray(t, dtype=float)
    if face.axis == 0:
        vx, dx, _ = scaled_shapes([face.ref_coord], space.h_dirs[0])
        vy, dy, _ = scaled_shapes(t, space.h_dirs[1])
        val = np.einsum("aq,br->abr", vx, vy).reshape(16, t.size)
        gx = np.einsum("aq,br->abr", dx, vy).reshape(16, t.size)
        gy = np.einsum("aq,br->abr", vx, dy).reshape(16, t.size)
    else:
        vx, dx, _ = scaled_shapes(t, space.h_dirs[0])
        vy, dy, _ = scaled_shapes([face.ref_coord], space.h_dirs[1])
        val = np.einsum("ar,bq->abr", vx, vy).reshape(16, t.size)
        gx = np.einsum("ar,bq->abr", dx, vy).reshape(16, t.size)
        gy = np.einsum("ar,bq->abr", vx, dy).reshape(16, t.size)
    return val, gx, gy


# ---------------------------------------------------------------------------
# interpolation and point evaluation

def interpolate(space, value, gradient=None, cross=None):
    """Coefficients of the Hermite interpolant of a smooth function.

    ``value``/``gradient``/``cross`` are callables of an (m, dim) point array;
    gradient returns (m, dim) and cross (2-d only) the mixed derivative (m,).
    """
    if space.dim == 1:
        x = space.nodes[0][:, None]
        coeffs = np.empty(space.ndof, dtype=complex)
        coeffs[0::2] = value(x)
        if gradient is None:
            raise ValueError("gradient callable required for C1 interpolation")
        coeffs[1::2] = np.asarray(gradient(x))[:, 0]
        return coeffs
    if gradient is None or cross is None:
        raise ValueError("gradient and cross-derivative callables required in 2-d")
    X, Y = np.meshgrid(space.nodes[0], space.nodes[1], indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    g = np.asarray(gradient(pts))
    coeffs = np.empty(space.ndof, dtype=complex)
    coeffs[0::4] = value(pts)
    coeffs[1::4] = g[:, 0]
    coeffs[2::4] = g[:, 1]
    coeffs[3::4] = cross(pts)
    return coeffs


def evaluate_function(space, coeffs, pts):
    """Value, gradient, and Laplacian of a discrete function at physical points.

    ``pts`` has shape (m, dim).  Points are assigned to elements by rounding
    down; points on interior interfaces take the right/upper element.
    """
    pts = np.asarray(pts, dtype=float)
    coeffs = np.asarray(coeffs)
    m = pts.shape[0]
    if space.dim == 1:
        (a, _), = space.domain.bounds
        h = space.h_dirs[0]
        e = np.clip(((pts[:, 0] - a) / h).astype(int), 0, space.shape[0] - 1)
        tloc = (pts[:, 0] - a) / h - e
        v, d1, d2 = scaled_shapes(tloc, h)   # (4, m)
        c = coeffs[space.dof_map[e]]         # (m, 4)
        val = np.einsum("ma,am->m", c, v)
        grad = np.einsum("ma,am->m", c, d1)[:, None]
        lap = np.einsum("ma,am->m", c, d2)
        return val, grad, lap

    (ax, _), (ay, _) = space.domain.bounds
    hx, hy = space.h_dirs
    nx, ny = space.shape
    ex = np.clip(((pts[:, 0] - ax) / hx).astype(int), 0, nx - 1)
    ey = np.clip(((pts[:, 1] - ay) / hy).astype(int), 0, ny - 1)
    s = (pts[:, 0] - ax) / hx - ex
    t = (pts[:, 1] - ay) / hy - ey
    vx, dx, dxx = scaled_shapes(s, hx)
    vy, dy, dyy = scaled_shapes(t, hy)
    e = ex * ny + ey
    c = coeffs[space.dof_map[e]].reshape(m, 4, 4)   # (m, a, b)
    val = np.einsum("mab,am,bm->m", c, vx, vy)
    gx = np.einsum("mab,am,bm->m", c, dx, vy)
    gy = np.einsum("mab,am,bm->m", c, vx, dy)
    lap = np.einsum("mab,am,bm->m", c, dxx, vy) + np.einsum("mab,am,bm->m", c, vx, dyy)
    return val, np.column_stack([gx, gy]), lap
