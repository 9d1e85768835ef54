"""Complex sparse linear algebra for the benchmark suite.

Direct solves, SPD factorizations with their induced inner products,
weighted GMRES built on the weighted Arnoldi process, and extreme
generalized eigenvalues of Hermitian pencils.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SpdFactor",
    "GmresResult",
    "direct_solve",
    "spd_factor",
    "weighted_gmres",
    "hermitian_pencil_extremes",
]

_DENSE_EIG_LIMIT = 2000


def direct_solve(A, b):
    """Solve Ax = b with a sparse (or dense) LU factorization.

    Raises numpy.linalg.LinAlgError when the matrix is singular to working
    precision.
    """
    b = np.asarray(b)
    if sp.issparse(A):
        try:
            lu = spla.splu(sp.csc_matrix(A.astype(complex)))
            x = lu.solve(b.astype(complex))
        except RuntimeError as exc:   # SuperLU signals singular factors this way
            raise np.linalg.LinAlgError(str(exc)) from exc
    else:
        x = np.linalg.solve(np.asarray(A, dtype=complex), b.astype(complex))
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("solution is not finite; matrix singular to working precision")
    return x


class SpdFactor:
    """Factorization of a real symmetric positive-definite matrix.

    Exposes solves against the matrix plus the inner product and norm it
    induces.  Small matrices are checked by dense Cholesky; large ones are
    factorized by equilibrated sparse LU with random-vector positivity
    checks.
    """

    def __init__(self, mat, dense_limit=1500):
        A = sp.csr_matrix(mat)
        if np.iscomplexobj(A.data):
            if np.abs(A.data.imag).max(initial=0.0) > 1e-12 * max(np.abs(A.data.real).max(initial=0.0), 1e-300):
                raise ValueError("weight matrix must be real")
            A = A.real.tocsr()
        asym = abs(A - A.T)
        scale = np.abs(A.data).max(initial=0.0)
        if asym.data.size and np.abs(asym.data).max() > 1e-10 * max(scale, 1e-300):
            raise ValueError("weight matrix must be symmetric")
        A = (A + A.T) * 0.5
        self.matrix = A.tocsr()
        self.shape = A.shape
        n = A.shape[0]
        diag = self.matrix.diagonal()
        if np.any(diag <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        self._dense = n <= dense_limit
        if self._dense:
            try:
                self._chol = sla.cho_factor(self.matrix.toarray())
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError("matrix is not positive definite") from exc
            self._lu = None
            self._scale = None
        else:
            # mixed DOF types make the raw matrix badly scaled; factor the
            # symmetrically equilibrated matrix instead.  Partial pivoting
            # scrambles U-diagonal signs, so definiteness is spot-checked on
            # random vectors and on the refined solve residual.
            self._scale = 1.0 / np.sqrt(diag)
            scaled = sp.diags(self._scale) @ self.matrix @ sp.diags(self._scale)
            self._lu = spla.splu(sp.csc_matrix(scaled))
            rng = np.random.default_rng(0)
            for _ in range(6):
                v = rng.standard_normal(n)
                if v @ (self.matrix @ v) <= 0:
                    raise np.linalg.LinAlgError("matrix is not positive definite")
            x = self._solve_real(rng.standard_normal(n))
            if not np.all(np.isfinite(x)):
                raise np.linalg.LinAlgError("matrix is numerically singular")

    def _solve_real(self, b):
        x = self._scale * self._lu.solve(np.ascontiguousarray(self._scale * b))
        # one step of iterative refinement
        resid = b - self.matrix @ x
        x += self._scale * self._lu.solve(np.ascontiguousarray(self._scale * resid))
        return x

    def solve(self, b):
        b = np.asarray(b)
        if self._dense:
            if np.iscomplexobj(b):
                return sla.cho_solve(self._chol, b.real) + 1j * sla.cho_solve(self._chol, b.imag)
            return sla.cho_solve(self._chol, b)
        if np.iscomplexobj(b):
            return self._solve_real(b.real) + 1j * self._solve_real(b.imag)
        return self._solve_real(b.astype(float, copy=False))

    def matvec(self, v):
        return self.matrix @ v

    def inner(self, v, w):
        """<v, w>_D = w* D v."""
        return np.vdot(w, self.matrix @ v)

    def norm(self, v):
        return float(np.sqrt(np.real(np.vdot(v, self.matrix @ v))))


def spd_factor(D):
    """Factor a real symmetric positive-definite matrix."""
    return SpdFactor(D)


@dataclass
class GmresResult:
    solution: np.ndarray
    iterations: int
    residuals: np.ndarray      # weight-norm residual history, r^0 first
    converged: bool
    achieved: float            # final relative residual in the weight norm


class _Identity:
    def matvec(self, v):
        return v


class _Weight:
    def __init__(self, factor):
        self.factor = factor

    def matvec(self, v):
        return self.factor.matvec(v)


class _InverseWeight:
    def __init__(self, factor):
        self.factor = factor

    def matvec(self, v):
        return self.factor.solve(v)


def _as_matvec(A):
    if callable(A) and not hasattr(A, "dot"):
        return A
    return lambda v: A @ v


def weighted_gmres(op, rhs, weight=None, tol=1e-6, maxit=None, side="none"):
    """Full (restart-free) GMRES minimizing the residual in a weighted norm.

    ``op`` is the system matrix, or a pair (P, B) with P an SPD matrix or
    SpdFactor when ``side`` is "left"/"right": left preconditioning solves
    P^{-1}B x = P^{-1} rhs, right preconditioning solves B P^{-1} y = rhs and
    returns x = P^{-1} y.  The minimization norm defaults to the natural one
    (Euclidean, the P-norm, or the P^{-1}-norm respectively); pass
    ``weight="identity"`` to force plain GMRES or an SpdFactor to override.
    The initial guess is zero and ``tol`` is relative to the first residual.
    """
    if not 0 < tol < 1:
        raise ValueError("tolerance must lie in (0, 1)")
    rhs = np.asarray(rhs, dtype=complex)
    n = rhs.shape[0]

    if side == "none":
        matvec = _as_matvec(op)
        b = rhs
        back = None
    elif side in ("left", "right"):
        P, B = op
        if not isinstance(P, SpdFactor):
            P = SpdFactor(P)
        Bmv = _as_matvec(B)
        if side == "left":
            matvec = lambda v: P.solve(Bmv(v))
            b = P.solve(rhs)
            back = None
        else:
            matvec = lambda v: Bmv(P.solve(v))
            b = rhs
            back = P.solve
    else:
        raise ValueError(f"unknown preconditioning side {side!r}")

    if weight is None:
        if side == "left":
            W = _Weight(P)
        elif side == "right":
            W = _InverseWeight(P)
        else:
            W = _Identity()
    elif weight == "identity":
        W = _Identity()
    elif isinstance(weight, SpdFactor):
        W = _Weight(weight)
    else:
        W = _Weight(SpdFactor(weight))

    if maxit is None:
        maxit = n

    zb = W.matvec(b)
    beta = np.sqrt(np.real(np.vdot(b, zb)))
    history = [beta]
    if beta == 0.0:
        return GmresResult(np.zeros(n, dtype=complex), 0, np.array(history), True, 0.0)

    V = [b / beta]
    Z = [zb / beta]
    H = np.zeros((maxit + 1, maxit), dtype=complex)
    cs = np.zeros(maxit, dtype=float)
    sn = np.zeros(maxit, dtype=complex)
    g = np.zeros(maxit + 1, dtype=complex)
    g[0] = beta

    converged = False
    breakdown = False
    m = 0
    for j in range(maxit):
        w = matvec(V[j])
        zw = W.matvec(w)
        # modified Gram-Schmidt in the weight inner product, one extra pass
        for _ in range(2):
            for i in range(j + 1):
                hij = np.vdot(V[i], zw)
                H[i, j] += hij
                w = w - hij * V[i]
                zw = zw - hij * Z[i]
        hn = np.sqrt(max(np.real(np.vdot(w, zw)), 0.0))
        H[j + 1, j] = hn

        # apply stored Givens rotations, then create the new one
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.sqrt(np.abs(H[j, j]) ** 2 + hn**2)
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        elif H[j, j] == 0.0:
            cs[j], sn[j] = 0.0, 1.0
        else:
            cs[j] = np.abs(H[j, j]) / denom
            sn[j] = (H[j, j] / np.abs(H[j, j])) * np.conj(H[j + 1, j]) / denom
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]

        m = j + 1
        history.append(abs(g[j + 1]))
        if abs(g[j + 1]) <= tol * beta:
            converged = True
            break
        if hn <= 1e-14 * beta:   # happy breakdown: Krylov space is invariant
            breakdown = True
            break
        V.append(w / hn)
        Z.append(zw / hn)

    y = sla.solve_triangular(H[:m, :m], g[:m])
    x = np.zeros(n, dtype=complex)
    for i in range(m):
        x += y[i] * V[i]
    if back is not None:
        x = back(x)
    achieved = history[-1] / beta
    if breakdown and achieved <= tol:
        converged = True
    return GmresResult(x, m, np.array(history), converged, achieved)


def hermitian_pencil_extremes(H, D, tol=1e-9, maxiter=5000, seed=0):
    """Extreme eigenvalues of the pencil (H, D) with H Hermitian, D SPD.

    Dense LAPACK below the size limit; otherwise ARPACK with shift-invert at
    zero for the smallest eigenvalue (exact for definite pencils, which is
    the large-scale use here) and regular mode for the largest.  Raises on
    non-convergence.
    """
    Dfac = D if isinstance(D, SpdFactor) else SpdFactor(D)
    Dmat = Dfac.matrix
    n = Dmat.shape[0]
    Hs = sp.csr_matrix(H) if sp.issparse(H) else np.asarray(H)
    defect = Hs - (Hs.conj().T if not sp.issparse(Hs) else Hs.getH())
    dmax = np.abs(defect.data).max(initial=0.0) if sp.issparse(defect) else np.abs(defect).max(initial=0.0)
    hmax = np.abs(Hs.data).max(initial=0.0) if sp.issparse(Hs) else np.abs(Hs).max(initial=0.0)
    if dmax > 1e-8 * max(hmax, 1e-300):
        raise ValueError("matrix is not Hermitian")

    if n <= _DENSE_EIG_LIMIT:
        Hd = Hs.toarray() if sp.issparse(Hs) else Hs
        w = sla.eigh(Hd, Dmat.toarray(), eigvals_only=True)
        return float(w[0]), float(w[-1])

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    Hc = sp.csc_matrix(Hs.astype(complex))
    Minv = spla.LinearOperator((n, n), matvec=Dfac.solve, dtype=complex)
    try:
        wmax = spla.eigsh(Hc, k=1, M=Dmat, Minv=Minv, which="LA", v0=v0,
                          tol=tol, maxiter=maxiter, return_eigenvectors=False)
        lu = spla.splu(Hc)
        opinv = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(np.asarray(x, dtype=complex)),
                                    dtype=complex)
        wmin = spla.eigsh(Hc, k=1, M=Dmat, sigma=0.0, OPinv=opinv, which="LM",
                          v0=v0, tol=tol, maxiter=maxiter, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise np.linalg.LinAlgError(f"eigenvalue iteration did not converge: {exc}") from exc
    return float(np.real(wmin[0])), float(np.real(wmax[0]))
