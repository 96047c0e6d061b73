"""SPD solves by Jacobi-preconditioned CG and condition number estimates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EstimationFailureError, IterativeFailureError, NotSPDError

TOL = 1e-12
DENSE_LIMIT = 2000


@dataclass
class SolveReport:
    c: np.ndarray
    iterations: int
    residual: float  # ||f - S c|| / ||f||
    method: str
    kappa_raw: float | None = None
    kappa_jacobi: float | None = None
    c_extended: np.ndarray | None = None  # extended precision iterate after refinement


def _relres(S, c, f) -> float:
    nf = np.linalg.norm(f)
    return float(np.linalg.norm(f - S @ c) / nf) if nf > 0 else float(np.linalg.norm(S @ c))


def pcg(S, f, tol: float = TOL, maxiter: int | None = None, x0=None, stall: int = 5000):
    """Conjugate gradients with Jacobi preconditioning.

    The residual is recomputed from scratch every 50 steps; the iteration
    stops early when that true residual has not improved by 10 % within
    ``stall`` steps. Returns ``(x, iterations, converged)``.
    """
    n = S.shape[0]
    maxiter = 50 * n if maxiter is None else maxiter
    diag = np.asarray(S.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise NotSPDError("nonpositive diagonal entry")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = f - S @ x
    nf = np.linalg.norm(f)
    if nf == 0:
        return np.zeros(n), 0, True
    z = dinv * r
    p = z.copy()
    rz = r @ z
    best, best_it = np.inf, 0
    for it in range(1, maxiter + 1):
        rn = np.linalg.norm(r)
        if rn <= tol * nf:
            return x, it - 1, True
        Sp = S @ p
        curv = p @ Sp
        if curv <= 0:
            raise NotSPDError(f"negative curvature p^T S p = {curv:.3e} at iteration {it}")
        a = rz / curv
        x += a * p
        if it % 50 == 0:
            r = f - S @ x
            rn = np.linalg.norm(r)
            if rn < 0.9 * best:
                best, best_it = rn, it
            elif it - best_it >= stall:
                return x, it, False
        else:
            r -= a * Sp
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, np.linalg.norm(f - S @ x) <= tol * nf


def _factorize(S):
    n = S.shape[0]
    if n <= DENSE_LIMIT:
        try:
            cf = scipy.linalg.cho_factor(S.toarray())
        except np.linalg.LinAlgError as exc:
            raise NotSPDError(str(exc)) from exc
        return lambda b: scipy.linalg.cho_solve(cf, b)
    lu = spla.splu(S.tocsc())
    return lu.solve


def refine(S, f, x, tol: float = TOL, max_steps: int = 10):
    """Mixed-precision iterative refinement.

    Residuals and the iterate are kept in extended precision
    (``np.longdouble``); corrections come from a double precision
    factorization. Returns ``(x_extended, relative_residual)``.
    """
    solve = _factorize(S)
    Sl = S.astype(np.longdouble)
    fl = np.asarray(f, dtype=np.longdouble)
    xl = np.asarray(x, dtype=np.longdouble)
    nf = float(np.linalg.norm(np.asarray(f, dtype=float)))
    res = np.inf
    for _ in range(max_steps):
        r = fl - Sl @ xl
        res = float(np.linalg.norm(r.astype(float))) / nf
        if res <= tol:
            break
        xl = xl + solve(r.astype(float))
    return xl, res


def solve_spd(S, f, tol: float = TOL, maxiter: int | None = None) -> SolveReport:
    """Solve ``S c = f`` for symmetric positive definite ``S``.

    Jacobi-preconditioned CG first. If it stalls above the tolerance (for
    large condition numbers a double precision iterate cannot reach 1e-12),
    the CG result is refined in extended precision with a Cholesky (dense,
    ``n <= 2000``) or sparse LU factorization. ``c_extended`` holds the
    refined iterate; ``residual`` is measured for it.
    """
    f = np.asarray(f, dtype=float)
    n = S.shape[0]
    if n == 0:
        raise ValueError("empty system")
    Ss = sp.csr_matrix(S)
    if np.linalg.norm(f) == 0:
        return SolveReport(np.zeros(n), 0, 0.0, "trivial")
    x, its, ok = pcg(Ss, f, tol, maxiter)
    if ok:
        return SolveReport(x, its, _relres(Ss, x, f), "pcg")
    xl, res = refine(Ss, f, x, tol)
    if res > tol:
        raise IterativeFailureError(f"solve stalled at relative residual {res:.2e}", res)
    return SolveReport(xl.astype(float), its, res, "pcg+refinement", c_extended=xl)


def jacobi_scaled(S):
    d = 1.0 / np.sqrt(np.asarray(S.diagonal(), dtype=float))
    if sp.issparse(S):
        D = sp.diags(d)
        return (D @ S @ D).tocsc()
    return S * d[:, None] * d[None, :]


def condition_number(S, mode: str = "raw") -> float:
    """Spectral condition number of ``S`` (``mode="raw"``) or of ``D^-1/2 S D^-1/2``."""
    if mode not in ("raw", "jacobi"):
        raise ValueError(f"unknown mode {mode!r}")
    A = jacobi_scaled(S) if mode == "jacobi" else S
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        ev = scipy.linalg.eigvalsh(dense)
        if ev[0] <= 0:
            raise NotSPDError(f"smallest eigenvalue {ev[0]:.3e} <= 0")
        return float(ev[-1] / ev[0])
    A = sp.csc_matrix(A)
    try:
        lmax = spla.eigsh(A, k=1, which="LA", tol=1e-6, return_eigenvectors=False)[0]
        lmin = spla.eigsh(A, k=1, sigma=0.0, which="LM", tol=1e-6,
                          return_eigenvectors=False)[0]
    except spla.ArpackError as exc:
        raise EstimationFailureError(str(exc)) from exc
    if lmin <= 0:
        raise NotSPDError(f"smallest eigenvalue {lmin:.3e} <= 0")
    return float(lmax / lmin)


__all__ = ["SolveReport", "pcg", "refine", "solve_spd", "condition_number", "jacobi_scaled"]
