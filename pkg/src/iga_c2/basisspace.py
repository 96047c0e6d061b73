"""The C^2-smooth space W_0h as a sum of patch, edge and vertex subspaces.

Every basis function is an :class:`IsogeometricFunction`: for each patch in
its support a grid of tensor-product B-spline coefficients in the patch's
native parameterization. Edge functions are built from the gluing data of
their interface, vertex functions from the kernel of a small homogeneous
system coupling the edge and patch coefficients around a vertex.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .bspline import (SplineSpace1D, collocation_matrix, derivative, m_functions,
                      make_space, multiply_embed, represent, unit)
from .errors import (InvalidParameterError, RankAmbiguityError, RepresentationError,
                     UnsupportedRefinementError)
from .gluing import InterfaceGluing, frame_gluing
from .multipatch import Frame, MultiPatchDomain

#: coefficients outside a support window below this are rounding noise
WINDOW_TOL = 1e-11
#: relative singular value threshold deciding the rank of a vertex system
RANK_TOL = 1e-8
#: singular values in this relative band make the rank ambiguous
AMBIGUOUS_BAND = (1e-10, 1e-6)


class IsogeometricFunction:
    """One function of the space, stored as sparse per-patch coefficient grids.

    ``kind`` is ``"patch"``, ``"edge"`` or ``"vertex"`` and ``index`` the
    source indices ``(l, i, j)``, ``(s, i, j)`` or ``(rho, m)``.
    """

    def __init__(self, space: SplineSpace1D, kind: str, index: tuple, grids=None):
        self.space = space
        self.kind = kind
        self.index = tuple(index)
        self._data = {}
        for patch, grid in (grids or {}).items():
            self.set_grid(patch, grid)

    @classmethod
    def single(cls, space, kind, index, patch, i, j, value=1.0):
        out = cls(space, kind, index)
        d = space.dim
        out._data[patch] = (np.array([i * d + j]), np.array([float(value)]))
        return out

    def set_grid(self, patch: int, grid: np.ndarray):
        d = self.space.dim
        grid = np.asarray(grid, dtype=float)
        if grid.shape != (d, d):
            raise InvalidParameterError(f"grid must be {d}x{d}, got {grid.shape}")
        flat = grid.ravel()
        idx = np.flatnonzero(flat)
        if len(idx):
            self._data[patch] = (idx, flat[idx].copy())
        else:
            self._data.pop(patch, None)

    @property
    def patches(self):
        return sorted(self._data)

    def entries(self, patch: int):
        """Flat (row-major) indices and values of the nonzero coefficients on ``patch``."""
        if patch not in self._data:
            return np.zeros(0, dtype=int), np.zeros(0)
        return self._data[patch]

    def grid(self, patch: int) -> np.ndarray:
        d = self.space.dim
        out = np.zeros(d * d)
        idx, vals = self.entries(patch)
        out[idx] = vals
        return out.reshape(d, d)

    @property
    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for _, v in self._data.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "index": list(self.index),
            "grids": {str(p): self.grid(p).tolist() for p in self.patches},
        }

    def __repr__(self):
        return f"IsogeometricFunction({self.kind}, {self.index}, patches={self.patches})"


# ---------------------------------------------------------------------------
# patch functions

def patch_basis(patch: int, space: SplineSpace1D):
    """Interior functions ``N_i N_j`` with ``3 <= i, j <= d - 4``."""
    d = space.dim
    return [IsogeometricFunction.single(space, "patch", (patch, i, j), patch, i, j)
            for i in range(3, d - 3) for j in range(3, d - 3)]


# ---------------------------------------------------------------------------
# edge functions

def trace_space(space: SplineSpace1D, i: int, d_alpha: int) -> SplineSpace1D:
    p, r, k = space.p, space.r, space.k
    if i == 0:
        return make_space(p, r + 2, k, strict=False)
    if i == 1:
        return make_space(p - d_alpha, r + 1, k, strict=False)
    if i == 2:
        return make_space(p - 2 * d_alpha, r, k, strict=False)
    raise InvalidParameterError(f"edge function order i must be 0, 1 or 2, got {i}")


def trace_dims(space: SplineSpace1D, d_alpha: int):
    """``(n0, n1, n2)``."""
    return tuple(trace_space(space, i, d_alpha).dim for i in range(3))


def in_window(d: int, n_i: int, i: int, j: int) -> np.ndarray:
    """Mask of the ``(m, n)`` positions a std-frame edge function may occupy."""
    m = np.arange(d)[:, None]
    n = np.arange(d)[None, :]
    lo = np.maximum(0, i + j - m)
    hi = np.minimum(d - 1, d - n_i + j - i + m)
    return (m <= 2) & (lo <= n) & (n <= hi)


def _side_grid(space, glu: InterfaceGluing, side: str, i: int, j: int, d_alpha: int):
    p, h = space.p, space.h
    alpha, beta_t = glu.alpha(side), glu.beta_side(side)
    N = unit(trace_space(space, i, d_alpha), j)
    A = [np.zeros(space.dim) for _ in range(3)]
    if i == 0:
        A[0] = represent(space, N).coeffs
        dN = derivative(N)
        A[1] = multiply_embed(dN, beta_t, space).coeffs
        A[2] = multiply_embed(derivative(dN), beta_t ** 2, space).coeffs
    elif i == 1:
        A[1] = (p / h) * multiply_embed(N, alpha, space).coeffs
        A[2] = (p / h) * 2 * multiply_embed(derivative(N), alpha * beta_t, space).coeffs
    else:
        A[2] = (p * (p - 1) / h ** 2) * multiply_embed(N, alpha ** 2, space).coeffs
    M = m_functions(space)
    return sum(np.outer(M[a].coeffs, A[a]) for a in range(3))


def edge_std_grids(space: SplineSpace1D, glu: InterfaceGluing, i: int, j: int,
                   sides=("minus", "plus"), snap: bool = True):
    """Std-frame grids ``{side: grid}`` of the edge function ``(i, j)``."""
    d_alpha = glu.d_alpha
    n_i = trace_space(space, i, d_alpha).dim
    if not (0 <= j < n_i):
        raise InvalidParameterError(f"edge index j={j} outside [0, {n_i - 1}] for i={i}")
    out = {}
    for side in sides:
        G = _side_grid(space, glu, side, i, j, d_alpha)
        if snap:
            mask = in_window(space.dim, n_i, i, j)
            scale = max(np.max(np.abs(G)), 1.0)
            outside = np.max(np.abs(G[~mask]), initial=0.0)
            if outside > 1e-8 * scale:
                raise RepresentationError(
                    f"edge function ({i}, {j}) leaves its support window ({outside:.2e})")
            G = np.where(mask & (np.abs(G) > 1e-14 * scale), G, 0.0)
        out[side] = G
    return out


def frame_function(domain: MultiPatchDomain, frame: Frame, space: SplineSpace1D,
                   i: int, j: int, index=None, snap: bool = True, glu=None):
    """Edge function ``(i, j)`` of a (possibly one-sided) frame, in native grids."""
    glu = glu or frame_gluing(domain, frame)
    sides = [s for s, pid in (("minus", frame.minus), ("plus", frame.plus)) if pid is not None]
    std = edge_std_grids(space, glu, i, j, sides, snap=snap)
    grids = {}
    for side in sides:
        pid = frame.minus if side == "minus" else frame.plus
        sym = frame.minus_sym if side == "minus" else frame.plus_sym
        grids[pid] = sym.grid_to_native(std[side])
    idx = index if index is not None else (frame.interface, i, j)
    return IsogeometricFunction(space, "edge", idx, grids)


def edge_function(domain: MultiPatchDomain, s: int, i: int, j: int, space: SplineSpace1D,
                  snap: bool = True) -> IsogeometricFunction:
    """Edge function ``phi_{Gamma^(s); i, j}`` in the canonical frame of interface ``s``."""
    if not (0 <= s < domain.E):
        raise InvalidParameterError(f"no interface {s}")
    return frame_function(domain, domain.interface_frame(s), space, i, j, snap=snap)


def edge_index_set(space: SplineSpace1D, d_alpha: int):
    """Indices ``(i, j)``, ``5 - i <= j <= n_i + i - 6``, of the edge subspace."""
    n = trace_dims(space, d_alpha)
    return [(i, j) for i in range(3) for j in range(5 - i, n[i] + i - 5)]


def edge_basis(domain: MultiPatchDomain, s: int, space: SplineSpace1D):
    fr = domain.interface_frame(s)
    glu = frame_gluing(domain, fr)
    return [frame_function(domain, fr, space, i, j, glu=glu)
            for i, j in edge_index_set(space, glu.d_alpha)]


# ---------------------------------------------------------------------------
# vertex functions

def near_vertex_indices(space: SplineSpace1D, d_alpha: int):
    """Edge functions entering a vertex system: ``j <= 4 - i`` and clear of the far end."""
    n = trace_dims(space, d_alpha)
    return [(i, j) for i in range(3) for j in range(0, min(4 - i, n[i] + i - 6) + 1)]


def overlap_indices(space: SplineSpace1D, d_alpha: int):
    """Indices ``j <= 4 - i`` that also reach the far end of the interface."""
    n = trace_dims(space, d_alpha)
    return [(i, j) for i in range(3) for j in range(max(0, n[i] + i - 5), 5 - i)]


def _corner_matrix(space: SplineSpace1D) -> np.ndarray:
    """``E[i, a] = N_a^{(i)}(0)`` for ``i, a <= 2``."""
    return np.array([collocation_matrix(space, [0.0], i)[0, :3] for i in range(3)])


def corner_jet(space: SplineSpace1D, grid: np.ndarray) -> np.ndarray:
    """Mixed partials ``D[i, j]`` of order ``i, j <= 2`` at ``(0, 0)`` of a grid."""
    E = _corner_matrix(space)
    return E @ grid[:3, :3] @ E.T


@dataclass
class VertexSystem:
    """Homogeneous system ``H a = 0`` for the functions around one vertex."""

    H: np.ndarray
    labels: list  # ("edge", e, i, j) or ("patch", l, i, j)
    n_derivative_rows: int
    edge_functions: list  # per fan edge, list of IsogeometricFunction (None if one-sided)
    vertex: object = None

    @property
    def n_unknowns(self) -> int:
        return self.H.shape[1]

    @property
    def n_identity_rows(self) -> int:
        return self.H.shape[0] - self.n_derivative_rows


def _fan_corner_jet(fn: IsogeometricFunction, patch: int, fan_sym, space) -> np.ndarray:
    return corner_jet(space, fan_sym.grid_from_native(fn.grid(patch)))


def vertex_system(domain: MultiPatchDomain, rho: int, space: SplineSpace1D,
                  indices=None) -> VertexSystem:
    """Derivative rows at the vertex for every fan patch, plus identity rows at the boundary.

    ``indices`` restricts the edge unknowns per fan edge (default: all
    ``j <= 4 - i``).
    """
    vx = domain.vertices[rho]
    nu = vx.nu
    edge_idx = indices or [(i, j) for i in range(3) for j in range(5 - i)]
    E = _corner_matrix(space)
    labels = []
    efuncs = []
    for e, fr in enumerate(vx.fan_edges):
        glu = frame_gluing(domain, fr)
        efuncs.append([frame_function(domain, fr, space, i, j, index=(fr.interface, i, j), glu=glu)
                       for i, j in edge_idx])
        labels += [("edge", e, i, j) for i, j in edge_idx]
    ne = len(edge_idx)
    n_edge_cols = len(vx.fan_edges) * ne
    labels += [("patch", l, a, b) for l in range(nu) for a in range(3) for b in range(3)]
    ncol = len(labels)

    rows = []
    n_edges = len(vx.fan_edges)
    for l, (pid, fsym) in enumerate(vx.fan):
        own, nxt = l, (l + 1) % n_edges
        J_own = np.array([_fan_corner_jet(f, pid, fsym, space).ravel() for f in efuncs[own]]).T
        J_nxt = np.array([_fan_corner_jet(f, pid, fsym, space).ravel() for f in efuncs[nxt]]).T
        J_pat = np.kron(E, E)  # d^i d^j (N_a N_b) at the corner, rows (i, j), cols (a, b)
        sys1 = np.zeros((9, ncol))
        sys1[:, nxt * ne:(nxt + 1) * ne] += J_nxt
        sys1[:, own * ne:(own + 1) * ne] -= J_own
        sys2 = np.zeros((9, ncol))
        sys2[:, nxt * ne:(nxt + 1) * ne] += J_nxt
        sys2[:, n_edge_cols + 9 * l:n_edge_cols + 9 * (l + 1)] -= J_pat
        rows += [sys1, sys2]
    n_der = 18 * nu
    if vx.boundary:
        ident = []
        for e in (0, n_edges - 1):
            for c in range(e * ne, (e + 1) * ne):
                ident.append(c)
        ident += list(range(n_edge_cols, ncol))
        I = np.zeros((len(ident), ncol))
        I[np.arange(len(ident)), ident] = 1.0
        rows.append(I)
    H = np.vstack(rows)
    return VertexSystem(H, labels, n_der, efuncs, vx)


def null_space(H: np.ndarray, rtol: float = RANK_TOL) -> np.ndarray:
    """Kernel basis by column-pivoted QR; each vector has one free unknown set to 1.

    Rows are equilibrated first. Raises :class:`RankAmbiguityError` when a
    singular value falls in the ambiguous band.
    """
    H = np.asarray(H, dtype=float)
    scale = np.max(np.abs(H), axis=1)
    Hs = H[scale > 0] / scale[scale > 0, None]
    n = H.shape[1]
    if Hs.shape[0] == 0:
        return np.eye(n)
    sv = np.linalg.svd(Hs, compute_uv=False)
    rel = sv / sv[0]
    lo, hi = AMBIGUOUS_BAND
    if np.any((rel >= lo) & (rel <= hi)):
        raise RankAmbiguityError(
            f"singular values {rel[(rel >= lo) & (rel <= hi)]} make the rank ambiguous")
    rank = int(np.sum(rel > rtol))
    _, R, piv = scipy.linalg.qr(Hs, pivoting=True, mode="economic")
    pivots, free = piv[:rank], piv[rank:]
    order = np.argsort(free)
    free = free[order]
    X = -scipy.linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:][:, order])
    K = np.zeros((n, len(free)))
    K[pivots] = X
    K[free, np.arange(len(free))] = 1.0
    return K


def vertex_basis(domain: MultiPatchDomain, rho: int, space: SplineSpace1D,
                 indices=None, system: VertexSystem | None = None):
    """Functions ``phi_{v^(rho); m}`` from the kernel of the vertex system."""
    vs = system or vertex_system(domain, rho, space, indices)
    vx = vs.vertex
    K = null_space(vs.H)
    ne = len(vs.edge_functions[0])
    n_edge_cols = len(vs.edge_functions) * ne
    d = space.dim
    out = []
    for m in range(K.shape[1]):
        a = K[:, m]
        grids = {}
        for e, funcs in enumerate(vs.edge_functions):
            for c, f in enumerate(funcs):
                w = a[e * ne + c]
                if w == 0.0:
                    continue
                for pid in f.patches:
                    grids[pid] = grids.get(pid, np.zeros((d, d))) + w * f.grid(pid)
        for l, (pid, fsym) in enumerate(vx.fan):
            C = np.zeros((d, d))
            C[:3, :3] = a[n_edge_cols + 9 * l:n_edge_cols + 9 * (l + 1)].reshape(3, 3)
            grids[pid] = grids.get(pid, np.zeros((d, d))) - fsym.grid_to_native(C)
        scale = max(np.max(np.abs(g)) for g in grids.values())
        if scale == 0:
            continue
        for pid in grids:
            g = grids[pid] / scale
            g[np.abs(g) < 1e-14] = 0.0
            grids[pid] = g
        out.append(IsogeometricFunction(space, "vertex", (rho, m), grids))
    return out


# ---------------------------------------------------------------------------
# modified edge functions for the coarse mesh h = 1/4

def _corner_blocks(fn: IsogeometricFunction, frame: Frame) -> np.ndarray:
    blocks = []
    for pid, sym in ((frame.minus, frame.minus_sym), (frame.plus, frame.plus_sym)):
        blocks.append(sym.grid_from_native(fn.grid(pid))[:3, :3].ravel())
    return np.concatenate(blocks)


def corrected_edge_function(domain: MultiPatchDomain, s: int, space: SplineSpace1D,
                            i: int, j: int, near, tol: float = 1e-10):
    """Edge function ``(i, j)`` minus near-end edge functions at both ends of the interface.

    The correction at each end is the least-squares fit cancelling the
    coefficients of both sides in the 3x3 corner block of that end.
    """
    fr = domain.interface_frame(s)
    phi = frame_function(domain, fr, space, i, j)
    grids = {pid: phi.grid(pid) for pid in phi.patches}
    for end in (fr.start, fr.end):
        efr = domain.interface_frame(s, start_point=end)
        glu = frame_gluing(domain, efr)
        funcs = [frame_function(domain, efr, space, a, b, glu=glu) for a, b in near]
        A = np.array([_corner_blocks(f, efr) for f in funcs]).T
        target = _corner_blocks(phi, efr)
        c, *_ = np.linalg.lstsq(A, target, rcond=None)
        res = np.max(np.abs(A @ c - target), initial=0.0)
        if res > tol * max(1.0, np.max(np.abs(target))):
            raise RepresentationError(
                f"corner correction of edge function ({i}, {j}) on interface {s} failed "
                f"(residual {res:.2e})")
        for w, f in zip(c, funcs):
            for pid in f.patches:
                grids[pid] = grids[pid] - w * f.grid(pid)
    for pid in grids:
        g = grids[pid]
        g[np.abs(g) < 1e-14 * np.max(np.abs(g))] = 0.0
    return IsogeometricFunction(space, "edge", (s, i, j), grids)


# ---------------------------------------------------------------------------
# the global basis

def min_inner_knots(p: int, r: int) -> int:
    """Smallest admissible ``k`` for the generic construction."""
    return max(0, math.ceil((9 - p) / (p - r - 2)))


def is_special_case(p: int, r: int, k: int) -> bool:
    return (p, r, k) == (5, 2, 3)


@dataclass
class GlobalBasis:
    domain: MultiPatchDomain
    space: SplineSpace1D
    functions: list
    ranges: dict  # kind -> (start, stop)
    modified: bool = False
    _cmats: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> int:
        return self.space.p

    @property
    def r(self) -> int:
        return self.space.r

    @property
    def k(self) -> int:
        return self.space.k

    @property
    def dim(self) -> int:
        return len(self.functions)

    def __len__(self):
        return len(self.functions)

    def block(self, kind: str):
        a, b = self.ranges[kind]
        return self.functions[a:b]

    def coefficient_matrix(self, patch: int) -> sp.csr_matrix:
        """``C`` with ``C[i * d + j, n]`` = coefficient of ``N_i N_j`` on ``patch`` in function ``n``."""
        if patch not in self._cmats:
            d2 = self.space.dim ** 2
            rows, cols, vals = [], [], []
            for n, f in enumerate(self.functions):
                idx, v = f.entries(patch)
                rows.append(idx)
                cols.append(np.full(len(idx), n))
                vals.append(v)
            self._cmats[patch] = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(d2, self.dim))
        return self._cmats[patch]

    def patch_grids(self, coeffs, patch: int) -> np.ndarray:
        d = self.space.dim
        return (self.coefficient_matrix(patch) @ np.asarray(coeffs)).reshape(d, d)

    def independence_rank(self) -> int:
        """Numerical rank of the stacked coefficient vectors.

        Interior patch functions are unit vectors, so only the boundary-strip
        coefficients of the edge and vertex functions need a dense SVD.
        """
        d = self.space.dim
        idx = np.arange(d)
        strip = ((idx[:, None] < 3) | (idx[:, None] > d - 4)
                 | (idx[None, :] < 3) | (idx[None, :] > d - 4)).ravel()
        a, _ = self.ranges["patch"]
        _, b = self.ranges["patch"]
        rest = list(range(b, self.dim))
        if not rest:
            return b - a
        blocks = [self.coefficient_matrix(pid)[strip][:, rest].toarray()
                  for pid in range(self.domain.P)]
        M = np.vstack(blocks)
        sv = np.linalg.svd(M, compute_uv=False)
        return (b - a) + int(np.sum(sv > 1e-10 * sv[0]))

    def to_json(self) -> str:
        return json.dumps({
            "p": self.p, "r": self.r, "k": self.k, "dim": self.dim,
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "functions": [f.to_dict() for f in self.functions],
        })


def assemble_space(domain: MultiPatchDomain, p: int, r: int, k: int) -> GlobalBasis:
    """Patch, edge and vertex blocks of the space, in deterministic order."""
    space = make_space(p, r, k)
    special = is_special_case(p, r, k)
    if k < min_inner_knots(p, r) and not special:
        raise UnsupportedRefinementError(
            f"k={k} below the admissible minimum {min_inner_knots(p, r)} for p={p}, r={r}")

    d_alpha = {s: frame_gluing(domain, domain.interface_frame(s)).d_alpha
               for s in range(domain.E)}
    d_all = set(d_alpha.values()) | {0}  # one-sided fan edges have d_alpha = 0
    overlaps = {da: overlap_indices(space, da) for da in d_all}
    if any(overlaps.values()) and not special:
        raise UnsupportedRefinementError(
            f"edge functions reach both interface ends for p={p}, r={r}, k={k}")

    functions = []
    ranges = {}
    start = 0
    for l in range(domain.P):
        functions += patch_basis(l, space)
    ranges["patch"] = (start, len(functions))
    start = len(functions)

    for s in range(domain.E):
        if special:
            near = near_vertex_indices(space, d_alpha[s])
            functions += [corrected_edge_function(domain, s, space, i, j, near)
                          for i, j in overlaps[d_alpha[s]]]
        functions += edge_basis(domain, s, space)
    ranges["edge"] = (start, len(functions))
    start = len(functions)

    for rho, vx in enumerate(domain.vertices):
        das = {frame_gluing(domain, fr).d_alpha for fr in vx.fan_edges}
        idx = near_vertex_indices(space, max(das)) if special else None
        if special and len(das) > 1:
            # intersect the index sets for fan edges of differing d_alpha
            sets = [set(near_vertex_indices(space, da)) for da in das]
            idx = sorted(set.intersection(*sets))
        functions += vertex_basis(domain, rho, space, idx)
    ranges["vertex"] = (start, len(functions))
    return GlobalBasis(domain, space, functions, ranges, modified=special)


def export_basis(basis: GlobalBasis, path) -> None:
    with open(path, "w") as fh:
        fh.write(basis.to_json())


__all__ = [
    "IsogeometricFunction", "patch_basis", "edge_function", "edge_basis", "edge_std_grids",
    "frame_function", "trace_space", "trace_dims", "in_window", "edge_index_set",
    "near_vertex_indices", "overlap_indices", "corner_jet", "VertexSystem", "vertex_system",
    "null_space", "vertex_basis", "corrected_edge_function", "min_inner_knots",
    "GlobalBasis", "assemble_space", "export_basis",
]
