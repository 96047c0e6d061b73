"""Bilinear patches, multi-patch topology and standardized parameterizations.

A patch is never rewritten. Instead, every interface and every vertex fan
stores a :class:`SquareSymmetry` per adjacent patch that maps the
*standardized* parameters used by the construction to the patch's native
parameters. Coefficient grids are moved between the two frames with
:meth:`SquareSymmetry.grid_to_native` / :meth:`SquareSymmetry.grid_from_native`.

Conventions
-----------
* Corners are given counterclockwise as ``c00, c10, c11, c01``.
* Interface frame: both sides see the common edge as ``s1 = 0`` with the
  same ``s2`` running from ``start`` to ``end``. The side whose standardized
  map is orientation reversing is the ``minus`` side (negative edge
  determinant), the other is ``plus``.
* Vertex fan: patch ``l`` is rotated so that the vertex sits at ``(0, 0)``;
  its ``xi2 = 0`` edge is the fan edge ``l`` (shared with patch ``l - 1``)
  and its ``xi1 = 0`` edge is fan edge ``l + 1`` (shared with patch ``l + 1``).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConvexityError, DegenerateGeometryError, DomainFileError,
                     EdgeMatchingError, NotFoundError, TJunctionError, TopologyError)


@dataclass(frozen=True)
class SquareSymmetry:
    """Element of the dihedral group of ``[0, 1]^2``.

    The standardized point ``s`` is first optionally transposed, then each
    axis is optionally reversed, giving the native parameter.
    """

    swap: bool = False
    flip1: bool = False
    flip2: bool = False

    def apply(self, s1, s2):
        u1, u2 = (s2, s1) if self.swap else (s1, s2)
        x1 = 1 - np.asarray(u1) if self.flip1 else np.asarray(u1)
        x2 = 1 - np.asarray(u2) if self.flip2 else np.asarray(u2)
        return x1, x2

    @property
    def det(self) -> int:
        return -1 if (self.swap + self.flip1 + self.flip2) % 2 else 1

    def compose(self, inner: "SquareSymmetry") -> "SquareSymmetry":
        """The symmetry ``s -> self.apply(inner.apply(s))``."""
        corners = [(0, 0), (1, 0), (0, 1)]
        target = [self.apply(*inner.apply(*c)) for c in corners]
        for cand in ALL_SYMMETRIES:
            if all(np.allclose(cand.apply(*c), t) for c, t in zip(corners, target)):
                return cand
        raise AssertionError("dihedral group not closed")

    def inverse(self) -> "SquareSymmetry":
        for cand in ALL_SYMMETRIES:
            if self.compose(cand) == IDENTITY:
                return cand
        raise AssertionError("no inverse")

    def grid_to_native(self, grid: np.ndarray) -> np.ndarray:
        g = grid.T if self.swap else grid
        if self.flip1:
            g = g[::-1, :]
        if self.flip2:
            g = g[:, ::-1]
        return np.ascontiguousarray(g)

    def grid_from_native(self, grid: np.ndarray) -> np.ndarray:
        g = grid
        if self.flip1:
            g = g[::-1, :]
        if self.flip2:
            g = g[:, ::-1]
        return np.ascontiguousarray(g.T if self.swap else g)


ALL_SYMMETRIES = tuple(SquareSymmetry(*b) for b in itertools.product((False, True), repeat=3))
IDENTITY = SquareSymmetry()
SWAP = SquareSymmetry(swap=True)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class BilinearPatch:
    """Bilinear map ``F`` of the unit square onto a quadrilateral."""

    def __init__(self, c00, c10, c11, c01, validate: bool = True):
        self.c00 = np.asarray(c00, dtype=float)
        self.c10 = np.asarray(c10, dtype=float)
        self.c11 = np.asarray(c11, dtype=float)
        self.c01 = np.asarray(c01, dtype=float)
        if validate:
            self._validate()

    @property
    def corners(self) -> np.ndarray:
        """Corners in counterclockwise order ``c00, c10, c11, c01``."""
        return np.array([self.c00, self.c10, self.c11, self.c01])

    def _validate(self):
        c = self.corners
        edges = np.roll(c, -1, axis=0) - c
        cr = _cross(edges, np.roll(edges, -1, axis=0))
        scale = np.max(np.linalg.norm(edges, axis=1)) ** 2
        if np.any(np.abs(cr) <= 1e-12 * scale) or not (np.all(cr > 0) or np.all(cr < 0)):
            raise ConvexityError(f"quadrilateral {c.tolist()} is not strictly convex")
        if np.all(cr < 0):
            raise DegenerateGeometryError(
                f"quadrilateral {c.tolist()} is oriented clockwise")

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)[..., None]
        x2 = np.asarray(x2, dtype=float)[..., None]
        return (self.c00 * (1 - x1) * (1 - x2) + self.c10 * x1 * (1 - x2)
                + self.c01 * (1 - x1) * x2 + self.c11 * x1 * x2)

    @property
    def twist(self) -> np.ndarray:
        """The constant mixed derivative ``d^2 F / dxi1 dxi2``."""
        return self.c00 - self.c10 - self.c01 + self.c11

    def jacobian(self, x1, x2) -> np.ndarray:
        """``J[..., i, a] = dF_i / dxi_a``."""
        x1 = np.asarray(x1, dtype=float)[..., None]
        x2 = np.asarray(x2, dtype=float)[..., None]
        d1 = (self.c10 - self.c00) * (1 - x2) + (self.c11 - self.c01) * x2
        d2 = (self.c01 - self.c00) * (1 - x1) + (self.c11 - self.c10) * x1
        return np.stack([d1, d2], axis=-1)

    def view(self, sym: SquareSymmetry) -> "BilinearPatch":
        """The same quadrilateral parameterized by ``F o sym``."""
        pts = [np.asarray(self(*sym.apply(*c))) for c in ((0, 0), (1, 0), (1, 1), (0, 1))]
        return BilinearPatch(*pts, validate=False)

    @property
    def diameter(self) -> float:
        c = self.corners
        return float(max(np.linalg.norm(a - b) for a, b in itertools.combinations(c, 2)))

    def __repr__(self):
        return f"BilinearPatch({self.corners.tolist()})"


@dataclass
class GeometryJet:
    """Point, Jacobian and second derivatives of ``F`` at one parameter."""

    point: np.ndarray
    J: np.ndarray
    d2F: np.ndarray  # d2F[i, a, b] = d^2 F_i / dxi_a dxi_b
    detJ: float
    K: np.ndarray


def geometry_jet(patch: BilinearPatch, xi, allow_reversed: bool = False) -> GeometryJet:
    x1, x2 = float(xi[0]), float(xi[1])
    if not (0 <= x1 <= 1 and 0 <= x2 <= 1):
        raise DegenerateGeometryError(f"parameter {xi} outside the unit square")
    J = patch.jacobian(x1, x2)
    det = float(np.linalg.det(J))
    if det <= 0 and not (allow_reversed and det < 0):
        raise DegenerateGeometryError(f"det J = {det} <= 0 at {xi}")
    Jinv = np.linalg.inv(J)
    K = Jinv.T @ Jinv * abs(det)
    d2 = np.zeros((2, 2, 2))
    d2[:, 0, 1] = d2[:, 1, 0] = patch.twist
    return GeometryJet(np.asarray(patch(x1, x2)), J, d2, det, K)


def inverse_map(patch: BilinearPatch, x, tol: float = 1e-11) -> np.ndarray:
    """Parameter ``xi`` with ``F(xi) = x``; raises :class:`NotFoundError` outside the patch."""
    x = np.asarray(x, dtype=float)
    diam = patch.diameter
    xi = np.array([0.5, 0.5])
    for _ in range(60):
        res = patch(*xi) - x
        if np.linalg.norm(res) < tol * diam * 0.1:
            break
        xi = xi - np.linalg.solve(patch.jacobian(*xi), res)
        if not np.all(np.isfinite(xi)):
            break
    else:
        xi = _inverse_closed_form(patch, x)
    if not np.all(np.isfinite(xi)) or np.linalg.norm(patch(*xi) - x) > tol * diam:
        xi = _inverse_closed_form(patch, x)
    eps = 1e-9
    if xi is None or np.any(xi < -eps) or np.any(xi > 1 + eps):
        raise NotFoundError(f"point {x.tolist()} is not inside {patch!r}")
    xi = np.clip(xi, 0.0, 1.0)
    if np.linalg.norm(patch(*xi) - x) > tol * diam:
        raise NotFoundError(f"inverse map did not converge for {x.tolist()}")
    return xi


def _inverse_closed_form(patch, x):
    # F(s, t) = a + b s + c t + d s t; eliminate s from the two components.
    a = patch.c00 - x
    b = patch.c10 - patch.c00
    c = patch.c01 - patch.c00
    d = patch.twist
    qa = _cross(c, d)
    qb = _cross(a, d) + _cross(c, b)
    qc = _cross(a, b)
    if abs(qa) < 1e-14 * max(abs(qb), 1e-300):
        roots = [-qc / qb] if qb != 0 else []
    else:
        disc = max(qb * qb - 4 * qa * qc, 0.0)
        sq = np.sqrt(disc)
        roots = [(-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)]
    best = None
    for t in roots:
        den = b + d * t
        i = int(np.argmax(np.abs(den)))
        if abs(den[i]) < 1e-300:
            continue
        s = -(a[i] + c[i] * t) / den[i]
        cand = np.array([s, t])
        err = np.linalg.norm(patch(*cand) - (x))
        dist = np.sum(np.clip(-cand, 0, None) + np.clip(cand - 1, 0, None))
        key = (dist, err)
        if best is None or key < best[0]:
            best = (key, cand)
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# topology

_EDGE_PARAMS = {
    # local edge name -> (start corner param, end corner param)
    "W": ((0, 0), (0, 1)),
    "E": ((1, 0), (1, 1)),
    "S": ((0, 0), (1, 0)),
    "N": ((0, 1), (1, 1)),
}


@dataclass
class Interface:
    """An interior edge shared by two patches, in its standardized frame."""

    id: int
    minus: int
    minus_sym: SquareSymmetry
    plus: int
    plus_sym: SquareSymmetry
    start: int  # vertex id at s2 = 0
    end: int


@dataclass
class Frame:
    """Standardized two-patch view of one interface, oriented from ``start`` to ``end``.

    ``minus``/``plus`` are patch ids, or ``None`` on a boundary edge (one-sided frame).
    """

    minus: int | None
    minus_sym: SquareSymmetry | None
    plus: int | None
    plus_sym: SquareSymmetry | None
    start: int
    end: int
    interface: int | None = None


@dataclass
class Vertex:
    """A vertex of valency >= 3 with its counterclockwise patch fan."""

    id: int  # position in MultiPatchDomain.vertices
    point_id: int
    point: np.ndarray
    fan: list  # [(patch id, SquareSymmetry)] with the vertex at (0, 0)
    fan_edges: list  # [Frame] for fan edges 0 .. len - 1, each starting at the vertex
    valency: int
    boundary: bool

    @property
    def nu(self) -> int:
        return len(self.fan)


@dataclass
class MultiPatchDomain:
    patches: list
    points: np.ndarray
    interfaces: list = field(default_factory=list)
    boundary_edges: list = field(default_factory=list)  # (patch, local edge name)
    vertices: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def P(self) -> int:
        return len(self.patches)

    @property
    def E(self) -> int:
        return len(self.interfaces)

    @property
    def V(self) -> int:
        return len(self.vertices)

    @property
    def diameter(self) -> float:
        lo, hi = self.points.min(axis=0), self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def interface_frame(self, s: int, start_point: int | None = None) -> Frame:
        """Frame of interface ``s``, reversed if it should start at ``start_point``."""
        itf = self.interfaces[s]
        if start_point is None or start_point == itf.start:
            return Frame(itf.minus, itf.minus_sym, itf.plus, itf.plus_sym,
                         itf.start, itf.end, s)
        if start_point != itf.end:
            raise TopologyError(f"point {start_point} is not an end of interface {s}")
        return _make_frame(self, itf.minus, itf.plus, itf.end, itf.start, s)

    def to_json(self) -> str:
        return json.dumps({"patches": [p.corners.tolist() for p in self.patches]}, indent=1)


def _edge_symmetry(domain_points, patch: BilinearPatch, P, Q, tol):
    """The unique symmetry with ``F(sym(0, 0)) = P`` and ``F(sym(0, 1)) = Q``."""
    for sym in ALL_SYMMETRIES:
        if (np.linalg.norm(patch(*sym.apply(0, 0)) - P) < tol
                and np.linalg.norm(patch(*sym.apply(0, 1)) - Q) < tol):
            return sym
    raise TopologyError(f"edge {P} -> {Q} is not an edge of {patch!r}")


def _make_frame(domain, pa, pb, start, end, iface=None) -> Frame:
    P, Q = domain.points[start], domain.points[end]
    sa = _edge_symmetry(domain.points, domain.patches[pa], P, Q, domain.tol)
    sb = _edge_symmetry(domain.points, domain.patches[pb], P, Q, domain.tol)
    if sa.det == sb.det:
        raise TopologyError(f"patches {pa} and {pb} lie on the same side of their common edge")
    if sa.det < 0:
        return Frame(pa, sa, pb, sb, start, end, iface)
    return Frame(pb, sb, pa, sa, start, end, iface)


def _boundary_frame(domain, patch, start, end, fan_sym_edge: SquareSymmetry) -> Frame:
    if fan_sym_edge.det < 0:
        return Frame(patch, fan_sym_edge, None, None, start, end)
    return Frame(None, None, patch, fan_sym_edge, start, end)


def build_topology(patches, tol_rel: float = 1e-9) -> MultiPatchDomain:
    """Extract interfaces, boundary edges and vertex fans from a list of patches."""
    if len(patches) < 1:
        raise TopologyError("no patches")
    allc = np.concatenate([p.corners for p in patches])
    diag = float(np.linalg.norm(allc.max(axis=0) - allc.min(axis=0)))
    tol = tol_rel * diag

    points = []
    corner_ids = []
    for p in patches:
        ids = []
        for c in p.corners:
            for pid, q in enumerate(points):
                if np.linalg.norm(q - c) < tol:
                    ids.append(pid)
                    break
            else:
                points.append(c)
                ids.append(len(points) - 1)
        if len(set(ids)) != 4:
            raise DegenerateGeometryError(f"patch {p!r} has coinciding corners")
        corner_ids.append(ids)
    points = np.array(points)
    dom = MultiPatchDomain(list(patches), points, tol=tol)

    # local edge -> endpoint ids (order c00, c10, c11, c01)
    local = {"S": (0, 1), "E": (1, 2), "N": (3, 2), "W": (0, 3)}
    edges = {}
    for li, ids in enumerate(corner_ids):
        for name, (a, b) in local.items():
            edges.setdefault(frozenset((ids[a], ids[b])), []).append((li, name))

    # hanging corners / partial overlaps
    for key in edges:
        a, b = (points[i] for i in key)
        ab = b - a
        L2 = ab @ ab
        for pid, q in enumerate(points):
            if pid in key:
                continue
            t = (q - a) @ ab / L2
            if tol / np.sqrt(L2) < t < 1 - tol / np.sqrt(L2):
                if np.linalg.norm(a + t * ab - q) < tol:
                    raise TJunctionError(
                        f"corner {q.tolist()} lies inside edge {a.tolist()}-{b.tolist()}")
    for key, owners in edges.items():
        if len(owners) > 2:
            raise EdgeMatchingError(f"edge {sorted(key)} shared by more than two patches")
    _check_overlaps(points, edges, tol)

    keys = sorted(edges, key=lambda k: tuple(sorted(o[0] for o in edges[k])) + tuple(sorted(k)))
    edge_iface = {}
    for key in keys:
        owners = edges[key]
        if len(owners) == 1:
            dom.boundary_edges.append(owners[0])
            continue
        (pa, _), (pb, _) = sorted(owners)
        if pa == pb:
            raise TopologyError(f"patch {pa} is glued to itself")
        start, end = sorted(key)
        fr = _make_frame(dom, pa, pb, start, end, len(dom.interfaces))
        dom.interfaces.append(Interface(fr.interface, fr.minus, fr.minus_sym,
                                        fr.plus, fr.plus_sym, start, end))
        edge_iface[key] = fr.interface

    _check_connected(dom, len(patches))

    for pid in range(len(points)):
        incident = [k for k in edges if pid in k]
        if len(incident) < 3:
            continue
        owners = [li for li, ids in enumerate(corner_ids) if pid in ids]
        boundary = any(len(edges[k]) == 1 for k in incident)
        dom.vertices.append(_build_fan(dom, pid, owners, edges, edge_iface, len(incident),
                                       boundary, len(dom.vertices)))
    return dom


def _check_overlaps(points, edges, tol):
    # collinear edges sharing a segment of positive length without sharing both ends
    keys = list(edges)
    for k1, k2 in itertools.combinations(keys, 2):
        if k1 == k2:
            continue
        a, b = (points[i] for i in sorted(k1))
        c, d = (points[i] for i in sorted(k2))
        ab = b - a
        L = np.linalg.norm(ab)
        u = ab / L
        n = np.array([-u[1], u[0]])
        if abs((c - a) @ n) > tol or abs((d - a) @ n) > tol:
            continue
        t0, t1 = sorted(((c - a) @ u, (d - a) @ u))
        if min(L, t1) - max(0.0, t0) > tol:
            raise EdgeMatchingError(
                f"edges {a.tolist()}-{b.tolist()} and {c.tolist()}-{d.tolist()} overlap partially")


def _check_connected(dom, n):
    adj = {i: set() for i in range(n)}
    for itf in dom.interfaces:
        adj[itf.minus].add(itf.plus)
        adj[itf.plus].add(itf.minus)
    seen, stack = {0}, [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    if len(seen) != n:
        raise TopologyError("patches are not connected through common edges")


def _rotation_at(patch, point, tol):
    for sym in ALL_SYMMETRIES:
        if sym.det > 0 and np.linalg.norm(patch(*sym.apply(0, 0)) - point) < tol:
            return sym
    raise TopologyError(f"{point} is not a corner of {patch!r}")


def _point_id(dom, x):
    for pid, q in enumerate(dom.points):
        if np.linalg.norm(q - x) < dom.tol:
            return pid
    raise TopologyError(f"unknown point {x}")


def _build_fan(dom, pid, owners, edges, edge_iface, valency, boundary, vid):
    v = dom.points[pid]
    info = {}
    for li in owners:
        sym = _rotation_at(dom.patches[li], v, dom.tol)
        e1 = _point_id(dom, dom.patches[li](*sym.apply(1, 0)))  # end of xi1-axis edge
        e2 = _point_id(dom, dom.patches[li](*sym.apply(0, 1)))  # end of xi2-axis edge
        info[li] = (sym, frozenset((pid, e1)), frozenset((pid, e2)), e1, e2)

    if boundary:
        starts = [li for li in owners if len(edges[info[li][1]]) == 1]
    else:
        starts = [min(owners)]
    if len(starts) != 1:
        raise TopologyError(f"vertex {v.tolist()} has an inconsistent patch fan")
    chain = [starts[0]]
    while True:
        nxt_key = info[chain[-1]][2]
        if len(edges[nxt_key]) == 1:
            break
        nxt = [li for li in owners if li != chain[-1] and info[li][1] == nxt_key]
        if len(nxt) != 1:
            raise TopologyError(f"vertex {v.tolist()} has an inconsistent patch fan")
        if nxt[0] == chain[0]:
            break
        chain.append(nxt[0])
        if len(chain) > len(owners):
            raise TopologyError(f"vertex {v.tolist()} has an inconsistent patch fan")
    if len(chain) != len(owners):
        raise TopologyError(f"vertex {v.tolist()} is not a manifold vertex")

    fan = [(li, info[li][0]) for li in chain]
    fan_edges = []
    nu = len(chain)
    n_edges = nu + 1 if boundary else nu
    for l in range(n_edges):
        if l < nu:
            li = chain[l]
            key, end = info[li][1], info[li][3]
        else:
            li = chain[nu - 1]
            key, end = info[li][2], info[li][4]
        if len(edges[key]) == 2:
            pa, pb = (o[0] for o in edges[key])
            fan_edges.append(_make_frame(dom, pa, pb, pid, end, edge_iface[key]))
        else:
            # one-sided: xi2 = 0 edge (seen through the swap) or xi1 = 0 edge
            sym = info[li][0].compose(SWAP) if l < nu else info[li][0]
            fan_edges.append(_boundary_frame(dom, li, pid, end, sym))
    return Vertex(vid, pid, v, fan, fan_edges, valency, boundary)


# ---------------------------------------------------------------------------
# domain files

def parse_domain(text: str) -> MultiPatchDomain:
    """Build a domain from the JSON text ``{"patches": [[[x, y] x 4], ...]}``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainFileError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "patches" not in data:
        raise DomainFileError("domain file needs a 'patches' list")
    patches = []
    for i, corners in enumerate(data["patches"]):
        try:
            arr = np.asarray(corners, dtype=float)
        except (TypeError, ValueError) as exc:
            raise DomainFileError(f"patch {i}: corners are not numeric") from exc
        if arr.shape != (4, 2):
            raise DomainFileError(f"patch {i}: expected 4 corners with 2 coordinates")
        patches.append(BilinearPatch(*arr))
    return build_topology(patches)


def load_domain(path) -> MultiPatchDomain:
    return parse_domain(Path(path).read_text())


DOMAIN_DIR = Path(__file__).parent / "domains"


def builtin_domain(name: str) -> MultiPatchDomain:
    """Load one of the shipped domain files (``"triangle"``, ``"two_squares"``)."""
    return load_domain(DOMAIN_DIR / f"{name}.json")
