"""Error norms, convergence rates and the end-to-end refinement study."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import _tensorize, element_loop, physical_jet, quadrature_rule
from .assembly import _second_derivative_of_map, assemble_system
from .basisspace import GlobalBasis, assemble_space
from .bspline import collocation_matrix
from .errors import InvalidParameterError, UndefinedRelativeError
from .multipatch import MultiPatchDomain, load_domain
from .polynomials2d import Polynomial2D, builtin_solution, partial, triharmonic_rhs
from .solver import condition_number, solve_spd

log = logging.getLogger(__name__)

COLUMNS = ["k", "h", "dim", "err_h0", "err_h1", "err_h2", "err_h3",
           "rate_h0", "rate_h1", "rate_h2", "rate_h3", "kappa_raw", "kappa_jacobi", "seconds"]


def _exact_tensors(u: Polynomial2D):
    """Callables returning the derivative tensors of ``u`` of orders 0 to 3."""
    parts = {(a, b): partial(u, a, b) for a in range(4) for b in range(4 - a)}

    def at(x):
        P = {key: poly(x[:, 0], x[:, 1])[:, None] for key, poly in parts.items()}
        g1, g2, g3 = _tensorize(P)
        return [P[(0, 0)][:, 0], g1[:, 0], g2[:, 0], g3[:, 0]]

    return at


def error_norms(coeffs, basis: GlobalBasis, u: Polynomial2D, q: int | None = None):
    """Relative errors ``||u - u_h||_{H^i} / ||u||_{H^i}``, ``i = 0..3``, and the
    relative ``||grad Lap (u - u_h)||_{L^2}`` error.

    The H^i norms are full Sobolev norms, summing the squared L^2 norms of all
    derivative tensors of order ``<= i`` (all mixed partials counted).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    space = basis.space
    rule = quadrature_rule(space, q)
    exact = _exact_tensors(u)
    err = np.zeros(4)
    ref = np.zeros(4)
    err_gl = ref_gl = 0.0
    for pid, patch in enumerate(basis.domain.patches):
        grid = basis.patch_grids(coeffs, pid).ravel()
        d2F = _second_derivative_of_map(patch)
        for el in element_loop(patch, space, rule):
            loc = grid[el.idx]
            P = {key: (D @ loc)[:, None] for key, D in el.derivs.items()}
            g1, g2, g3 = _tensorize(P)
            uh = [P[(0, 0)][:, 0]] + [t[:, 0] for t in physical_jet(el.J, d2F, g1, g2, g3)]
            ue = exact(el.points)
            w = el.weights
            for o in range(4):
                diff = (ue[o] - uh[o]).reshape(len(w), -1)
                ex = ue[o].reshape(len(w), -1)
                err[o] += w @ np.sum(diff ** 2, axis=1)
                ref[o] += w @ np.sum(ex ** 2, axis=1)
            gl_e = np.einsum("qijj->qi", ue[3])
            gl_h = np.einsum("qijj->qi", uh[3])
            err_gl += w @ np.sum((gl_e - gl_h) ** 2, axis=1)
            ref_gl += w @ np.sum(gl_e ** 2, axis=1)
    num = np.sqrt(np.cumsum(err))
    den = np.sqrt(np.cumsum(ref))
    if np.any(den == 0) or ref_gl == 0:
        raise UndefinedRelativeError("exact solution has zero norm")
    return num / den, math.sqrt(err_gl / ref_gl)


def rates(errors_prev, errors_curr):
    """``log2(e_prev / e_curr)`` per norm (h halves between consecutive k)."""
    return [math.log2(a / b) if a > 0 and b > 0 else float("nan")
            for a, b in zip(errors_prev, errors_curr)]


@dataclass
class StudyConfig:
    domain: str | Path | MultiPatchDomain
    p: int = 5
    r: int = 2
    klist: list = field(default_factory=lambda: [3, 7, 15])
    solution: str | Polynomial2D = "a"
    out: str | Path | None = None
    cond: bool = False
    export_basis: str | Path | None = None
    export_matrix: str | Path | None = None  # directory for S_k<k>.mtx and f_k<k>.txt

    def __post_init__(self):
        ks = list(self.klist)
        if not ks or any(b <= a for a, b in zip(ks, ks[1:])):
            raise InvalidParameterError(f"k list must be nonempty and ascending, got {ks}")
        self.klist = ks


@dataclass
class StudyReport:
    rows: list  # dicts keyed by COLUMNS, plus "error" for failed rows
    config: StudyConfig | None = None

    def column(self, name: str):
        return [row.get(name) for row in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS + ["error"], extrasaction="ignore")
            w.writeheader()
            for row in self.rows:
                w.writerow({key: ("" if row.get(key) is None else row.get(key))
                            for key in COLUMNS + ["error"]})

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v
        return json.dumps([{key: clean(row.get(key)) for key in COLUMNS + ["error"]}
                           for row in self.rows], indent=1)

    def write(self, path) -> None:
        path = Path(path)
        self.write_csv(path)
        path.with_suffix(".json").write_text(self.to_json())


def _sig(x, digits=3):
    return float(f"{x:.{digits - 1}e}")


def run_study(cfg: StudyConfig) -> StudyReport:
    """Assemble, solve and measure errors for each ``k``; failed ``k`` are reported and skipped."""
    domain = cfg.domain if isinstance(cfg.domain, MultiPatchDomain) else load_domain(cfg.domain)
    u = builtin_solution(cfg.solution) if isinstance(cfg.solution, str) else cfg.solution
    f = triharmonic_rhs(u)
    rows = []
    prev = None
    for k in cfg.klist:
        t0 = time.perf_counter()
        row = {"k": k, "h": 1.0 / (k + 1)}
        try:
            basis = assemble_space(domain, cfg.p, cfg.r, k)
            row["dim"] = basis.dim
            system = assemble_system(basis, f)
            rep = solve_spd(system.S, system.f)
            errs, _ = error_norms(rep.c, basis, u)
            for i in range(4):
                row[f"err_h{i}"] = float(errs[i])
            if prev is not None:
                for i, rt in enumerate(rates(prev, errs)):
                    row[f"rate_h{i}"] = rt
            prev = errs
            if cfg.cond:
                row["kappa_raw"] = _sig(condition_number(system.S, "raw"))
                row["kappa_jacobi"] = _sig(condition_number(system.S, "jacobi"))
            if cfg.export_matrix is not None:
                out = Path(cfg.export_matrix)
                out.mkdir(parents=True, exist_ok=True)
                system.export(out / f"S_k{k}.mtx", out / f"f_k{k}.txt")
            if cfg.export_basis is not None and k == cfg.klist[-1]:
                Path(cfg.export_basis).write_text(basis.to_json())
        except Exception as exc:  # noqa: BLE001 - report and continue with the next k
            log.warning("k=%d failed: %s", k, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
            prev = None
        row["seconds"] = round(time.perf_counter() - t0, 3)
        rows.append(row)
        log.info("k=%d done in %.1fs", k, row["seconds"])
    report = StudyReport(rows, cfg)
    if cfg.out is not None:
        report.write(cfg.out)
    return report


def kappa_slope(report: StudyReport, column: str = "kappa_raw") -> float:
    """Slope of ``log2(kappa)`` against ``log2(h)`` over the last pair of rows."""
    ks = [(r["h"], r[column]) for r in report.rows if r.get(column)]
    (h0, k0), (h1, k1) = ks[-2], ks[-1]
    return (math.log2(k1) - math.log2(k0)) / (math.log2(h1) - math.log2(h0))


# ---------------------------------------------------------------------------
# smoothness checks in physical coordinates

_LOCAL_EDGES = {"S": lambda t: (t, 0 * t), "N": lambda t: (t, 0 * t + 1),
                "W": lambda t: (0 * t, t), "E": lambda t: (0 * t + 1, t)}


def _physical_jets(basis: GlobalBasis, funcs, pid: int, x1, x2):
    """Value, gradient and Hessian of ``funcs`` on patch ``pid``, arrays ``(Q, F, ...)``."""
    space = basis.space
    patch = basis.domain.patches[pid]
    grids = np.array([f.grid(pid) for f in funcs])  # (F, d, d)
    B1 = [collocation_matrix(space, x1, o) for o in range(3)]
    B2 = [collocation_matrix(space, x2, o) for o in range(3)]
    P = {}
    for a in range(3):
        for b in range(3 - a):
            P[(a, b)] = np.einsum("qi,fij,qj->qf", B1[a], grids, B2[b])
    for a in range(4):
        P[(a, 3 - a)] = np.zeros_like(P[(0, 0)])
    g1, g2, _ = _tensorize(P)
    J = patch.jacobian(x1, x2)
    grad, hess = physical_jet(J, _second_derivative_of_map(patch), g1, g2)
    return [P[(0, 0)], grad.reshape(len(x1), len(funcs), -1), hess.reshape(len(x1), len(funcs), -1)]


def interface_jumps(basis: GlobalBasis, n_samples: int = 50, funcs=None) -> float:
    """Largest relative jump of value, gradient or Hessian across any interface.

    For each function and derivative order the jump is divided by the largest
    magnitude of that derivative on the interface (floored at ``1e-8`` of the
    function's coefficient scale, so that functions vanishing on an interface
    are measured absolutely).
    """
    funcs = basis.functions if funcs is None else funcs
    dom = basis.domain
    t = (np.polynomial.legendre.leggauss(n_samples)[0] + 1) / 2
    worst = 0.0
    for s in range(dom.E):
        fr = dom.interface_frame(s)
        sel = [f for f in funcs if fr.minus in f.patches or fr.plus in f.patches]
        if not sel:
            continue
        scale = np.array([f.max_abs for f in sel])
        sides = []
        for pid, sym in ((fr.minus, fr.minus_sym), (fr.plus, fr.plus_sym)):
            x1, x2 = sym.apply(0 * t, t)
            sides.append(_physical_jets(basis, sel, pid, np.asarray(x1, float),
                                        np.asarray(x2, float)))
        for o in range(3):
            a, b = sides[0][o], sides[1][o]
            a = a.reshape(len(t), len(sel), -1)
            b = b.reshape(len(t), len(sel), -1)
            jump = np.max(np.abs(a - b), axis=(0, 2))
            mag = np.maximum(np.max(np.abs(a), axis=(0, 2)), np.max(np.abs(b), axis=(0, 2)))
            worst = max(worst, float(np.max(jump / np.maximum(mag, 1e-8 * scale))))
    return worst


def boundary_jets(basis: GlobalBasis, n_samples: int = 40, funcs=None) -> float:
    """Largest ``|value|``, ``|gradient|`` or ``|Hessian|`` entry on the domain boundary,
    relative to each function's coefficient scale."""
    funcs = basis.functions if funcs is None else funcs
    t = (np.arange(n_samples) + 0.5) / n_samples
    worst = 0.0
    for pid, name in basis.domain.boundary_edges:
        sel = [f for f in funcs if pid in f.patches]
        if not sel:
            continue
        scale = np.array([f.max_abs for f in sel])
        x1, x2 = _LOCAL_EDGES[name](t)
        for arr in _physical_jets(basis, sel, pid, x1, x2):
            arr = arr.reshape(len(t), len(sel), -1)
            worst = max(worst, float(np.max(np.max(np.abs(arr), axis=(0, 2)) / scale)))
    return worst


def check_space(basis: GlobalBasis, n_interface: int = 50, n_boundary: int = 40) -> dict:
    """Smoothness, boundary and independence diagnostics of a basis."""
    return {
        "dim": basis.dim,
        "rank": basis.independence_rank(),
        "interface_jump": interface_jumps(basis, n_interface),
        "boundary_jet": boundary_jets(basis, n_boundary),
    }


__all__ = ["COLUMNS", "error_norms", "rates", "StudyConfig", "StudyReport", "run_study",
           "kappa_slope", "interface_jumps", "boundary_jets", "check_space"]
