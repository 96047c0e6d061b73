import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from iga_c2.assembly import assemble_system
from iga_c2.basisspace import assemble_space
from iga_c2.errors import InvalidParameterError
from iga_c2.multipatch import inverse_map
from iga_c2.polynomials2d import Polynomial2D, builtin_solution, triharmonic_rhs
from iga_c2.solver import solve_spd
from iga_c2.study import (COLUMNS, StudyConfig, StudyReport, error_norms, kappa_slope,
                          rates, run_study)


def bubble():
    """(x1 (2 - x1) x2 (1 - x2) / 8)^3: degree 6 per variable, C^2 zero on the rectangle."""
    f = Polynomial2D({(1, 0): Fraction(1)}) * Polynomial2D.affine(2, -1, 0)
    f = f * Polynomial2D({(0, 1): Fraction(1)}) * Polynomial2D.affine(1, 0, -1)
    return (f * Fraction(1, 8)) ** 3


@pytest.fixture(scope="module")
def squares_p6(two_squares):
    return assemble_space(two_squares, 6, 2, 3)


@pytest.fixture(scope="module")
def bubble_solution(squares_p6):
    u = bubble()
    system = assemble_system(squares_p6, triharmonic_rhs(u))
    return u, solve_spd(system.S, system.f)


def test_zero_approximation_has_unit_errors(basis_k3):
    errs, gl = error_norms(np.zeros(basis_k3.dim), basis_k3, builtin_solution("a"))
    assert np.allclose(errs, 1.0) and gl == pytest.approx(1.0)


def test_exact_reproduction(squares_p6, bubble_solution):
    u, rep = bubble_solution
    errs, gl = error_norms(rep.c, squares_p6, u)
    assert np.all(errs < 1e-9) and gl < 1e-9


def test_scaled_reproduction(squares_p6, bubble_solution):
    u, rep = bubble_solution
    errs, gl = error_norms(0.25 * rep.c, squares_p6, u)
    assert np.allclose(errs, 0.75, atol=1e-9) and gl == pytest.approx(0.75, abs=1e-9)


def test_point_values_match_h0_error(two_squares):
    # k=4 is the smallest admissible refinement for p=5, r=2
    basis = assemble_space(two_squares, 5, 2, 4)
    u = builtin_solution("box")
    system = assemble_system(basis, triharmonic_rhs(u))
    rep = solve_spd(system.S, system.f)
    errs, _ = error_norms(rep.c, basis, u)
    rng = np.random.default_rng(4)
    pts = rng.uniform([0.05, 0.05], [1.95, 0.95], size=(20, 2))
    from iga_c2.bspline import collocation_matrix
    uh = []
    for x in pts:
        pid = 0 if x[0] < 1 else 1
        xi = inverse_map(two_squares.patches[pid], x)
        G = basis.patch_grids(rep.c, pid)
        sp = basis.space
        uh.append(collocation_matrix(sp, [xi[0]])[0] @ G @ collocation_matrix(sp, [xi[1]])[0])
    ue = u(pts[:, 0], pts[:, 1])
    rel = np.max(np.abs(np.array(uh) - ue)) / np.max(np.abs(ue))
    assert rel < 10 * errs[0]
    assert errs[0] < 1e-3


def test_rates():
    assert rates([1.0, 0.5], [1 / 64, 0.5 / 32]) == pytest.approx([6.0, 5.0])
    assert np.isnan(rates([0.0], [1.0])[0])


def test_kappa_slope_synthetic():
    rows = [{"h": 1 / 4, "kappa_raw": 1e3}, {"h": 1 / 8, "kappa_raw": 64e3}]
    assert kappa_slope(StudyReport(rows), "kappa_raw") == pytest.approx(-6.0)


def test_config_validation(two_squares):
    with pytest.raises(InvalidParameterError):
        StudyConfig(two_squares, klist=[7, 3])
    with pytest.raises(InvalidParameterError):
        StudyConfig(two_squares, klist=[])


def test_report_files(tmp_path, two_squares):
    out = tmp_path / "report.csv"
    cfg = StudyConfig(two_squares, 6, 2, [1, 3], "box", out=out, cond=True)
    report = run_study(cfg)
    first, second = report.rows
    assert "UnsupportedRefinementError" in first["error"]
    assert second["dim"] == 368 and "error" not in second
    assert second["kappa_jacobi"] <= second["kappa_raw"]
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == COLUMNS + ["error"]
    data = json.loads(out.with_suffix(".json").read_text())
    assert [set(r) for r in data] == [set(COLUMNS + ["error"])] * 2
    assert data[1]["dim"] == 368
    assert float(rows[1]["err_h0"]) == pytest.approx(data[1]["err_h0"])


def test_matrix_export_from_study(tmp_path, two_squares):
    cfg = StudyConfig(two_squares, 6, 2, [3], "box", export_matrix=tmp_path / "m")
    run_study(cfg)
    assert (tmp_path / "m" / "S_k3.mtx").exists() and (tmp_path / "m" / "f_k3.txt").exists()
