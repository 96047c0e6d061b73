import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iga_c2.basisspace import assemble_space  # noqa: E402
from iga_c2.multipatch import builtin_domain  # noqa: E402


@pytest.fixture(scope="session")
def triangle():
    return builtin_domain("triangle")


@pytest.fixture(scope="session")
def two_squares():
    return builtin_domain("two_squares")


@pytest.fixture(scope="session")
def basis_k5(triangle):
    return assemble_space(triangle, 5, 2, 5)


@pytest.fixture(scope="session")
def basis_k3(triangle):
    return assemble_space(triangle, 5, 2, 3)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
