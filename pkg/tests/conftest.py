import numpy as np
import pytest

from dpglab.mesh import Mesh, build_unit_square, refine, refine_uniform


def single_element():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def hanging_meshes():
    """Meshes with hanging nodes, including a two-level graded one."""
    m1 = refine(build_unit_square(1), [0])
    m2 = refine(build_unit_square(2), [0, 3, 5])
    m3 = refine(m2, [0, 1])
    return {"one-split": m1, "three-split": m2, "graded": m3}


def conforming_meshes():
    return {
        "n1": build_unit_square(1),
        "n2": build_unit_square(2),
        "n2-uniform": refine_uniform(build_unit_square(2)),
    }


def all_meshes():
    out = dict(conforming_meshes())
    out.update(hanging_meshes())
    return out


@pytest.fixture(params=sorted(all_meshes()))
def any_mesh(request):
    return all_meshes()[request.param]


@pytest.fixture(params=sorted(hanging_meshes()))
def hanging_mesh(request):
    return hanging_meshes()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
