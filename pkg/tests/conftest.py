import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cordesvem.mesh import build_graded_mesh, build_uniform_square_mesh, build_voronoi_mesh

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def square4():
    return build_uniform_square_mesh(4)


@pytest.fixture(scope="session")
def voronoi64():
    return build_voronoi_mesh(64, seed=7, lloyd_iters=3)


@pytest.fixture(scope="session")
def graded_mesh():
    return build_graded_mesh(1e-2)


@pytest.fixture(scope="session")
def mixed_cells(square4, voronoi64, graded_mesh):
    """Cell geometries from square, Voronoi and hanging-node meshes."""
    cells = [square4.cell_geometry(k) for k in range(0, square4.n_cells, 5)]
    cells += [voronoi64.cell_geometry(k) for k in range(0, voronoi64.n_cells, 4)]
    hanging = [k for k in range(graded_mesh.n_cells) if len(graded_mesh.cells[k]) > 4]
    cells += [graded_mesh.cell_geometry(k) for k in hanging[:6]]
    return cells


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``record(number, ok, detail)`` stores one summary line per criterion."""
    store = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, detail: str):
        prev = store.get(number)
        ok = bool(ok) and (prev is None or prev[0])
        detail = detail if prev is None else f"{prev[1]}; {detail}"
        store[number] = (ok, detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, detail = store[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
