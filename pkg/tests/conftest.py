import pytest

from maxwell_cfem import assembly

SMALL_DIM = 500
# (label, block) for every small system assembled anywhere in the session
ASSEMBLED: list = []

_assemble = assembly.assemble


def _recording_assemble(mesh, layout, quad_degree=None):
    block = _assemble(mesh, layout, quad_degree)
    if block.dim <= SMALL_DIM and block.n_u > 1:
        label = f"{mesh.domain.value} n={mesh.n} r={layout.r} {layout.mode.value} q={block.quad_degree}"
        ASSEMBLED.append((label, block))
    return block


assembly.assemble = _recording_assemble


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so it sees every system the other modules built
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
