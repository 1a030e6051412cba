import functools

import pytest

from z2harmonic import pipeline
from z2harmonic.cover import build_cover_spec, build_sign_cocycle
from z2harmonic.mesh import build_mesh


@functools.lru_cache(maxsize=None)
def solved(solid, level, sector, angle=None):
    """Solved case shared across test modules (solves are the slow part)."""
    cfg = pipeline.RunConfig(solid=solid, level=level, sector=sector, angle=angle)
    return pipeline.run_case(cfg)


@functools.lru_cache(maxsize=None)
def expansions(solid, level, sector):
    return pipeline.local_analysis(solved(solid, level, sector))


@functools.lru_cache(maxsize=None)
def meshed(solid, level, angle=None):
    spec = build_cover_spec(solid, angle)
    mesh = build_mesh(spec, level)
    return spec, mesh, build_sign_cocycle(spec, mesh)


@pytest.fixture
def solve_case():
    return solved


@pytest.fixture
def local_case():
    return expansions


@pytest.fixture
def mesh_case():
    return meshed
