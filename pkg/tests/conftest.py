from functools import lru_cache

import numpy as np
import pytest

from assembly import assemble_system
from constants import ElementFamily
from geometry import build_decomposition, build_mesh

FAMILIES = [f.value for f in ElementFamily]


@lru_cache(maxsize=None)
def _system(family: str, n: int):
    mesh = build_mesh(n)
    dofmap, A = assemble_system(mesh, family)
    return mesh, dofmap, A


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def assembled():
    """assembled(family, n) -> (mesh, dofmap, A), cached across tests; do not mutate."""
    return _system


@pytest.fixture
def decomposed():
    def build(family: str, n_fine: int, n_coarse: int, layers: int):
        mesh, dofmap, A = _system(family, n_fine)
        return build_decomposition(build_mesh(n_coarse), mesh, layers), dofmap, A
    return build
