import numpy as np
import pytest

from pseudoqpe.lattice import SimulationCell, reciprocal_geometry
from pseudoqpe.pseudopotential import load_species_table
from pseudoqpe.system import bundled_cells


@pytest.fixture(scope="session")
def table():
    return load_species_table()


@pytest.fixture(scope="session")
def cells():
    return bundled_cells()


@pytest.fixture(scope="session")
def geom_of(cells):
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = reciprocal_geometry(SimulationCell(np.array(cells[name]["lattice"])))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def diamond(geom_of):
    return geom_of("diamond")


@pytest.fixture(scope="session")
def lno(geom_of):
    return geom_of("LNO-C2m")


def cubic(length=10.0):
    return reciprocal_geometry(SimulationCell(np.eye(3) * length))
