"""Shared helpers: small phase-space problems reused across test modules."""
from __future__ import annotations

import numpy as np
import pytest

from kinetic_ap_lab import (PhaseMesh, CellDistribution, DiscreteMaxwellian,
                            build_spatial_mesh, build_velocity_mesh,
                            gaussian_bgk, gaussian_fp)


def make_phase_mesh(N: int = 5, L: int = 2, v_star: float = 1.5,
                    R: float = 1.0) -> PhaseMesh:
    return PhaseMesh(x=build_spatial_mesh(R, N),
                     v=build_velocity_mesh(v_star, L))


def random_distribution(mesh: PhaseMesh, M: DiscreteMaxwellian,
                        seed: int = 0) -> CellDistribution:
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 1.0, size=(mesh.x.n_cells, mesh.v.n_cells))
    return CellDistribution(values=values, mesh=mesh, maxwellian=M)


@pytest.fixture
def small_mesh() -> PhaseMesh:
    return make_phase_mesh()


@pytest.fixture(scope="session")
def production_mesh() -> PhaseMesh:
    """The grid all long-run studies use: N = 51, L = 20, v* = 8, R = 1."""
    return make_phase_mesh(N=51, L=20, v_star=8.0, R=1.0)


@pytest.fixture(scope="session")
def production_fp(production_mesh) -> DiscreteMaxwellian:
    return gaussian_fp(production_mesh.v)


@pytest.fixture(scope="session")
def production_bgk(production_mesh) -> DiscreteMaxwellian:
    return gaussian_bgk(production_mesh.v)
