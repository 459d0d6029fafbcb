"""Verifiers for the two discrete Poincaré inequalities.

Both take concrete vectors, evaluate the two sides literally, and return
the margin. They double as test oracles and as a public certification API
for user-supplied equilibria and meshes.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .diagnostics import dx_grad, torus_poincare_constant
from .equilibrium import FOKKER_PLANCK, DiscreteMaxwellian
from .mesh import SpatialMesh


class InequalityError(ValueError):
    pass


@dataclass(frozen=True)
class PoincareReport:
    lhs: float
    rhs: float
    constant: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.margin >= -1e-12 * max(self.rhs, 1e-300)


def verify_gaussian_poincare(f: np.ndarray,
                             M: DiscreteMaxwellian) -> PoincareReport:
    """|| f - rho M ||^2_{2,gamma} <= || D_v(f/M) ||^2_{2,M*} for a single
    velocity line f_j.

    The right side needs the interface weights, so only interface-built
    (Fokker-Planck kind) equilibria qualify. The weights vanish at the box
    ends, which is why no boundary data for f/M enters.
    """
    if M.kind != FOKKER_PLANCK or M.interface_values is None:
        raise InequalityError(
            "the velocity inequality needs an interface-built equilibrium")
    f = np.asarray(f, dtype=float)
    mesh = M.mesh
    if f.shape != (mesh.n_cells,):
        raise InequalityError(f"expected shape ({mesh.n_cells},), got {f.shape}")
    dv = mesh.widths
    rho = float(f @ dv)
    dev = f - rho * M.cell_values
    lhs = float(np.sum(dev ** 2 * M.gamma * dv))

    g = f * M.gamma
    dw = mesh.dual_widths
    grad = np.diff(g) / dw[1:-1]
    rhs = float(np.sum(grad ** 2 * M.interface_values[1:-1] * dw[1:-1]))
    return PoincareReport(lhs=lhs, rhs=rhs, constant=1.0)


def verify_torus_poincare(phi: np.ndarray,
                          mesh: SpatialMesh) -> PoincareReport:
    """|| phi ||_2 <= C_P || D_x phi ||_2 for mean-free phi on an odd
    periodic grid, C_P = R / (N sin(pi/N))."""
    phi = np.asarray(phi, dtype=float)
    N = mesh.n_cells
    if N % 2 == 0:
        raise InequalityError("the torus inequality needs an odd cell count")
    if phi.shape != (N,):
        raise InequalityError(f"expected shape ({N},), got {phi.shape}")
    mean = float(mesh.widths @ phi) / mesh.length
    if abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(phi)))):
        warnings.warn("phi has a nonzero mean; projecting it out",
                      stacklevel=2)
        phi = phi - mean
    C_P = torus_poincare_constant(mesh)
    lhs = math.sqrt(float(np.sum(phi ** 2 * mesh.widths)))
    grad = dx_grad(phi, mesh)
    rhs = C_P * math.sqrt(float(np.sum(grad ** 2 * mesh.widths)))
    return PoincareReport(lhs=lhs, rhs=rhs, constant=C_P)


def torus_sharpness_mode(mesh: SpatialMesh, phase: float = 0.0) -> np.ndarray:
    """The Fourier mode with the smallest centered-gradient symbol,
    k = (N-1)/2; on it the torus inequality is an equality. Lower modes
    are slack (k = 1 has rhs/lhs = 2 cos(pi/N), almost 2)."""
    N = mesh.n_cells
    k_star = (N - 1) // 2
    return np.cos(2.0 * math.pi * k_star * mesh.centers / mesh.length + phase)
