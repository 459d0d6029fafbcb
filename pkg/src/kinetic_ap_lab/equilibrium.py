"""Discrete velocity equilibria.

Two flavours, matching the two collision operators:

* BGK uses cell values only: positive, even, unit discrete mass.
* Fokker-Planck starts from interface values (even, vanishing at the box
  ends) and derives the cell values through the finite-difference analogue
  of M'(v) = -v M(v):

      M_j = (Mstar_{j-1/2} - Mstar_{j+1/2}) / (v_j dv_j) > 0.

The normalization is applied to the interface values once, the cell values
are derived from them, and the unit-mass condition is then checked rather
than re-forced, so the coupling identity above survives exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .mesh import VelocityMesh

BGK = "bgk"
FOKKER_PLANCK = "fokker_planck"

_MASS_TOL = 1e-12


class EquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMaxwellian:
    """Velocity equilibrium on a symmetric mesh.

    cell_values : (2L,) positive cell averages, unit discrete mass.
    gamma : (2L,) inverse cell values, kept precomputed because the
        weighted norm divides by them every time step.
    interface_values : (2L+1,) nonnegative interface profile, only for the
        Fokker-Planck kind; zero at both ends of the velocity box.
    """

    mesh: VelocityMesh
    kind: str
    cell_values: np.ndarray
    gamma: np.ndarray
    interface_values: np.ndarray | None = field(default=None)

    @cached_property
    def mass(self) -> float:
        return self.moment(0)

    @cached_property
    def m2(self) -> float:
        return self.moment(2)

    @cached_property
    def m4(self) -> float:
        return self.moment(4)

    def moment(self, k: int) -> float:
        """Discrete absolute moment sum_j |v_j|^k M_j dv_j."""
        if k < 0:
            raise EquilibriumError(f"moment order must be >= 0, got {k}")
        v = self.mesh.centers
        w = np.abs(v) ** k if k else np.ones_like(v)
        return float(np.sum(w * self.cell_values * self.mesh.widths))

    def validate(self) -> None:
        m = self.cell_values
        n = m.size
        if n != self.mesh.n_cells:
            raise EquilibriumError("cell value count does not match the mesh")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise EquilibriumError("cell values must be positive and finite")
        if np.max(np.abs(m - m[::-1])) > 1e-14 * np.max(m):
            raise EquilibriumError("cell values are not even in v")
        if abs(self.mass - 1.0) > _MASS_TOL:
            raise EquilibriumError(
                f"discrete mass deviates from 1 by {abs(self.mass - 1.0):.3e}")
        if self.kind == FOKKER_PLANCK:
            ms = self.interface_values
            if ms is None:
                raise EquilibriumError("Fokker-Planck kind needs interface values")
            if ms[0] != 0.0 or ms[-1] != 0.0:
                raise EquilibriumError("interface values must vanish at the box ends")
            if np.any(ms < 0):
                raise EquilibriumError("interface values must be nonnegative")
            if np.max(np.abs(ms - ms[::-1])) > 1e-14 * np.max(ms):
                raise EquilibriumError("interface values are not even in v")
            derived = (ms[:-1] - ms[1:]) / (self.mesh.centers * self.mesh.widths)
            if np.max(np.abs(derived - m)) > 1e-13 * np.max(m):
                raise EquilibriumError(
                    "cell values do not match the interface difference quotient")
        elif self.kind != BGK:
            raise EquilibriumError(f"unknown kind {self.kind!r}")


def _from_cell_values(mesh: VelocityMesh, raw: np.ndarray, kind: str,
                      interface_values: np.ndarray | None = None,
                      normalize: bool = True) -> DiscreteMaxwellian:
    raw = np.asarray(raw, dtype=float)
    if np.any(raw <= 0):
        raise EquilibriumError("equilibrium cell values must be positive")
    # symmetrize so evenness is bit-exact regardless of how raw was produced
    vals = 0.5 * (raw + raw[::-1])
    mass = float(np.sum(vals * mesh.widths))
    if normalize:
        vals = vals / mass
        if interface_values is not None:
            interface_values = interface_values / mass
    elif abs(mass - 1.0) > _MASS_TOL:
        raise EquilibriumError(f"cell mass is {mass!r}, expected 1")
    M = DiscreteMaxwellian(mesh=mesh, kind=kind, cell_values=vals,
                           gamma=1.0 / vals, interface_values=interface_values)
    M.validate()
    return M


def gaussian_bgk(mesh: VelocityMesh) -> DiscreteMaxwellian:
    """Standard Gaussian sampled at cell centers, renormalized to unit
    discrete mass."""
    raw = np.exp(-0.5 * mesh.centers ** 2) / np.sqrt(2.0 * np.pi)
    return _from_cell_values(mesh, raw, BGK)


def nongaussian_bgk(mesh: VelocityMesh) -> DiscreteMaxwellian:
    """Polynomial-tail equilibrium (cos(pi v) + 1.1) / (1 + 0.1 |v|^6),
    normalized. Positive everywhere since cos + 1.1 >= 0.1."""
    v = mesh.centers
    raw = (np.cos(np.pi * v) + 1.1) / (1.0 + 0.1 * np.abs(v) ** 6)
    return _from_cell_values(mesh, raw, BGK)


def gaussian_fp(mesh: VelocityMesh) -> DiscreteMaxwellian:
    """Gaussian interface profile, clamped to zero at +-v_star, with cell
    values derived from the interface differences."""
    raw = np.exp(-0.5 * mesh.interfaces ** 2) / np.sqrt(2.0 * np.pi)
    raw[0] = 0.0
    raw[-1] = 0.0
    return maxwellian_from_interfaces(mesh, raw)


def maxwellian_from_interfaces(mesh: VelocityMesh,
                               interface_values: np.ndarray) -> DiscreteMaxwellian:
    """Fokker-Planck equilibrium from a raw interface profile.

    Scales the interface values so the derived cell mass is 1, derives the
    cells, then verifies (does not re-force) the unit mass. One global
    rescale of both sets is allowed to absorb rounding; that rescale leaves
    the difference-quotient identity intact.
    """
    ms = np.asarray(interface_values, dtype=float).copy()
    if ms.size != mesh.interfaces.size:
        raise EquilibriumError("interface value count does not match the mesh")
    if ms[0] != 0.0 or ms[-1] != 0.0:
        raise EquilibriumError("interface values must be exactly 0 at +-v_star")
    ms = 0.5 * (ms + ms[::-1])

    cells = (ms[:-1] - ms[1:]) / (mesh.centers * mesh.widths)
    if np.any(cells <= 0):
        raise EquilibriumError("derived cell values are not all positive")
    scale = float(np.sum(cells * mesh.widths))
    ms /= scale
    cells /= scale

    mass = float(np.sum(cells * mesh.widths))
    if abs(mass - 1.0) > _MASS_TOL:
        raise EquilibriumError(
            f"derived cell mass off by {abs(mass - 1.0):.3e} after scaling")
    if mass != 1.0:
        ms /= mass
        cells /= mass
    return _from_cell_values(mesh, cells, FOKKER_PLANCK,
                             interface_values=ms, normalize=False)


def maxwellian_from_file(path, mesh: VelocityMesh) -> DiscreteMaxwellian:
    """Load a user-supplied equilibrium from JSON and run the full
    hypothesis checks. Accepts {"kind": "bgk", "cell_values": [...]} or
    {"kind": "fokker_planck", "interface_values": [...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    kind = data.get("kind", BGK)
    if kind == BGK:
        return _from_cell_values(mesh, np.asarray(data["cell_values"]), BGK)
    if kind == FOKKER_PLANCK:
        return maxwellian_from_interfaces(
            mesh, np.asarray(data["interface_values"]))
    raise EquilibriumError(f"unknown equilibrium kind {kind!r} in {Path(path)}")
