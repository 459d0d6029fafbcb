"""Phase-space meshes.

Velocity: a symmetric box [-v_star, v_star] split into 2L cells. The
interface at index L sits exactly at v = 0 and the whole interface array is
antisymmetric bit for bit (built by mirroring the nonnegative half). Cell
centers inherit the mirror symmetry: centers[k] == -centers[2L-1-k].

A dual mesh lives on top of the primal one: dual cell k spans
(node[k], node[k+1]) where the node array is [-v_star, centers..., v_star].
Dual cells are centered on the primal interfaces and carry the
Fokker-Planck fluxes; the two end dual cells are half-width.

Space: a periodic interval of length R split into N cells, N odd. Odd N
makes the centered-difference Poisson problem solvable (even N would put a
spurious Nyquist vector in the kernel).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class VelocityMesh:
    """Symmetric velocity grid with its dual.

    interfaces : (2L+1,) primal interfaces, interfaces[0] = -v_star,
        interfaces[L] = 0, interfaces[2L] = +v_star.
    centers : (2L,) primal cell midpoints.
    widths : (2L,) primal cell widths.
    dual_widths : (2L+1,) widths of the dual cells, aligned with the
        interface array (dual_widths[k] belongs to interfaces[k]).
    """

    v_star: float
    interfaces: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    dual_widths: np.ndarray

    @property
    def L(self) -> int:
        return (self.interfaces.size - 1) // 2

    @property
    def n_cells(self) -> int:
        return self.centers.size

    def validate(self, tol: float = 0.0) -> None:
        """Check the symmetry hypotheses. tol = 0 demands bit-exactness
        (what the builders guarantee); file-loaded meshes may pass a small
        tolerance instead."""
        iface = self.interfaces
        n = iface.size
        if n < 3 or n % 2 == 0:
            raise MeshError(f"need an odd number >= 3 of interfaces, got {n}")
        if not np.all(np.isfinite(iface)):
            raise MeshError("non-finite interface coordinate")
        if np.any(np.diff(iface) <= 0):
            raise MeshError("interfaces must be strictly increasing")
        mirror = -iface[::-1]
        if tol == 0.0:
            sym_ok = np.array_equal(iface, mirror) and iface[(n - 1) // 2] == 0.0
        else:
            sym_ok = (np.max(np.abs(iface - mirror)) <= tol * self.v_star
                      and abs(iface[(n - 1) // 2]) <= tol * self.v_star)
        if not sym_ok:
            raise MeshError("velocity interfaces are not antisymmetric about 0")
        if iface[0] != -self.v_star or iface[-1] != self.v_star:
            raise MeshError("interface array does not span [-v_star, v_star]")
        # centers never vanish (v = 0 is an interface), so 1/v_j is safe
        if np.any(self.centers == 0.0):
            raise MeshError("a cell center sits at v = 0")


@dataclass(frozen=True)
class SpatialMesh:
    """Periodic 1D grid on an interval of length R, N odd."""

    length: float
    edges: np.ndarray    # (N+1,), edges[0] = 0, edges[N] = R
    centers: np.ndarray  # (N,)
    widths: np.ndarray   # (N,)

    @property
    def n_cells(self) -> int:
        return self.centers.size

    def validate(self) -> None:
        N = self.n_cells
        if N < 3 or N % 2 == 0:
            raise MeshError(f"number of spatial cells must be odd and >= 3, got {N}")
        if np.any(self.widths <= 0) or not np.all(np.isfinite(self.edges)):
            raise MeshError("bad spatial cell widths")
        if abs(self.widths.sum() - self.length) > 1e-12 * self.length:
            raise MeshError("cell widths do not sum to the domain length")


def build_velocity_mesh(v_star: float, L: int) -> VelocityMesh:
    """Uniform symmetric velocity mesh with 2L cells on [-v_star, v_star]."""
    if v_star <= 0:
        raise MeshError(f"v_star must be positive, got {v_star}")
    if L < 1:
        raise MeshError(f"L must be >= 1, got {L}")
    # build the nonnegative interfaces, then mirror so the negative side is
    # bit-exact; k * v_star / L keeps the last entry exactly v_star via k = L
    pos = np.array([k * v_star / L for k in range(L + 1)])
    pos[-1] = v_star
    return velocity_mesh_from_interfaces(np.concatenate([-pos[:0:-1], pos]))


def velocity_mesh_from_interfaces(interfaces: np.ndarray,
                                  tol: float = 1e-12) -> VelocityMesh:
    """Velocity mesh from an explicit (possibly nonuniform) interface array.

    The array must be antisymmetric within tol; it is re-mirrored from the
    positive half so downstream symmetry holds bit for bit.
    """
    iface = np.asarray(interfaces, dtype=float)
    if iface.ndim != 1 or iface.size < 3 or iface.size % 2 == 0:
        raise MeshError("interfaces must be a 1D array of odd length >= 3")
    v_star = float(iface[-1])
    L = (iface.size - 1) // 2
    probe = VelocityMesh(v_star, iface, np.ones(2 * L), np.ones(2 * L),
                         np.ones(2 * L + 1))
    probe.validate(tol=tol)
    pos = iface[L:].copy()
    pos[0] = 0.0
    iface = np.concatenate([-pos[:0:-1], pos])

    centers_pos = 0.5 * (pos[:-1] + pos[1:])           # v_j for j = 1..L
    centers = np.concatenate([-centers_pos[::-1], centers_pos])
    widths = np.diff(iface)
    nodes = np.concatenate([[-v_star], centers, [v_star]])
    dual_widths = np.diff(nodes)

    mesh = VelocityMesh(v_star=v_star, interfaces=iface, centers=centers,
                        widths=widths, dual_widths=dual_widths)
    mesh.validate(tol=0.0)
    return mesh


def build_spatial_mesh(R: float, N: int) -> SpatialMesh:
    """Uniform periodic mesh with N (odd) cells on [0, R]."""
    if R <= 0:
        raise MeshError(f"domain length must be positive, got {R}")
    edges = np.array([i * R / N for i in range(N + 1)])
    edges[-1] = R
    return spatial_mesh_from_edges(edges)


def spatial_mesh_from_edges(edges: np.ndarray) -> SpatialMesh:
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 4:
        raise MeshError("edges must be a 1D array with at least 4 entries")
    if edges[0] != 0.0:
        raise MeshError("spatial mesh must start at x = 0")
    mesh = SpatialMesh(length=float(edges[-1]), edges=edges,
                       centers=0.5 * (edges[:-1] + edges[1:]),
                       widths=np.diff(edges))
    mesh.validate()
    return mesh


def load_mesh_config(source) -> tuple[VelocityMesh, SpatialMesh]:
    """Build both meshes from a JSON file path or an already-parsed dict.

    Either {"v_star": .., "L": .., "R": .., "N": ..} for uniform meshes, or
    explicit {"velocity_interfaces": [...], "spatial_edges": [...]} lists.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    else:
        cfg = dict(source)

    if "velocity_interfaces" in cfg:
        vmesh = velocity_mesh_from_interfaces(np.asarray(cfg["velocity_interfaces"]))
    else:
        vmesh = build_velocity_mesh(float(cfg["v_star"]), int(cfg["L"]))

    if "spatial_edges" in cfg:
        xmesh = spatial_mesh_from_edges(np.asarray(cfg["spatial_edges"]))
    else:
        xmesh = build_spatial_mesh(float(cfg.get("R", 1.0)), int(cfg["N"]))
    return vmesh, xmesh
