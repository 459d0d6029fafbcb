"""Implicit finite-volume time steppers.

Three formulations of the same backward-Euler scheme for
eps dt_f + v dx_f = (1/eps) Q(f):

* direct: unknowns are the cell values f_ij. Well posed only for eps > 0.
* micro_macro: unknowns are (lambda, h) from f = (mu + lambda + eps h) M,
  square system. At eps = 0 this stays well posed for BGK only.
* overdetermined_micro_macro: same unknowns plus the N mean-free
  constraint rows, solved through the normal equations. Well posed for
  every eps in [0, 1], which is the production path.

Every row of the kinetic systems is normalized by dx_i dv_j so the
assembled entries match hand-derivable closed forms (and stay O(1) in the
mesh widths). The macroscopic limit scheme for the heat equation lives
here too, since the eps = 0 equivalence test couples them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import BGK, FOKKER_PLANCK, DiscreteMaxwellian
from .mesh import SpatialMesh, VelocityMesh
from .solver import (LuFactorization, SparseMatrix, SpdFactorization,
                     normal_system)

DIRECT = "direct"
MICRO_MACRO = "micro_macro"
OVERDETERMINED = "overdetermined_micro_macro"

_FORMULATIONS = (DIRECT, MICRO_MACRO, OVERDETERMINED)


class SchemeError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    epsilon: float
    dt: float
    collision: str
    formulation: str = OVERDETERMINED

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise SchemeError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.dt <= 0.0:
            raise SchemeError(f"dt must be positive, got {self.dt}")
        if self.collision not in (BGK, FOKKER_PLANCK):
            raise SchemeError(f"unknown collision operator {self.collision!r}")
        if self.formulation not in _FORMULATIONS:
            raise SchemeError(f"unknown formulation {self.formulation!r}")
        if self.epsilon == 0.0:
            legal = (self.formulation == OVERDETERMINED
                     or (self.formulation == MICRO_MACRO and self.collision == BGK))
            if not legal:
                raise SchemeError(
                    "epsilon = 0 needs the overdetermined formulation "
                    "(or micro_macro with BGK); the requested system is "
                    "singular")


@dataclass(frozen=True)
class PhaseMesh:
    x: SpatialMesh
    v: VelocityMesh

    @property
    def cell_areas(self) -> np.ndarray:
        return np.outer(self.x.widths, self.v.widths)


@dataclass
class CellDistribution:
    """Cell averages f_ij on the product mesh, shape (N, 2L)."""

    values: np.ndarray
    mesh: PhaseMesh
    maxwellian: DiscreteMaxwellian

    def __post_init__(self):
        expected = (self.mesh.x.n_cells, self.mesh.v.n_cells)
        if self.values.shape != expected:
            raise SchemeError(
                f"distribution shape {self.values.shape} != mesh {expected}")

    def density(self) -> np.ndarray:
        return self.values @ self.mesh.v.widths

    def mass(self) -> float:
        return float(self.mesh.x.widths @ self.density())


@dataclass
class MicroMacroState:
    """Macro fluctuation lambda_i, scaled micro part h_ij, total mass mu_f.

    f is recovered as (mu_f/R + lambda_i + eps h_ij) M_j. On the unit
    torus mu_f/R is the mu_f of the decomposition identity; the division
    keeps lambda mean-free on torii of any length.
    """

    lam: np.ndarray
    h: np.ndarray
    mu_f: float
    mesh: PhaseMesh
    maxwellian: DiscreteMaxwellian

    @property
    def mean_density(self) -> float:
        return self.mu_f / self.mesh.x.length

    def constraint_residuals(self) -> tuple[float, float]:
        """(max mean-free residual of h, mean of lambda), both absolute,
        normalized by the state scale."""
        scale = 1.0 + abs(self.mu_f) + float(np.max(np.abs(self.lam))) \
            + float(np.max(np.abs(self.h)))
        mw = self.maxwellian.cell_values * self.mesh.v.widths
        mean_free = float(np.max(np.abs(self.h @ mw)))
        lam_mean = abs(float(self.mesh.x.widths @ self.lam))
        return mean_free / scale, lam_mean / scale

    def check_invariants(self, tol_h: float = 1e-10,
                         tol_lam: float = 1e-12) -> None:
        res_h, res_lam = self.constraint_residuals()
        if res_h > tol_h:
            raise SchemeError(f"h is not mean-free: residual {res_h:.3e}")
        if res_lam > tol_lam:
            raise SchemeError(f"lambda has nonzero mean: {res_lam:.3e}")


def decompose(f: CellDistribution, epsilon: float) -> MicroMacroState:
    if epsilon <= 0.0:
        raise SchemeError("decompose needs epsilon > 0; use init_state at 0")
    rho = f.density()
    mu_f = float(f.mesh.x.widths @ rho)
    mean = mu_f / f.mesh.x.length
    lam = rho - mean
    M = f.maxwellian.cell_values
    h = (f.values - rho[:, None] * M[None, :]) * f.maxwellian.gamma[None, :] \
        / epsilon
    return MicroMacroState(lam=lam, h=h, mu_f=mu_f, mesh=f.mesh,
                           maxwellian=f.maxwellian)


def reconstruct(s: MicroMacroState, epsilon: float) -> CellDistribution:
    M = s.maxwellian.cell_values
    values = (s.mean_density + s.lam)[:, None] * M[None, :] \
        + epsilon * s.h * M[None, :]
    return CellDistribution(values=values, mesh=s.mesh,
                            maxwellian=s.maxwellian)


def init_state(f0: CellDistribution, cfg: SchemeConfig) -> MicroMacroState:
    if cfg.epsilon > 0.0:
        return decompose(f0, cfg.epsilon)
    rho = f0.density()
    mu_f = float(f0.mesh.x.widths @ rho)
    lam = rho - mu_f / f0.mesh.x.length
    return MicroMacroState(lam=lam, h=np.zeros_like(f0.values), mu_f=mu_f,
                           mesh=f0.mesh, maxwellian=f0.maxwellian)


def _check_kind(cfg: SchemeConfig, M: DiscreteMaxwellian) -> None:
    if cfg.collision == FOKKER_PLANCK and M.kind != FOKKER_PLANCK:
        raise SchemeError("Fokker-Planck stepping needs an interface-built "
                          "equilibrium")
    if cfg.collision == BGK and M.kind != BGK:
        raise SchemeError("BGK stepping needs a cell-built equilibrium")


class SchemeSystem:
    """Assembled matrices and factorization for the micro-macro
    formulations. Immutable after construction; one instance per
    (config, mesh, equilibrium) triple, reused across all steps."""

    def __init__(self, cfg: SchemeConfig, mesh: PhaseMesh,
                 M: DiscreteMaxwellian):
        if cfg.formulation == DIRECT:
            raise SchemeError("use DirectScheme for the direct formulation")
        _check_kind(cfg, M)
        self.cfg = cfg
        self.mesh = mesh
        self.maxwellian = M
        N, m = mesh.x.n_cells, mesh.v.n_cells
        self.n_unknowns = N + N * m
        overdet = cfg.formulation == OVERDETERMINED
        n_rows = self.n_unknowns + (N if overdet else 0)

        A = SparseMatrix(n_rows, self.n_unknowns)
        _assemble_micro_macro_rows(A, cfg, mesh, M)
        if overdet:
            _assemble_constraint_rows(A, mesh, M)
        self.matrix = A.finalize()

        if overdet:
            self.normal_matrix = normal_system(self.matrix)
            self._solver = SpdFactorization(self.normal_matrix)
        else:
            self.normal_matrix = None
            self._solver = LuFactorization(self.matrix)

    def step(self, s: MicroMacroState) -> MicroMacroState:
        N, m = self.mesh.x.n_cells, self.mesh.v.n_cells
        eps2 = self.cfg.epsilon ** 2
        rhs = np.concatenate([s.lam, eps2 * s.h.ravel()])
        if self.cfg.formulation == OVERDETERMINED:
            rhs = np.concatenate([rhs, np.zeros(N)])
            u = self._solve_seminormal(rhs)
        else:
            u = self._solver.solve(rhs)
        return replace(s, lam=u[:N], h=u[N:].reshape(N, m))

    def _solve_seminormal(self, rhs: np.ndarray) -> np.ndarray:
        """Least squares through the normal equations, then corrections
        against the residual of the rectangular system itself.  The system
        is consistent (the constraint rows hold for the exact solution), so
        this drives the rectangular residual toward rounding level and in
        particular keeps the mass functional of the update exact to ~1e-15
        instead of the squared-condition error a single normal solve leaves.
        """
        A = self.matrix.csr
        u = self._solver.solve(A.T @ rhs)
        scale = float(np.linalg.norm(rhs))
        prev = float("inf")
        for _ in range(3):
            r = rhs - A @ u
            rn = float(np.linalg.norm(r))
            if rn <= 1e-15 * scale or rn >= 0.5 * prev:
                break
            prev = rn
            u = u + self._solver.solve(A.T @ r)
        return u

    def run(self, s: MicroMacroState, n_steps: int) -> MicroMacroState:
        for _ in range(n_steps):
            s = self.step(s)
        return s


def _assemble_micro_macro_rows(A: SparseMatrix, cfg: SchemeConfig,
                               mesh: PhaseMesh, M: DiscreteMaxwellian) -> None:
    N, m = mesh.x.n_cells, mesh.v.n_cells
    dx, dv = mesh.x.widths, mesh.v.widths
    v = mesh.v.centers
    Mv = M.cell_values
    dt, eps = cfg.dt, cfg.epsilon

    idx = np.arange(N)
    ip, im = (idx + 1) % N, (idx - 1) % N
    I = np.repeat(idx, m)          # cell index i of each (i,j) pair
    J = np.tile(np.arange(m), N)   # velocity index j
    rh = N + I * m + J             # row of the h equation at (i,j)

    # macro rows: lambda_i plus the current divergence of the micro part
    A.add_entries(idx, idx, np.ones(N))
    w = (dt * (v * Mv * dv)[None, :] / (2.0 * dx[:, None])).ravel()
    A.add_entries(I, N + ip[I] * m + J, w)
    A.add_entries(I, N + im[I] * m + J, -w)

    # micro rows: transport of lambda ...
    wl = (dt * v[None, :] / (2.0 * dx[:, None])).ravel()
    A.add_entries(rh, ip[I], wl)
    A.add_entries(rh, im[I], -wl)

    # ... eps-weighted transport of h (dense coupling in velocity from the
    # projection that keeps h mean-free) ...
    if eps > 0.0:
        T = np.diag(v) - np.tile((v * dv * Mv)[None, :], (m, 1))
        I3 = np.repeat(idx, m * m)
        J3 = np.tile(np.repeat(np.arange(m), m), N)
        K3 = np.tile(np.arange(m), N * m)
        rows3 = N + I3 * m + J3
        vals3 = (eps * dt / (2.0 * dx))[I3] * T[J3, K3]
        A.add_entries(rows3, N + ip[I3] * m + K3, vals3)
        A.add_entries(rows3, N + im[I3] * m + K3, -vals3)

    # ... and the implicit collision operator
    if cfg.collision == BGK:
        A.add_entries(rh, rh, np.full(N * m, eps * eps + dt))
    else:
        ms = M.interface_values
        dw = mesh.v.dual_widths
        # ms[0] = ms[m] = 0, so the first and last rows carry one-sided
        # couplings without special casing
        diag = eps * eps + dt * (ms[1:] / dw[1:] + ms[:-1] / dw[:-1]) / (dv * Mv)
        A.add_entries(rh, rh, np.tile(diag, N))
        up = -dt * ms[1:-1] / (dv[:-1] * Mv[:-1] * dw[1:-1])    # j -> j+1
        lo = -dt * ms[1:-1] / (dv[1:] * Mv[1:] * dw[1:-1])      # j -> j-1
        Iu = np.repeat(idx, m - 1)
        Ju = np.tile(np.arange(m - 1), N)
        A.add_entries(N + Iu * m + Ju, N + Iu * m + Ju + 1, np.tile(up, N))
        A.add_entries(N + Iu * m + Ju + 1, N + Iu * m + Ju, np.tile(lo, N))


def _assemble_constraint_rows(A: SparseMatrix, mesh: PhaseMesh,
                              M: DiscreteMaxwellian) -> None:
    N, m = mesh.x.n_cells, mesh.v.n_cells
    idx = np.arange(N)
    I = np.repeat(idx, m)
    J = np.tile(np.arange(m), N)
    base = N + N * m
    vals = np.tile(M.cell_values * mesh.v.widths, N)
    A.add_entries(base + I, N + I * m + J, vals)


def assemble(cfg: SchemeConfig, mesh: PhaseMesh,
             M: DiscreteMaxwellian) -> SchemeSystem:
    return SchemeSystem(cfg, mesh, M)


class DirectScheme:
    """Backward-Euler step in the raw f unknowns. Only sound for eps > 0;
    kept as the equivalence oracle for the micro-macro paths."""

    def __init__(self, cfg: SchemeConfig, mesh: PhaseMesh,
                 M: DiscreteMaxwellian):
        if cfg.epsilon <= 0.0:
            raise SchemeError("the direct formulation is singular at eps = 0")
        _check_kind(cfg, M)
        self.cfg = cfg
        self.mesh = mesh
        self.maxwellian = M
        N, m = mesh.x.n_cells, mesh.v.n_cells
        dx, dv = mesh.x.widths, mesh.v.widths
        v = mesh.v.centers
        dt, eps = cfg.dt, cfg.epsilon

        idx = np.arange(N)
        ip, im = (idx + 1) % N, (idx - 1) % N
        I = np.repeat(idx, m)
        J = np.tile(np.arange(m), N)
        rq = I * m + J

        A = SparseMatrix(N * m, N * m)
        wt = (dt * v[None, :] / (2.0 * dx[:, None])).ravel()
        A.add_entries(rq, ip[I] * m + J, wt)
        A.add_entries(rq, im[I] * m + J, -wt)

        if cfg.collision == BGK:
            A.add_entries(rq, rq, np.full(N * m, eps + dt / eps))
            I3 = np.repeat(idx, m * m)
            J3 = np.tile(np.repeat(np.arange(m), m), N)
            K3 = np.tile(np.arange(m), N * m)
            vals3 = -(dt / eps) * M.cell_values[J3] * dv[K3]
            A.add_entries(I3 * m + J3, I3 * m + K3, vals3)
        else:
            ms = M.interface_values
            dw = mesh.v.dual_widths
            gam = M.gamma
            diag = eps + (dt / eps) * gam * (ms[1:] / dw[1:]
                                             + ms[:-1] / dw[:-1]) / dv
            A.add_entries(rq, rq, np.tile(diag, N))
            up = -(dt / eps) * ms[1:-1] * gam[1:] / (dv[:-1] * dw[1:-1])
            lo = -(dt / eps) * ms[1:-1] * gam[:-1] / (dv[1:] * dw[1:-1])
            Iu = np.repeat(idx, m - 1)
            Ju = np.tile(np.arange(m - 1), N)
            A.add_entries(Iu * m + Ju, Iu * m + Ju + 1, np.tile(up, N))
            A.add_entries(Iu * m + Ju + 1, Iu * m + Ju, np.tile(lo, N))

        self.matrix = A.finalize()
        self._solver = LuFactorization(self.matrix)

    def step(self, f: CellDistribution) -> CellDistribution:
        rhs = self.cfg.epsilon * f.values.ravel()
        new = self._solver.solve(rhs)
        return CellDistribution(values=new.reshape(f.values.shape),
                                mesh=f.mesh, maxwellian=f.maxwellian)

    def run(self, f: CellDistribution, n_steps: int) -> CellDistribution:
        for _ in range(n_steps):
            f = self.step(f)
        return f


def step_direct(cfg: SchemeConfig, mesh: PhaseMesh, M: DiscreteMaxwellian,
                f: CellDistribution) -> CellDistribution:
    return DirectScheme(cfg, mesh, M).step(f)


class HeatSolver:
    """Implicit step of the limiting heat scheme.

    The diffusion term is the centered gradient applied twice, which
    couples i to i +- 2 (wide stencil). That exact stencil is what the
    eps = 0 kinetic solve reproduces, so no compact Laplacian here.
    """

    def __init__(self, mesh: SpatialMesh, m2: float, dt: float):
        N = mesh.n_cells
        if N % 2 == 0:
            raise SchemeError("heat scheme needs an odd cell count")
        self.mesh = mesh
        self.m2 = m2
        self.dt = dt
        dx = mesh.widths
        idx = np.arange(N)
        ip, im = (idx + 1) % N, (idx - 1) % N
        cp = 0.5 * m2 * dt / (2.0 * dx[ip])   # weight of (D_x rho)_{i+1}
        cm = 0.5 * m2 * dt / (2.0 * dx[im])
        A = SparseMatrix(N, N)
        A.add_entries(idx, idx, dx + cp + cm)
        A.add_entries(idx, (idx + 2) % N, -cp)
        A.add_entries(idx, (idx - 2) % N, -cm)
        self.matrix = A.finalize()
        self._solver = LuFactorization(self.matrix)

    def step(self, rho: np.ndarray) -> np.ndarray:
        return self._solver.solve(self.mesh.widths * rho)

    def run(self, rho: np.ndarray, n_steps: int) -> np.ndarray:
        for _ in range(n_steps):
            rho = self.step(rho)
        return rho


def heat_step(rho: np.ndarray, m2: float, dt: float,
              mesh: SpatialMesh) -> np.ndarray:
    return HeatSolver(mesh, m2, dt).step(rho)
