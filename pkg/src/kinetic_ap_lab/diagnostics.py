"""Every quantity the analysis bounds: velocity moments, weighted norms,
the per-step entropy inequality, the modified entropy with its Poisson
sub-problem, the certified decay constants, and the time-series estimators
for decay rates and oscillation periods.

Two evaluation paths exist for most quantities. The literal one takes cell
values f_ij and applies the definitions as written. The state-based one
takes the micro-macro unknowns (lambda, h) and evaluates algebraically
equivalent formulas that stay accurate when f is epsilon-close to
equilibrium, where the literal differences would cancel catastrophically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .equilibrium import DiscreteMaxwellian
from .mesh import SpatialMesh
from .scheme import CellDistribution, MicroMacroState, PhaseMesh


class DiagnosticsError(ValueError):
    pass


# ---------------------------------------------------------------- moments

@dataclass(frozen=True)
class MomentSet:
    rho: np.ndarray
    J: np.ndarray
    S: np.ndarray


def moments(f: CellDistribution, epsilon: float) -> MomentSet:
    """Density, current and centered second moment, literal definitions.
    The current carries a 1/epsilon; use moments_from_state at 0."""
    if epsilon <= 0.0:
        raise DiagnosticsError("literal current needs epsilon > 0; "
                               "use moments_from_state")
    v = f.mesh.v.centers
    dv = f.mesh.v.widths
    rho = f.values @ dv
    J = (f.values @ (v * dv)) / epsilon
    S = f.values @ ((v * v - f.maxwellian.m2) * dv)
    return MomentSet(rho=rho, J=J, S=S)


def moments_from_state(s: MicroMacroState, epsilon: float) -> MomentSet:
    """Moments evaluated from (lambda, h). The current of the equilibrium
    part vanishes by symmetry, so J = sum_j dv_j v_j M_j h_ij holds for
    every epsilon including 0, with no amplified cancellation."""
    v = s.mesh.v.centers
    dv = s.mesh.v.widths
    M = s.maxwellian.cell_values
    rho = s.mean_density + s.lam
    J = s.h @ (v * dv * M)
    S = epsilon * (s.h @ ((v * v - s.maxwellian.m2) * dv * M))
    return MomentSet(rho=rho, J=J, S=S)


# ------------------------------------------------------------------ norms

def weighted_norm(f: CellDistribution) -> float:
    """|| f ||_{2,gamma} = sqrt(sum f^2 gamma_j dx_i dv_j)."""
    w = np.outer(f.mesh.x.widths, f.maxwellian.gamma * f.mesh.v.widths)
    return math.sqrt(float(np.sum(f.values ** 2 * w)))


def macro_norm(rho: np.ndarray, mesh: SpatialMesh) -> float:
    return math.sqrt(float(np.sum(rho ** 2 * mesh.widths)))


def dx_grad(rho: np.ndarray, mesh: SpatialMesh) -> np.ndarray:
    """Centered periodic gradient (rho_{i+1} - rho_{i-1}) / (2 dx_i)."""
    return (np.roll(rho, -1) - np.roll(rho, 1)) / (2.0 * mesh.widths)


@dataclass(frozen=True)
class StateNorms:
    """Distances of f = (mu + lambda + eps h) M to its equilibria.

    norm_to_eq : ||f - mu M||_{2,gamma} (global equilibrium)
    norm_local : ||f - rho M||_{2,gamma} (local equilibrium), equal to
        eps * h_weighted
    rho_dev : ||rho - mu||_2
    h_weighted : ||h||_{2,M}, the M-weighted norm of the micro part
    """

    norm_to_eq: float
    norm_local: float
    rho_dev: float
    h_weighted: float


def state_norms(s: MicroMacroState, epsilon: float) -> StateNorms:
    dx = s.mesh.x.widths
    dvM = s.mesh.v.widths * s.maxwellian.cell_values
    g = s.lam[:, None] + epsilon * s.h
    norm_to_eq = math.sqrt(float(dx @ (g * g) @ dvM))
    h_sq = float(dx @ (s.h * s.h) @ dvM)
    rho_dev = macro_norm(s.lam, s.mesh.x)
    return StateNorms(norm_to_eq=norm_to_eq,
                      norm_local=epsilon * math.sqrt(h_sq),
                      rho_dev=rho_dev,
                      h_weighted=math.sqrt(h_sq))


# --------------------------------------------------------- entropy slack

def entropy_slack(f_old: CellDistribution, f_new: CellDistribution,
                  epsilon: float, dt: float) -> float:
    """(||f^{n+1}||^2 - ||f^n||^2) / (2 dt) + (1/eps^2) ||f^{n+1} -
    rho^{n+1} M||^2_{2,gamma}; nonpositive along scheme steps. At eps = 0
    only the norm decrement is returned."""
    decr = (weighted_norm(f_new) ** 2 - weighted_norm(f_old) ** 2) / (2.0 * dt)
    if epsilon == 0.0:
        return decr
    rho = f_new.density()
    dev = f_new.values - rho[:, None] * f_new.maxwellian.cell_values[None, :]
    w = np.outer(f_new.mesh.x.widths,
                 f_new.maxwellian.gamma * f_new.mesh.v.widths)
    return decr + float(np.sum(dev ** 2 * w)) / epsilon ** 2


def entropy_slack_states(s_old: MicroMacroState, s_new: MicroMacroState,
                         epsilon: float, dt: float) -> float:
    """Same quantity on the mean-shifted states. Mass conservation makes
    the shift drop out of the norm difference exactly, and the local term
    is ||h||^2_{2,M} with no epsilon in sight."""
    dx = s_new.mesh.x.widths
    dvM = s_new.mesh.v.widths * s_new.maxwellian.cell_values
    g_old = s_old.lam[:, None] + epsilon * s_old.h
    g_new = s_new.lam[:, None] + epsilon * s_new.h
    decr = (float(dx @ (g_new * g_new) @ dvM)
            - float(dx @ (g_old * g_old) @ dvM)) / (2.0 * dt)
    if epsilon == 0.0:
        return decr
    return decr + float(dx @ (s_new.h * s_new.h) @ dvM)


def state_mass(s: MicroMacroState, epsilon: float) -> float:
    """Total discrete mass of the reconstructed f, without materializing
    it: mu_f plus the (tiny) constraint residuals."""
    dx = s.mesh.x.widths
    dvM = s.mesh.v.widths * s.maxwellian.cell_values
    return s.mu_f + float(dx @ s.lam) + epsilon * float(dx @ (s.h @ dvM))


# ----------------------------------------------------------- Poisson

@dataclass(frozen=True)
class PoissonSolution:
    phi: np.ndarray
    grad: np.ndarray
    projected_mean: float


class PoissonSolver:
    """-[ (D_x phi)_{i+1} - (D_x phi)_{i-1} ] / 2 = dx_i rho_i with
    sum dx_i phi_i = 0, N odd. Solved as a dense bordered system (the
    operator kernel is the constants; the weighted-mean row pins it)
    factored once per mesh."""

    def __init__(self, mesh: SpatialMesh):
        N = mesh.n_cells
        if N % 2 == 0:
            raise DiagnosticsError("Poisson solve needs an odd cell count")
        self.mesh = mesh
        dx = mesh.widths
        idx = np.arange(N)
        ip, im = (idx + 1) % N, (idx - 1) % N
        A = np.zeros((N + 1, N + 1))
        cp = 1.0 / (4.0 * dx[ip])
        cm = 1.0 / (4.0 * dx[im])
        A[idx, idx] = cp + cm
        A[idx, (idx + 2) % N] = -cp
        A[idx, (idx - 2) % N] = -cm
        A[:N, N] = dx
        A[N, :N] = dx
        self._lu = scipy.linalg.lu_factor(A)
        self._A = A

    def solve(self, rho: np.ndarray) -> PoissonSolution:
        mesh = self.mesh
        N = mesh.n_cells
        dx = mesh.widths
        mean = float(dx @ rho) / mesh.length
        scale = max(1.0, float(np.max(np.abs(rho))))
        if abs(mean) > 1e-10 * scale:
            rho = rho - mean
        rhs = np.concatenate([dx * rho, [0.0]])
        sol = scipy.linalg.lu_solve(self._lu, rhs)
        sol -= scipy.linalg.lu_solve(self._lu, self._A @ sol - rhs)
        phi = sol[:N]
        grad = dx_grad(phi, mesh)
        resid = -(np.roll(grad, -1) - np.roll(grad, 1)) / 2.0 - dx * rho
        if np.max(np.abs(resid)) > 1e-11 * max(1.0, float(np.max(np.abs(dx * rho)))):
            raise DiagnosticsError(
                f"Poisson residual {np.max(np.abs(resid)):.3e} out of tolerance")
        return PoissonSolution(phi=phi, grad=grad,
                               projected_mean=mean if abs(mean) > 1e-10 * scale
                               else 0.0)


def poisson_solve(rho: np.ndarray, mesh: SpatialMesh) -> PoissonSolution:
    return PoissonSolver(mesh).solve(rho)


# ------------------------------------------------- certificate constants

def torus_poincare_constant(mesh: SpatialMesh) -> float:
    """C_P = R / (N sin(pi/N)): the reciprocal of the smallest nonzero
    symbol of the centered gradient on an odd periodic grid."""
    N = mesh.n_cells
    return mesh.length / (N * math.sin(math.pi / N))


@dataclass(frozen=True)
class EntropyConfig:
    eta: float
    eta1: float
    eta2: float
    C_P: float
    dt_max: float
    K_eta: float
    K2: float
    kappa: float
    beta: float
    big_c: float
    m2: float
    m4: float


def compute_eta_admissible(M: DiscreteMaxwellian, C_P: float,
                           dt_max: float) -> EntropyConfig:
    """Certificate constants with the moment bounds instantiated at the
    actual discrete moments (sharpest certified rate)."""
    m2, m4 = M.m2, M.m4
    s2 = math.sqrt(m2)
    eta1 = 1.0 / (2.0 * s2)
    eta2 = m2 / ((math.sqrt(m4 - m2 * m2) + C_P * s2) ** 2 + m2 * m2)
    eta = 0.5 * min(eta1, eta2)
    K_eta = 0.5 * min(1.0 - eta * m2, eta * m2)
    K2 = 1.0 + 2.0 * eta * s2 * C_P + eta * m2 * dt_max
    kappa = 2.0 * K_eta / K2
    beta = math.log(1.0 + dt_max * kappa) / dt_max
    big_c = math.sqrt(K2 * math.exp(beta * dt_max) / (1.0 - 2.0 * eta * s2))
    return EntropyConfig(eta=eta, eta1=eta1, eta2=eta2, C_P=C_P,
                         dt_max=dt_max, K_eta=K_eta, K2=K2, kappa=kappa,
                         beta=beta, big_c=big_c, m2=m2, m4=m4)


# ------------------------------------------------------ modified entropy

def _entropy_value(eta: float, epsilon: float, dt: float, dx: np.ndarray,
                   half_norm_sq: float, J: np.ndarray, grad: np.ndarray,
                   grad_prev: np.ndarray) -> float:
    cross = float(dx @ (J * grad))
    memory = 0.5 * float(dx @ (grad - grad_prev) ** 2) / dt
    return half_norm_sq + eta * epsilon ** 2 * (cross + memory)


def modified_entropy(s: MicroMacroState, s_prev: MicroMacroState,
                     cfg: EntropyConfig, epsilon: float, dt: float) -> float:
    """The monotone functional at step n >= 1, built from the states at n
    and n-1. All terms are evaluated on the mean-shifted distribution, so
    the Poisson source is lambda itself."""
    if not 0.0 < cfg.eta < min(cfg.eta1, cfg.eta2):
        raise DiagnosticsError(
            f"eta = {cfg.eta} is not admissible (needs 0 < eta < "
            f"{min(cfg.eta1, cfg.eta2):.6g})")
    solver = PoissonSolver(s.mesh.x)
    grad = solver.solve(s.lam).grad
    grad_prev = solver.solve(s_prev.lam).grad
    J = moments_from_state(s, epsilon).J
    norms = state_norms(s, epsilon)
    return _entropy_value(cfg.eta, epsilon, dt, s.mesh.x.widths,
                          0.5 * norms.norm_to_eq ** 2, J, grad, grad_prev)


class EntropyTracker:
    """Streams the modified entropy along a run, keeping the one-step
    gradient history the third term needs. update() returns None at n = 0
    (the functional starts at n = 1)."""

    def __init__(self, cfg: EntropyConfig, mesh: PhaseMesh, epsilon: float,
                 dt: float):
        if not 0.0 < cfg.eta < min(cfg.eta1, cfg.eta2):
            raise DiagnosticsError(f"eta = {cfg.eta} is not admissible")
        self.cfg = cfg
        self.epsilon = epsilon
        self.dt = dt
        self._poisson = PoissonSolver(mesh.x)
        self._grad_prev: np.ndarray | None = None

    def update(self, s: MicroMacroState) -> float | None:
        grad = self._poisson.solve(s.lam).grad
        if self._grad_prev is None:
            self._grad_prev = grad
            return None
        J = moments_from_state(s, self.epsilon).J
        norms = state_norms(s, self.epsilon)
        value = _entropy_value(self.cfg.eta, self.epsilon, self.dt,
                               s.mesh.x.widths, 0.5 * norms.norm_to_eq ** 2,
                               J, grad, self._grad_prev)
        self._grad_prev = grad
        return value


# ------------------------------------------------- time-series estimators

@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    n_points: int
    window: tuple[float, float]


def fit_decay_rate(times, values, window: tuple[float, float] | None = None,
                   transient_fraction: float = 0.10,
                   floor_rel: float = 1e-12) -> DecayFit:
    """Least-squares slope of log(value) against t.

    Unless an explicit window is given, the first 10% of samples (the
    transient) and everything below 1e-12 of the largest post-transient
    value (the round-off floor) are excluded.  The floor deliberately
    ignores the transient maximum: far-from-equilibrium data can start many
    orders of magnitude above the regime the fit is after.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise DiagnosticsError("times and values must be 1D with equal length")
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
    else:
        keep = np.ones_like(t, dtype=bool)
        keep[:int(transient_fraction * t.size)] = False
        kept = y[keep]
        if kept.size and np.max(kept) > 0:
            keep &= y > floor_rel * float(np.max(kept))
    keep &= y > 0
    t_fit, y_fit = t[keep], y[keep]
    if t_fit.size < 4:
        raise DiagnosticsError(
            f"only {t_fit.size} usable points for the rate fit (need 4)")
    log_y = np.log(y_fit)
    coeffs = np.polyfit(t_fit, log_y, 1)
    pred = np.polyval(coeffs, t_fit)
    ss_res = float(np.sum((log_y - pred) ** 2))
    ss_tot = float(np.sum((log_y - log_y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(rate=float(coeffs[0]), intercept=float(coeffs[1]),
                    r_squared=r2, n_points=int(t_fit.size),
                    window=(float(t_fit[0]), float(t_fit[-1])))


@dataclass(frozen=True)
class PeriodEstimate:
    period: float
    maxima_times: np.ndarray

    @property
    def n_maxima(self) -> int:
        return self.maxima_times.size


def estimate_oscillation_period(times, values,
                                floor_rel: float = 1e-9) -> PeriodEstimate:
    """Mean spacing of the local maxima of value(t).

    Maxima are located by 3-point comparison above a relative floor, then
    refined by a parabola through the log values (the signals here are
    exponentially damped, so the log is locally quadratic at a peak).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    floor = floor_rel * float(np.max(y))
    peaks = []
    for k in range(1, y.size - 1):
        if y[k] > y[k - 1] and y[k] > y[k + 1] and y[k] > floor:
            ym, y0, yp = np.log(y[k - 1]), np.log(y[k]), np.log(y[k + 1])
            denom = ym - 2.0 * y0 + yp
            shift = 0.0 if denom == 0.0 else 0.5 * (ym - yp) / denom
            shift = float(np.clip(shift, -0.5, 0.5))
            peaks.append(t[k] + shift * (t[k + 1] - t[k - 1]) / 2.0)
    if len(peaks) < 3:
        raise DiagnosticsError(
            f"found {len(peaks)} local maxima above the floor, need 3")
    maxima = np.asarray(peaks)
    return PeriodEstimate(period=float(np.mean(np.diff(maxima))),
                          maxima_times=maxima)


# ------------------------------------------------------- per-step record

@dataclass(frozen=True)
class DiagnosticsRecord:
    n: int
    t: float
    norm_to_eq: float
    norm_local: float
    rho_dev: float
    h_norm: float
    H: float
    mass: float
    slack: float

    FIELDS = ("n", "t", "norm_to_eq", "norm_local", "rho_dev", "h_norm",
              "H", "mass", "slack")
