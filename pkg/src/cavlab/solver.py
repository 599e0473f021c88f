"""Viscous approximate solutions by damped Picard iteration.

For each viscosity eps the mixed Dirichlet-Neumann system is solved in
the potential form

    lap(sigma) = (1/eps) div(rho(sigma) qt(sigma) e(theta)) + s_sigma,
    lap(theta) = (1/eps) div(qt(sigma) e(theta - pi/2)) + s_theta,

with (sigma, theta) = (sigma_inf, 0) on the far-field boundary and, on
the obstacle,

    eps grad(sigma).n = |rho qt e(theta).n|,   grad(theta).n = 0

(n pointing into the fluid).  sigma(rho) = 2 rho - atanh(rho) absorbs the
degenerate diffusion factor 1 - c^2/q^2, and the clipped speed
qt(rho) = (1 - rho_+^2)_+^(1/2) guards transients; at convergence it
coincides with the Bernoulli speed.  Each Picard step performs two
Poisson solves against one prefactored stiffness matrix, blended with
damping omega; steps that leave the invertible sigma range are retried
with halved omega and projected as a last resort (projections counted,
zero at convergence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import gaschart as gc
from .meshing import FARFIELD, OBSTACLE, Mesh

RHO_GUARD = gc.RHO_CR - 1e-6


class ConvergenceError(RuntimeError):
    """Picard iteration failed; carries the iteration history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class SolverConfig:
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025, 0.0125)
    q_inf: float = 0.9
    omega: float = 0.5
    picard_tol: float = 1e-8
    residual_tol: float = 1e-7
    # the damped map loses contractivity roughly like 1/eps; the default
    # budget is sized so the default sweep converges with adaptive damping
    max_iters: int = 8000
    tol_inv_factor: float = 1e-3
    adapt_omega: bool = True

    def __post_init__(self):
        if not gc.Q_CR < self.q_inf < gc.Q_CAV:
            raise ValueError("far-field speed must be strictly supersonic "
                             "and strictly below cavitation")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        eps = tuple(self.epsilons)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon list must be strictly decreasing")

    @property
    def rho_inf(self) -> float:
        return gc.rho_of_q(self.q_inf)

    @property
    def sigma_inf(self) -> float:
        return gc.sigma_of_rho(self.rho_inf)

    @property
    def k_inf(self) -> float:
        return gc.k_of_q(self.q_inf)

    @property
    def tol_inv(self) -> float:
        return self.tol_inv_factor * self.k_inf


@dataclass
class Solution:
    """Converged nodal fields for one viscosity, plus derived states."""

    epsilon: float
    sigma: np.ndarray
    theta: np.ndarray
    iterations: int
    update_history: list
    residual_history: list
    omega_final: float
    projection_count: int
    config: SolverConfig

    @property
    def rho(self) -> np.ndarray:
        return np.asarray(gc.rho_of_sigma(np.clip(self.sigma, 0.0,
                                                  gc.SIGMA_CR)))

    @property
    def q(self) -> np.ndarray:
        rho = self.rho
        return np.sqrt(1.0 - rho * rho)

    @property
    def W_minus(self) -> np.ndarray:
        return self.theta - np.asarray(gc.k_of_q(self.q))

    @property
    def W_plus(self) -> np.ndarray:
        return self.theta + np.asarray(gc.k_of_q(self.q))

    @property
    def nu(self) -> np.ndarray:
        return np.asarray(gc.nu_of_rho(self.rho))


def clipped_speed(rho):
    """qt(rho) = (1 - rho_+^2)_+^(1/2)."""
    rp = np.clip(np.asarray(rho, dtype=float), 0.0, None)
    return np.sqrt(np.clip(1.0 - rp * rp, 0.0, None))


def mass_flux(rho, theta):
    """F = rho qt e(theta) at nodes."""
    q = clipped_speed(rho)
    return np.stack([rho * q * np.cos(theta), rho * q * np.sin(theta)],
                    axis=1)


def circulation_flux(rho, theta):
    """G = qt e(theta - pi/2) at nodes."""
    q = clipped_speed(rho)
    return np.stack([q * np.sin(theta), -q * np.cos(theta)], axis=1)


class PicardSolver:
    """Two Poisson solves per step against one prefactored Laplacian."""

    def __init__(self, mesh: Mesh, config: SolverConfig):
        self.mesh = mesh
        self.config = config
        self.dirichlet = mesh.boundary_nodes(FARFIELD)
        self.free = np.setdiff1d(np.arange(mesh.n_vertices), self.dirichlet)
        K = mesh.stiffness_matrix()
        self.K = K
        self.K_fd = K[self.free][:, self.dirichlet].tocsc()
        self.lu = spla.splu(K[self.free][:, self.free].tocsc())
        mask = mesh.boundary_tags == OBSTACLE
        self.obs_edges = mesh.boundary_edges[mask]
        self.obs_normals = mesh.edge_normals_in[mask]
        self.obs_lengths = mesh.edge_lengths[mask]
        # consistent P1 mass for manufactured sources
        tris = mesh.triangles
        a = mesh.areas
        rows, cols, vals = [], [], []
        for i in range(3):
            for j in range(3):
                rows.append(tris[:, i])
                cols.append(tris[:, j])
                vals.append(a / 12.0 * (2.0 if i == j else 1.0))
        self.mass = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.n_vertices,) * 2).tocsr()

    def _edge_midvals(self, nodal):
        e = self.obs_edges
        return 0.5 * (np.asarray(nodal)[e[:, 0]] + np.asarray(nodal)[e[:, 1]])

    def _scatter_edges(self, b, per_edge):
        half = 0.5 * per_edge * self.obs_lengths
        np.add.at(b, self.obs_edges[:, 0], half)
        np.add.at(b, self.obs_edges[:, 1], half)

    def rhs(self, sigma, theta, eps, source_sigma=None, source_theta=None):
        """Load vectors of both Poisson problems for the current iterate."""
        rho = np.asarray(gc.rho_of_sigma(np.clip(sigma, 0.0, gc.SIGMA_CR)))
        F = mass_flux(rho, theta)
        G = circulation_flux(rho, theta)
        b_sig = self.mesh.divergence_rhs(F)
        b_the = self.mesh.divergence_rhs(G)
        if len(self.obs_edges):
            Fm = 0.5 * (F[self.obs_edges[:, 0]] + F[self.obs_edges[:, 1]])
            Gm = 0.5 * (G[self.obs_edges[:, 0]] + G[self.obs_edges[:, 1]])
            Fn = np.sum(Fm * self.obs_normals, axis=1)
            Gn = np.sum(Gm * self.obs_normals, axis=1)
            sink = np.abs(Fn) - Fn  # inflow defect, vanishes where F.n >= 0
            tmp = np.zeros_like(b_sig)
            self._scatter_edges(tmp, -sink)
            b_sig += tmp
            tmp = np.zeros_like(b_the)
            self._scatter_edges(tmp, Gn)
            b_the += tmp
        b_sig /= eps
        b_the /= eps
        if source_sigma is not None:
            b_sig -= self.mass @ np.asarray(source_sigma)
        if source_theta is not None:
            b_the -= self.mass @ np.asarray(source_theta)
        return b_sig, b_the

    def _solve_pair(self, b_sig, b_the, sigma_d, theta_d):
        out = []
        for b, bdry in ((b_sig, sigma_d), (b_the, theta_d)):
            rhs_f = b[self.free] - self.K_fd @ bdry
            out.append(self.lu.solve(rhs_f))
        return out

    def residual_norms(self, sigma, theta, eps, source_sigma=None,
                       source_theta=None):
        """Nonlinear weak residuals of the current fields (free nodes)."""
        b_sig, b_the = self.rhs(sigma, theta, eps, source_sigma, source_theta)
        r1 = (self.K @ sigma - b_sig)[self.free]
        r2 = (self.K @ theta - b_the)[self.free]
        s1 = max(float(np.linalg.norm(b_sig[self.free])), 1.0)
        s2 = max(float(np.linalg.norm(b_the[self.free])), 1.0)
        return (float(np.linalg.norm(r1)) / s1,
                float(np.linalg.norm(r2)) / s2)

    def picard_step(self, sigma, theta, eps, omega,
                    source_sigma=None, source_theta=None):
        """One damped update; returns (sigma, theta, omega_used, projections)."""
        cfg = self.config
        b_sig, b_the = self.rhs(sigma, theta, eps, source_sigma, source_theta)
        sig_f, the_f = self._solve_pair(
            b_sig, b_the, np.full(len(self.dirichlet), cfg.sigma_inf),
            np.zeros(len(self.dirichlet)))
        sig_new = sigma.copy()
        the_new = theta.copy()
        sig_new[self.dirichlet] = cfg.sigma_inf
        the_new[self.dirichlet] = 0.0
        projections = 0
        w = omega
        sigma_hi = gc.sigma_of_rho(RHO_GUARD)
        for _ in range(6):
            cand_s = sigma.copy()
            cand_s[self.free] = (1 - w) * sigma[self.free] + w * sig_f
            cand_s[self.dirichlet] = cfg.sigma_inf
            if np.all((cand_s >= -1e-12) & (cand_s <= sigma_hi)):
                break
            w *= 0.5  # step leaves the invertible range: reject and damp
        else:
            projections = int(np.sum((cand_s < 0) | (cand_s > sigma_hi)))
            cand_s = np.clip(cand_s, 0.0, sigma_hi)
        cand_t = theta.copy()
        cand_t[self.free] = (1 - w) * theta[self.free] + w * the_f
        cand_t[self.dirichlet] = 0.0
        return cand_s, cand_t, w, projections

    def solve_epsilon(self, eps: float, warm_start=None,
                      source_sigma=None, source_theta=None) -> Solution:
        """Iterate to the fixed point at one viscosity.

        The damped map loses contractivity as eps shrinks; attempts with
        growing residual envelope are aborted, the state reset to the
        warm start, and the damping halved (the spec's reject-and-halve
        rule, applied at attempt granularity so one oversized step cannot
        destroy a good warm start).  The successful damping is kept as
        the starting hint for the next viscosity.
        """
        cfg = self.config
        n = self.mesh.n_vertices
        if warm_start is None:
            start_s = np.full(n, cfg.sigma_inf)
            start_t = np.zeros(n)
        else:
            start_s = warm_start[0].copy()
            start_t = warm_start[1].copy()
        start_s[self.dirichlet] = cfg.sigma_inf
        start_t[self.dirichlet] = 0.0
        sig_scale = max(abs(cfg.sigma_inf), 0.1)
        th_scale = max(cfg.k_inf, 0.1)
        omega = getattr(self, "_omega_hint", cfg.omega) \
            if cfg.adapt_omega else cfg.omega
        omega_min = cfg.omega / 1024.0
        all_updates, all_residuals = [], []
        total_iters = 0
        while True:
            sigma, theta = start_s.copy(), start_t.copy()
            updates, residuals = [], []
            projections = 0
            aborted = False
            while total_iters < cfg.max_iters:
                total_iters += 1
                new_s, new_t, w_used, proj = self.picard_step(
                    sigma, theta, eps, omega, source_sigma, source_theta)
                projections += proj
                upd = max(np.abs(new_s - sigma).max() / sig_scale,
                          np.abs(new_t - theta).max() / th_scale)
                upd /= max(w_used, 1e-12)  # full-step equivalent
                sigma, theta = new_s, new_t
                res = self.residual_norms(sigma, theta, eps, source_sigma,
                                          source_theta)
                updates.append(float(upd))
                residuals.append(max(res))
                if upd < cfg.picard_tol and max(res) < cfg.residual_tol:
                    self._omega_hint = omega
                    all_updates += updates
                    all_residuals += residuals
                    return Solution(eps, sigma, theta, total_iters,
                                    all_updates, all_residuals, w_used,
                                    projections, cfg)
                if cfg.adapt_omega and len(residuals) >= 30 \
                        and len(residuals) % 10 == 0:
                    envelope = min(residuals[-10:])
                    if not np.isfinite(envelope) \
                            or envelope > 2.0 * min(residuals):
                        aborted = True  # diverging: reject the attempt
                        break
            all_updates += updates
            all_residuals += residuals
            if not aborted or total_iters >= cfg.max_iters \
                    or omega <= omega_min:
                raise ConvergenceError(
                    f"no fixed point after {total_iters} iterations at "
                    f"eps={eps} (last update {all_updates[-1]:.3e}, "
                    f"residual {all_residuals[-1]:.3e}, omega {omega:.2e})",
                    {"updates": all_updates, "residuals": all_residuals})
            omega = max(omega * 0.5, omega_min)


def solve_epsilon(config: SolverConfig, mesh: Mesh, eps: float,
                  warm_start=None) -> Solution:
    return PicardSolver(mesh, config).solve_epsilon(eps, warm_start)


def sweep(config: SolverConfig, mesh: Mesh) -> list:
    """Decreasing-viscosity sweep with warm starts."""
    solver = PicardSolver(mesh, config)
    solutions = []
    warm = None
    for eps in config.epsilons:
        sol = solver.solve_epsilon(eps, warm_start=warm)
        solutions.append(sol)
        warm = (sol.sigma, sol.theta)
    return solutions
