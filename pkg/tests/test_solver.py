"""Picard solver: fixed points, manufactured convergence, invariant regions."""

import math

import numpy as np
import pytest

import cavlab.gaschart as gc
from cavlab import meshing as mh
from cavlab import solver as sv


def test_config_validation():
    with pytest.raises(ValueError):
        sv.SolverConfig(q_inf=0.5)  # subsonic far field rejected
    with pytest.raises(ValueError):
        sv.SolverConfig(q_inf=1.1)
    with pytest.raises(ValueError):
        sv.SolverConfig(epsilons=(0.1, 0.2))  # must decrease
    with pytest.raises(ValueError):
        sv.SolverConfig(omega=1.5)


def test_constant_flow_exact_fixed_point():
    mesh = mh.build_mesh(mh.DomainSpec(bump_height=0.0, h_mesh=0.1))
    cfg = sv.SolverConfig(epsilons=(0.2,), max_iters=5)
    sol = sv.solve_epsilon(cfg, mesh, 0.2)
    assert sol.iterations == 1
    assert sol.update_history[0] < 1e-14
    assert np.abs(sol.sigma - cfg.sigma_inf).max() < 1e-13
    assert np.abs(sol.theta).max() < 1e-13


def _manufactured_fields(cfg):
    """Far-field constants plus interior bumps with analytic derivatives."""
    s0 = cfg.sigma_inf
    a_s, a_t = 0.05, 0.08

    def shape(x, y):
        # sin^2 vanishes with its gradient on the rectangle boundary
        sx = np.sin(np.pi * (x + 2.0) / 4.0) ** 2
        sy = np.sin(np.pi * y) ** 2
        return sx * sy

    def d_shape(x, y):
        sx = np.sin(np.pi * (x + 2.0) / 4.0) ** 2
        sy = np.sin(np.pi * y) ** 2
        dsx = 2 * np.sin(np.pi * (x + 2) / 4) * np.cos(
            np.pi * (x + 2) / 4) * np.pi / 4
        dsy = 2 * np.sin(np.pi * y) * np.cos(np.pi * y) * np.pi
        return dsx * sy, sx * dsy

    def lap_shape(x, y):
        sx = np.sin(np.pi * (x + 2.0) / 4.0) ** 2
        sy = np.sin(np.pi * y) ** 2
        d2sx = (np.pi / 4) ** 2 * 2 * np.cos(np.pi * (x + 2) / 2)
        d2sy = np.pi ** 2 * 2 * np.cos(2 * np.pi * y)
        return d2sx * sy + sx * d2sy

    sigma_ex = lambda x, y: s0 + a_s * shape(x, y)
    theta_ex = lambda x, y: a_t * shape(x, y)
    return sigma_ex, theta_ex, a_s, a_t, shape, d_shape, lap_shape


def _manufactured_sources(mesh, cfg, eps):
    """Move the residual of the exact fields into volume sources."""
    sigma_ex, theta_ex, a_s, a_t, shape, d_shape, lap_shape = \
        _manufactured_fields(cfg)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    dshx, dshy = d_shape(x, y)
    sig = sigma_ex(x, y)
    th = theta_ex(x, y)
    sig_x, sig_y = a_s * dshx, a_s * dshy
    th_x, th_y = a_t * dshx, a_t * dshy
    lap_sig = a_s * lap_shape(x, y)
    lap_th = a_t * lap_shape(x, y)
    rho = np.asarray(gc.rho_of_sigma(sig))
    q = np.sqrt(1 - rho * rho)
    # div(rho q e(theta)) with d(rho q)/d sigma = (1 - rho^2)/q
    drhoq = (1 - rho * rho) / q
    divF = drhoq * (sig_x * np.cos(th) + sig_y * np.sin(th)) \
        + rho * q * (th_y * np.cos(th) - th_x * np.sin(th))
    # div(q e(theta - pi/2)) with dq/dsigma = -rho(1-rho^2)/(q(1-2rho^2))
    dq = -rho * (1 - rho * rho) / (q * (1 - 2 * rho * rho))
    divG = dq * (sig_x * np.sin(th) - sig_y * np.cos(th)) \
        + q * (th_x * np.cos(th) + th_y * np.sin(th))
    s_sigma = lap_sig - divF / eps
    s_theta = lap_th - divG / eps
    return (sigma_ex(x, y), theta_ex(x, y)), (s_sigma, s_theta)


@pytest.mark.parametrize("eps", [0.1])
def test_manufactured_convergence_order(eps):
    cfg = sv.SolverConfig(epsilons=(eps,), picard_tol=1e-11,
                          residual_tol=1e-10)
    errors = []
    for h in (1 / 16, 1 / 32):
        mesh = mh.build_mesh(mh.DomainSpec(bump_height=0.0, h_mesh=h))
        exact, sources = _manufactured_sources(mesh, cfg, eps)
        solver = sv.PicardSolver(mesh, cfg)
        sol = solver.solve_epsilon(eps, source_sigma=sources[0],
                                   source_theta=sources[1])
        err = math.sqrt(mesh.l2_norm(sol.sigma - exact[0]) ** 2
                        + mesh.l2_norm(sol.theta - exact[1]) ** 2)
        errors.append(err)
    order = math.log2(errors[0] / errors[1])
    assert order >= 1.8, (errors, order)


@pytest.fixture(scope="module")
def obstacle_solution():
    mesh = mh.build_mesh(mh.DomainSpec())
    cfg = sv.SolverConfig(epsilons=(0.2,))
    sol = sv.solve_epsilon(cfg, mesh, 0.2)
    return mesh, cfg, sol


def test_obstacle_convergence(obstacle_solution):
    mesh, cfg, sol = obstacle_solution
    assert sol.residual_history[-1] < cfg.residual_tol
    # monotone residual tail
    tail = sol.residual_history[-10:]
    assert all(b <= a * 1.001 for a, b in zip(tail, tail[1:]))


def test_invariant_region(obstacle_solution):
    mesh, cfg, sol = obstacle_solution
    assert sol.q.min() >= cfg.q_inf - cfg.tol_inv
    assert np.abs(sol.theta).max() <= cfg.k_inf + cfg.tol_inv
    assert sol.rho.min() > 0.0
    assert sol.projection_count == 0


def test_riemann_extreme_principle(obstacle_solution):
    mesh, cfg, sol = obstacle_solution
    # boundary values of the invariants are +/- k(q_inf)
    assert sol.W_plus.max() <= cfg.k_inf + cfg.tol_inv
    assert sol.W_minus.min() >= -cfg.k_inf - cfg.tol_inv


def test_clipped_speed_consistency(obstacle_solution):
    # at convergence the clipped speed equals the Bernoulli speed
    mesh, cfg, sol = obstacle_solution
    assert np.allclose(sv.clipped_speed(sol.rho), sol.q, atol=1e-14)


def test_solution_determinism():
    mesh = mh.build_mesh(mh.DomainSpec(h_mesh=1 / 16))
    cfg = sv.SolverConfig(epsilons=(0.2,))
    a = sv.solve_epsilon(cfg, mesh, 0.2)
    b = sv.solve_epsilon(cfg, mesh, 0.2)
    assert np.array_equal(a.sigma, b.sigma)
    assert np.array_equal(a.theta, b.theta)


def test_nonconvergence_reports_history():
    mesh = mh.build_mesh(mh.DomainSpec(h_mesh=1 / 16))
    cfg = sv.SolverConfig(epsilons=(0.05,), max_iters=3, adapt_omega=False)
    with pytest.raises(sv.ConvergenceError) as exc:
        sv.solve_epsilon(cfg, mesh, 0.05)
    assert "updates" in exc.value.history
    assert len(exc.value.history["updates"]) == 3
