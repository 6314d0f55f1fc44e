import math

import numpy as np
import pytest

from strataflow.errors import InvalidField, NoConvergence, StagnationGuard
from strataflow.heightpde import (Grid, HeightField, dp_full,
                                  frozen_residual, jacobian, laminar_field,
                                  load_snapshot, mean_top, newton_solve,
                                  residual, residual_flat, save_snapshot)
from strataflow.sturm import find_lambda_star


@pytest.fixture(scope="module")
def grid():
    return Grid(24, 20, -1.0)


def field_from(grid, values, Q):
    h = np.array(values, dtype=float)
    h[0] = 0.0
    return HeightField(grid, h, Q)


def test_grid_spacings():
    g = Grid(33, 17, -2.0)
    assert g.hq == pytest.approx(math.pi / 32)
    assert g.hp == pytest.approx(2.0 / 16)
    with pytest.raises(InvalidField):
        Grid(8, 64, -1.0)


def test_mean_top_constant(grid):
    h = np.ones((grid.Np, grid.Nq))
    h[0] = 0.0
    f = HeightField(grid, h, 1.0)
    assert mean_top(f) == pytest.approx(1.0, abs=1e-14)


def test_mean_top_cosine_modes(grid):
    q = grid.q
    h = np.zeros((grid.Np, grid.Nq))
    h[-1] = np.cos(q)
    assert mean_top(field_from(grid, h, 0.0)) == pytest.approx(0.0, abs=1e-14)
    h[-1] = 1.0 + np.cos(q) + 0.3 * np.cos(2 * q)
    assert mean_top(field_from(grid, h, 0.0)) == pytest.approx(1.0, abs=1e-12)


def test_residual_exact_on_constant_density_laminar(const_g1):
    g = Grid(32, 32, -1.0)
    for lam in (1.0, 4.0):
        f = laminar_field(const_g1, lam, g)
        R1, R2 = residual(const_g1, f)
        assert np.max(np.abs(R1)) <= 1e-10
        assert np.max(np.abs(R2)) <= 1e-10
        # translation consistency: laminar residual independent of q
        assert np.max(np.abs(R1 - R1[:, :1])) <= 1e-13


def test_residual_second_order_on_stratified_laminar(strat_lin02):
    norms = {}
    for n in (32, 64):
        f = laminar_field(strat_lin02, 5.0, Grid(n, n, -1.0))
        R1, R2 = residual(strat_lin02, f)
        norms[n] = max(np.max(np.abs(R1)), np.max(np.abs(R2)))
    assert norms[32] / norms[64] == pytest.approx(4.0, abs=0.3)


def _manufactured(bundle, grid, lam, eps):
    """h = H + eps (p - p0) cos q with its exact interior forcing."""
    root = math.sqrt(lam)
    P, Qm = np.meshgrid(grid.p, grid.q, indexing="ij")
    h = (P + 1.0) / root + eps * (P + 1.0) * np.cos(Qm)
    h_q = -eps * (P + 1.0) * np.sin(Qm)
    h_p = 1.0 / root + eps * np.cos(Qm)
    h_pq = -eps * np.sin(Qm)
    h_qq = -eps * (P + 1.0) * np.cos(Qm)
    forcing = h_qq * h_p ** 2 - 2.0 * h_q * h_p * h_pq  # h_pp = 0, rho' = beta = 0
    h[0] = 0.0
    return HeightField(grid, h, lam + 2.0 / root), forcing


def test_manufactured_solution_convergence(const_g1):
    lam = 1.0
    norms = {}
    for n in (32, 64):
        grid = Grid(n, n, -1.0)
        f, forcing = _manufactured(const_g1, grid, lam, 0.01)
        R1, _ = residual(const_g1, f)
        norms[n] = np.max(np.abs(R1 - forcing[1:-1]))
    assert norms[32] / norms[64] == pytest.approx(4.0, abs=0.5)


def test_frozen_residual_identities(strat_lin02, grid):
    f = laminar_field(strat_lin02, 5.0, grid)
    h = f.h.copy()
    P, Qm = np.meshgrid(grid.p, grid.q, indexing="ij")
    h += 0.01 * (P + 1.0) * np.cos(Qm)
    h[0] = 0.0
    f = HeightField(grid, h, f.Q)

    d = mean_top(f)
    R1a, R2a = residual(strat_lin02, f)
    R1b, R2b = frozen_residual(strat_lin02, f, d)
    assert np.array_equal(R1a, R1b) and np.array_equal(R2a, R2b)

    # dR1/dsigma = +g rho_p h_p^3, and R2 does not depend on sigma
    eps = 1e-6
    R1p, R2p = frozen_residual(strat_lin02, f, d + eps)
    R1m, R2m = frozen_residual(strat_lin02, f, d - eps)
    assert np.array_equal(R2p, R2m)
    h_p = dp_full(f.h, grid.hp)
    _, rho_p = strat_lin02.eval_density(grid.p)
    expect = strat_lin02.params.g * np.asarray(rho_p)[1:-1, None] * h_p[1:-1] ** 3
    assert np.max(np.abs((R1p - R1m) / (2 * eps) - expect)) <= 1e-6


def test_stagnation_guard(const_g1, grid):
    f = laminar_field(const_g1, 1.0, grid)
    h = f.h.copy()
    h[5] = h[7]  # locally non-monotone in p
    h[6] = h[7] + 0.1
    with pytest.raises(StagnationGuard):
        residual(const_g1, HeightField(grid, h, f.Q))


def _wave_field(bundle, bifpoint, grid, s0=0.05):
    from strataflow.continuation import initial_tangent

    field, _, _ = initial_tangent(bifpoint, s0, grid)
    return field


@pytest.fixture(scope="module")
def const_bif(const_g1):
    return find_lambda_star(const_g1, Np=256)


def test_jacobian_matches_directional_fd(strat_lin02, const_g1, const_bif):
    rng = np.random.default_rng(7)
    grid = Grid(20, 20, -1.0)
    cases = [
        (strat_lin02, laminar_field(strat_lin02, 5.0, grid)),
        (const_g1, _wave_field(const_g1, const_bif, grid)),
    ]
    for bundle, f in cases:
        J = jacobian(bundle, f)
        x0 = f.interior_flat()
        for _ in range(5):
            delta = rng.standard_normal(x0.size)
            eps = 1e-6
            fp = residual_flat(bundle, f.with_interior(x0 + eps * delta))
            fm = residual_flat(bundle, f.with_interior(x0 - eps * delta))
            fd = (fp - fm) / (2 * eps)
            mv = J.matvec(delta)
            scale = max(1.0, float(np.max(np.abs(fd))))
            assert np.max(np.abs(mv - fd)) / scale <= 1e-6


def test_jacobian_dQ_column(const_g1, const_bif):
    grid = Grid(20, 20, -1.0)
    f = _wave_field(const_g1, const_bif, grid)
    J = jacobian(const_g1, f)
    eps = 1e-6
    fp = residual_flat(const_g1, HeightField(grid, f.h, f.Q + eps))
    fm = residual_flat(const_g1, HeightField(grid, f.h, f.Q - eps))
    assert np.max(np.abs((fp - fm) / (2 * eps) - J.dQ)) <= 1e-7


def test_rank_one_vanishes_for_constant_density(const_g1, grid):
    f = laminar_field(const_g1, 1.0, grid)
    J = jacobian(const_g1, f)
    assert np.max(np.abs(J.u_vec)) == 0.0


def test_kernel_direction_nearly_null(const_g1):
    """J phi* = O(grid^2) at the bifurcation point (one-dimensional kernel)."""
    from strataflow.continuation import eigen_mode

    bif = find_lambda_star(const_g1, Np=512)
    norms = {}
    for n in (24, 48):
        grid = Grid(n, n, -1.0)
        base = laminar_field(const_g1, bif.laminar, grid)
        phi = eigen_mode(bif, grid)
        J = jacobian(const_g1, base)
        norms[n] = np.max(np.abs(J.matvec(phi[1:].ravel())))
    assert norms[24] / norms[48] == pytest.approx(4.0, abs=0.9)
    assert norms[48] <= 5e-3


def test_sherman_morrison_vs_dense(strat_lin02):
    grid = Grid(24, 24, -1.0)
    f = laminar_field(strat_lin02, 5.0, grid)
    h = f.h.copy()
    P, Qm = np.meshgrid(grid.p, grid.q, indexing="ij")
    h += 0.02 * (P + 1.0) * np.cos(Qm)
    h[0] = 0.0
    f = HeightField(grid, h, f.Q)
    J = jacobian(strat_lin02, f)
    assert np.max(np.abs(J.u_vec)) > 0.0  # rank-one part genuinely active
    rng = np.random.default_rng(3)
    rhs = rng.standard_normal(grid.n_unknowns)
    x_sm = J.solve_columns(rhs[:, None])[:, 0]
    x_dense = np.linalg.solve(J.to_dense(), rhs)
    assert np.max(np.abs(x_sm - x_dense)) <= 1e-10


def test_second_order_block_symmetry(const_g1):
    """The pure second-order part is self-adjoint in the weighted product."""
    grid = Grid(18, 18, -1.0)
    f = laminar_field(const_g1, 1.0, grid)
    J = jacobian(const_g1, f)
    A = J.to_dense(with_rank_one=False)
    n_int = (grid.Np - 2) * grid.Nq
    A_int = A[:n_int, :n_int]
    wq = np.full(grid.Nq, 2.0)
    wq[0] = wq[-1] = 1.0
    W = np.tile(wq, grid.Np - 2)
    M = W[:, None] * A_int
    assert np.max(np.abs(M - M.T)) <= 1e-12 * np.max(np.abs(M))


def test_newton_returns_to_laminar(const_g1):
    grid = Grid(24, 24, -1.0)
    base = laminar_field(const_g1, 2.0, grid)
    rng = np.random.default_rng(11)
    h = base.h.copy()
    h[1:] += 1e-8 * rng.standard_normal(h[1:].shape)
    res = newton_solve(const_g1, HeightField(grid, h, base.Q))
    assert np.max(np.abs(res.field.h - base.h)) <= 1e-9


def test_newton_immediate_return_at_exact_root(const_g1):
    grid = Grid(24, 24, -1.0)
    base = laminar_field(const_g1, 2.0, grid)
    res = newton_solve(const_g1, base)
    assert res.iterations == 0


def test_newton_bordered_reaches_nontrivial_wave(const_g1, const_bif):
    grid = Grid(32, 32, -1.0)
    f = _wave_field(const_g1, const_bif, grid, s0=0.05)
    hq = np.abs(np.diff(f.h, axis=1))
    assert np.max(hq) > 1e-3
    assert np.max(np.abs(residual_flat(const_g1, f))) <= 1e-10 * max(
        1.0, abs(f.Q), float(np.max(np.abs(f.h))))


def test_newton_no_convergence_budget(const_g1, const_bif):
    grid = Grid(20, 20, -1.0)
    base = laminar_field(const_g1, const_bif.laminar, grid)
    h = base.h.copy()
    P, Qm = np.meshgrid(grid.p, grid.q, indexing="ij")
    h += 0.4 * (P + 1.0) * np.cos(Qm)
    h[0] = 0.0
    with pytest.raises(NoConvergence):
        newton_solve(const_g1, HeightField(grid, h, base.Q), max_iter=1)


def test_snapshot_roundtrip(tmp_path, const_g1, const_bif):
    grid = Grid(20, 20, -1.0)
    f = _wave_field(const_g1, const_bif, grid)
    path = tmp_path / "snap.csv"
    save_snapshot(f, path)
    g = load_snapshot(path)
    assert np.array_equal(g.h, f.h)
    assert g.Q == f.Q
    assert g.grid == f.grid


def test_snapshot_invalid_bottom_row(tmp_path, const_g1):
    grid = Grid(20, 20, -1.0)
    f = laminar_field(const_g1, 1.0, grid)
    path = tmp_path / "snap.csv"
    save_snapshot(f, path)
    text = path.read_text().splitlines()
    parts = text[1].split(",")
    parts[2] = "0.5"
    text[1] = ",".join(parts)
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(InvalidField):
        load_snapshot(path)
