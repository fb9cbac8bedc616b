import numpy as np
import pytest

from ergoarm import (
    CoverageAccumulator,
    FourierBasis,
    GridDomain,
    SmcState,
    ergodicity,
    integrate_reflect,
    normalized_coverage,
    smc_step,
    target_coeffs,
    target_gaussian_mixture,
    target_uniform,
)


@pytest.fixture
def unit_domain():
    return GridDomain((75, 75), (1.0 / 75, 1.0 / 75), (0.5 / 75, 0.5 / 75))


def test_basis_orthonormal(unit_domain):
    basis = FourierBasis.for_domain(unit_domain, 5)
    xs, ys = unit_domain.cell_centers()
    pts = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)
    vals = np.array([basis.evaluate(p) for p in pts])  # (n_cells, n_terms)
    gram = vals.T @ vals * unit_domain.cell_volume
    assert np.max(np.abs(gram - np.eye(basis.n_terms))) < 1e-6


def test_sobolev_weights_decreasing(unit_domain):
    basis = FourierBasis.for_domain(unit_domain, 6)
    lam = basis.sobolev_weights()
    ks = basis.indices
    norms = np.sum(ks**2, axis=1)
    order = np.argsort(norms)
    assert np.all(lam > 0)
    assert np.all(np.diff(lam[order]) <= 1e-15)


def test_uniform_target_coeffs(unit_domain):
    p = target_uniform(unit_domain)
    basis = FourierBasis.for_domain(unit_domain, 6)
    coeffs = target_coeffs(p, basis)
    assert coeffs[0] == pytest.approx(1.0, abs=1e-9)  # 1/sqrt(|domain|), |domain|=1
    assert np.max(np.abs(coeffs[1:])) < 1e-9


def test_target_coeffs_match_refined_grid():
    coarse = GridDomain((75, 75), (1.0 / 75,) * 2, (0.5 / 75,) * 2)
    fine = GridDomain((300, 300), (1.0 / 300,) * 2, (0.5 / 300,) * 2)
    means, covs = [[0.4, 0.6]], [[[0.01, 0.0], [0.0, 0.02]]]
    pc = target_gaussian_mixture(coarse, means, covs)
    pf = target_gaussian_mixture(fine, means, covs)
    bc = FourierBasis.for_domain(coarse, 8)
    bf = FourierBasis.for_domain(fine, 8)
    assert np.max(np.abs(target_coeffs(pc, bc) - target_coeffs(pf, bf))) < 1e-4


def test_basis_gradient_finite_difference(unit_domain):
    basis = FourierBasis.for_domain(unit_domain, 7)
    rng = np.random.default_rng(0)
    h = 1e-7
    for _ in range(10):
        x = rng.uniform(0.1, 0.9, 2)
        g = basis.gradient(x)
        for a in range(2):
            dx = np.zeros(2)
            dx[a] = h
            fd = (basis.evaluate(x + dx) - basis.evaluate(x - dx)) / (2 * h)
            assert np.max(np.abs(g[:, a] - fd)) < 1e-5


def test_first_step_full_speed(unit_domain):
    p = target_gaussian_mixture(unit_domain, [[0.5, 0.7]], [0.005])
    state = SmcState.for_target(p, 10)
    v, state = smc_step(state, np.array([0.5, 0.7]), dt=0.01, u_max=0.3)
    assert np.linalg.norm(v) == pytest.approx(0.3, rel=1e-9)


def test_zero_mismatch_halts(unit_domain):
    p = target_uniform(unit_domain)
    state = SmcState.for_target(p, 8)
    # fabricate a history that matches the target exactly
    state.traj_coeffs = state.target_coeffs * 5.0
    state.elapsed = 5.0
    x = np.array([0.431, 0.557])
    phi = state.basis.evaluate(x)
    state.traj_coeffs = (state.target_coeffs - phi * 0.01 / 5.01) * 5.01
    # after the internal accumulation the running average equals the target
    v, _ = smc_step(state, x, dt=0.01, u_max=0.3)
    assert np.allclose(v, 0.0)


def test_stationary_agent_coeffs_grow_linearly(unit_domain):
    p = target_uniform(unit_domain)
    state = SmcState.for_target(p, 6)
    x = np.array([0.3, 0.3])
    phi = state.basis.evaluate(x)
    for _ in range(10):
        smc_step(state, x, dt=0.1, u_max=0.1)
    assert np.allclose(state.traj_coeffs, phi * 1.0, atol=1e-12)


def test_reflect_at_bounds(unit_domain):
    x = integrate_reflect(unit_domain, np.array([0.02, 0.5]),
                          np.array([-1.0, 0.0]), 0.05)
    lo = unit_domain.lower
    assert x[0] >= lo[0]
    assert x[0] == pytest.approx(lo[0] + (lo[0] - (0.02 - 0.05)), abs=1e-12)
    inside = integrate_reflect(unit_domain, np.array([0.5, 0.5]),
                               np.array([0.1, -0.2]), 0.1)
    assert np.allclose(inside, [0.51, 0.48])


def test_long_run_reduces_ergodicity(unit_domain):
    # free-point agent on a two-gaussian target, coverage through the same
    # accumulator pipeline as the whole-body controller
    p = target_gaussian_mixture(unit_domain, [[0.3, 0.65], [0.65, 0.3]],
                                [0.004, 0.007])
    state = SmcState.for_target(p, 20)
    cov = CoverageAccumulator(unit_domain, 1.0 / 75)
    x = np.array([0.15, 0.25])
    eps = []
    for _ in range(1000):
        cov.add_positions(x[None, :])
        eps.append(ergodicity(p, normalized_coverage(cov)))
        v, state = smc_step(state, x, dt=0.01, u_max=1.0)
        x = integrate_reflect(unit_domain, x, v, 0.01)
    assert eps[-1] <= 0.7 * eps[9]
