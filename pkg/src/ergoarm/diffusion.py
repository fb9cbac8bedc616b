"""Explicit integration of the source-driven diffusion-decay equation.

The potential field obeys  du/dt = alpha * lap(u) - u + s  on the grid,
with zero-flux (mirrored ghost cell) boundaries.  ``diffuse`` advances it a
fixed number of explicit steps; ``stationary_solve`` iterates the same step
to the fixed point  alpha * lap(u) = u - s.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import ScalarField, check_same_domain


class ConvergenceError(RuntimeError):
    """Stationary iteration hit its cap with the defect above tolerance."""


@dataclass(frozen=True)
class DiffusionParams:
    """Per-axis diffusion rates and integration controls."""

    alpha: tuple
    n_steps: int = 1
    stationary_tol: float = 1e-8
    max_stationary_iters: int = 100000

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if any(a <= 0 for a in alpha):
            raise ValueError(f"diffusion rates must be positive, got {alpha}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @classmethod
    def isotropic(cls, alpha, dims, **kw):
        return cls(alpha=(float(alpha),) * dims, **kw)


def cfl_timestep(params, domain):
    """Largest stable explicit timestep for the full update.

    Minimum of three bounds:
      * 1 / sum_i(alpha_i / dx_i)                -- first-order rate bound
      * min_i dx_i^2 / (2 * dims * max_i alpha)  -- classical explicit-diffusion bound
      * 1 / (1 + sum_i 2 alpha_i / dx_i^2)       -- update-monotonicity bound

    The third term makes every coefficient of the explicit update (including
    the -u decay term) non-negative, so max|u| can never exceed
    max(max|u0|, max|s|); the first two alone admit a slowly growing
    grid-scale oscillation once the decay term is present.
    """
    alpha = np.asarray(params.alpha)
    dx = np.asarray(domain.spacing)
    if alpha.size != dx.size:
        raise ValueError(f"{alpha.size} diffusion rates for a {dx.size}-D domain")
    rate_bound = 1.0 / np.sum(alpha / dx)
    classical = np.min(dx**2) / (2.0 * domain.dims * np.max(alpha))
    monotone = 1.0 / (1.0 + 2.0 * np.sum(alpha / dx**2))
    return float(min(rate_bound, classical, monotone))


def _weighted_laplacian(values, domain, alpha, out=None):
    """sum_i alpha_i * d2u/dx_i^2 with mirrored ghost cells, accumulated
    in-place to keep the hot loop free of large temporaries."""
    p = np.pad(values, 1, mode="edge")
    inner = tuple(slice(1, -1) for _ in range(domain.dims))
    if out is None:
        out = np.zeros_like(values)
    else:
        out.fill(0.0)
    diag = 0.0
    for a in range(domain.dims):
        up = list(inner)
        dn = list(inner)
        up[a] = slice(2, None)
        dn[a] = slice(None, -2)
        c = alpha[a] / domain.spacing[a] ** 2
        out += c * p[tuple(up)]
        out += c * p[tuple(dn)]
        diag += 2.0 * c
    out -= diag * values
    return out


def laplacian(u):
    """Central 5-point (2-D) / 7-point (3-D) Laplacian with zero-flux boundaries."""
    ones = (1.0,) * u.domain.dims
    return ScalarField(u.domain, _weighted_laplacian(u.values, u.domain, ones))


def _step_values(u_vals, s_vals, domain, alpha, dt, scratch=None):
    rate = _weighted_laplacian(u_vals, domain, alpha, out=scratch)
    rate -= u_vals
    rate += s_vals
    rate *= dt
    rate += u_vals
    return rate


def diffuse_step(u, s, params, dt):
    """One explicit step  u' = u + dt * (alpha*lap(u) - u + s)."""
    check_same_domain(u, s)
    limit = cfl_timestep(params, u.domain)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stable bound {limit}")
    return ScalarField(u.domain, _step_values(u.values, s.values, u.domain, params.alpha, dt))


def diffuse(u, s, params):
    """Advance the field n_steps explicit steps at the maximum stable dt."""
    check_same_domain(u, s)
    dt = cfl_timestep(params, u.domain)
    vals = u.values
    for _ in range(params.n_steps):
        vals = _step_values(vals, s.values, u.domain, params.alpha, dt)
    return ScalarField(u.domain, vals)


def stationary_solve(s, params, domain=None, u0=None):
    """Fixed point of the diffusion-decay equation, by explicit iteration.

    Iterates the explicit step until the max-norm defect
    |alpha*lap(u) - u + s| drops below ``stationary_tol`` (equivalently,
    until the per-step change falls below tol * dt).  ``u0`` warm-starts the
    iteration; default is the zero field.
    """
    if domain is None:
        domain = s.domain
    if s.domain != domain:
        raise ValueError("source field is not on the requested domain")
    dt = cfl_timestep(params, domain)
    vals = np.zeros(domain.shape) if u0 is None else np.array(u0.values, dtype=float)
    for _ in range(params.max_stationary_iters):
        rate = _weighted_laplacian(vals, domain, params.alpha) - vals + s.values
        defect = float(np.max(np.abs(rate)))
        if defect < params.stationary_tol:
            return ScalarField(domain, vals)
        vals = vals + dt * rate
    raise ConvergenceError(
        f"stationary iteration did not converge in {params.max_stationary_iters} steps "
        f"(defect {defect:.3e} > tol {params.stationary_tol:.3e})"
    )


class DirectStationarySolver:
    """Prefactorized sparse solve of  (I - alpha*lap) u = s.

    Assembles the same zero-flux stencil as the explicit step and LU-factors
    it once, so repeated stationary solves in a control loop cost one
    triangular solve each.  Matches ``stationary_solve`` to its tolerance.
    """

    def __init__(self, domain, params):
        self.domain = domain
        n = domain.n_cells
        eye = sp.identity
        lap_ops = []
        for a in range(domain.dims):
            m = domain.shape[a]
            main = -2.0 * np.ones(m)
            main[0] = -1.0   # mirrored ghost: boundary row sums to zero flux
            main[-1] = -1.0
            d1 = sp.diags([np.ones(m - 1), main, np.ones(m - 1)], offsets=(-1, 0, 1))
            d1 = d1 * (params.alpha[a] / domain.spacing[a] ** 2)
            ops = [d1 if b == a else eye(domain.shape[b]) for b in range(domain.dims)]
            full = ops[0]
            for op in ops[1:]:
                full = sp.kron(full, op)
            lap_ops.append(full)
        system = sp.identity(n) - sum(lap_ops)
        self._lu = spla.splu(system.tocsc())

    def solve(self, s):
        if s.domain != self.domain:
            raise ValueError("source field is not on the solver's domain")
        u = self._lu.solve(s.values.reshape(-1))
        return ScalarField(self.domain, u.reshape(self.domain.shape))
