"""Spectral multiscale coverage baseline (single point agent, 2-D).

Cosine basis on the domain rectangle, orthonormal under the stated
normalization.  The agent descends the Sobolev-weighted mismatch between the
running trajectory coefficients and the target coefficients at constant
speed.  Used as the planar comparison baseline, either as a free point or
attached to the arm tip through a damped pseudoinverse.
"""

from dataclasses import dataclass

import numpy as np

SOBOLEV_EXPONENT = -1.5   # (1 + |k|^2) ** exponent, d=2
ZERO_DIRECTION = 1e-12


@dataclass(frozen=True)
class FourierBasis:
    """Separable cosine basis phi_k(x) = prod_i cos(k_i pi (x_i - lo_i) / L_i) / h_k."""

    k_per_axis: int
    lower: tuple
    lengths: tuple

    def __post_init__(self):
        if self.k_per_axis < 1:
            raise ValueError("need at least one basis function per axis")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        if len(self.lower) != 2 or len(self.lengths) != 2:
            raise ValueError("the baseline is 2-D only")

    @classmethod
    def for_domain(cls, domain, k_per_axis):
        if domain.dims != 2:
            raise ValueError("the baseline is 2-D only")
        lo = domain.lower
        hi = domain.upper
        return cls(k_per_axis, tuple(lo), tuple(hi - lo))

    @property
    def indices(self):
        k = self.k_per_axis
        kx, ky = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
        return np.stack([kx.reshape(-1), ky.reshape(-1)], axis=1)

    @property
    def n_terms(self):
        return self.k_per_axis**2

    def _norms(self):
        ks = self.indices
        hx = np.where(ks[:, 0] == 0, self.lengths[0], self.lengths[0] / 2.0)
        hy = np.where(ks[:, 1] == 0, self.lengths[1], self.lengths[1] / 2.0)
        return np.sqrt(hx * hy)

    def sobolev_weights(self):
        ks = self.indices
        return (1.0 + np.sum(ks**2, axis=1)) ** SOBOLEV_EXPONENT

    def evaluate(self, x):
        """All basis values at one point, shape (n_terms,)."""
        ks = self.indices
        ax = np.pi * (x[0] - self.lower[0]) / self.lengths[0]
        ay = np.pi * (x[1] - self.lower[1]) / self.lengths[1]
        return np.cos(ks[:, 0] * ax) * np.cos(ks[:, 1] * ay) / self._norms()

    def gradient(self, x):
        """All basis gradients at one point, shape (n_terms, 2)."""
        ks = self.indices
        ax = np.pi * (x[0] - self.lower[0]) / self.lengths[0]
        ay = np.pi * (x[1] - self.lower[1]) / self.lengths[1]
        cx, sx = np.cos(ks[:, 0] * ax), np.sin(ks[:, 0] * ax)
        cy, sy = np.cos(ks[:, 1] * ay), np.sin(ks[:, 1] * ay)
        h = self._norms()
        gx = -ks[:, 0] * np.pi / self.lengths[0] * sx * cy / h
        gy = -ks[:, 1] * np.pi / self.lengths[1] * cx * sy / h
        return np.stack([gx, gy], axis=1)


def target_coeffs(p, basis):
    """Grid-quadrature projection of the target onto the basis."""
    dom = p.field.domain
    if dom.dims != 2:
        raise ValueError("the baseline is 2-D only")
    xs = dom.origin[0] + np.arange(dom.shape[0]) * dom.spacing[0]
    ys = dom.origin[1] + np.arange(dom.shape[1]) * dom.spacing[1]
    k = np.arange(basis.k_per_axis)
    bx = np.cos(np.outer(k, np.pi * (xs - basis.lower[0]) / basis.lengths[0]))
    by = np.cos(np.outer(k, np.pi * (ys - basis.lower[1]) / basis.lengths[1]))
    coeffs = bx @ p.field.values @ by.T * dom.cell_volume
    return coeffs.reshape(-1) / basis._norms()


@dataclass
class SmcState:
    basis: FourierBasis
    target_coeffs: np.ndarray
    traj_coeffs: np.ndarray = None
    elapsed: float = 0.0

    def __post_init__(self):
        if self.traj_coeffs is None:
            self.traj_coeffs = np.zeros(self.basis.n_terms)
        self.sobolev = self.basis.sobolev_weights()

    @classmethod
    def for_target(cls, p, k_per_axis):
        basis = FourierBasis.for_domain(p.field.domain, k_per_axis)
        return cls(basis, target_coeffs(p, basis))


def smc_step(state, x, dt, u_max):
    """Accumulate the trajectory coefficients at x and return the velocity
    command (constant speed u_max along the descent direction; zero when the
    mismatch gradient vanishes)."""
    x = np.asarray(x, dtype=float)
    state.traj_coeffs = state.traj_coeffs + state.basis.evaluate(x) * dt
    state.elapsed += dt
    mismatch = state.traj_coeffs / state.elapsed - state.target_coeffs
    b = (state.sobolev * mismatch) @ state.basis.gradient(x)
    nb = np.linalg.norm(b)
    if nb < ZERO_DIRECTION:
        return np.zeros(2), state
    return -u_max * b / nb, state


def integrate_reflect(domain, x, v, dt):
    """Advance a free point by v*dt, reflecting at the domain box walls."""
    lo = domain.lower
    hi = domain.upper
    nxt = np.asarray(x, dtype=float) + np.asarray(v, dtype=float) * dt
    for a in range(len(nxt)):
        span = hi[a] - lo[a]
        # fold into [lo, lo + 2 span) then mirror the upper half
        r = np.mod(nxt[a] - lo[a], 2.0 * span)
        nxt[a] = lo[a] + (r if r <= span else 2.0 * span - r)
    return nxt
