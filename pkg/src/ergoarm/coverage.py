"""Target distributions, coverage accumulation and the residual heat source.

The coverage accumulator stores unnormalized footprint deposits; dividing by
the accumulated mass gives the time-and-agent-averaged density that is
compared against the target.  Underexplored regions (positive residual) are
squared to form the virtual heat source.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import GridDomain, ScalarField, check_same_domain


@dataclass
class TargetDistribution:
    """A nonnegative density on a grid, normalized to unit integral."""

    field: ScalarField

    def __post_init__(self):
        vals = self.field.values
        if np.any(vals < 0):
            raise ValueError("target density must be nonnegative")
        total = vals.sum() * self.field.domain.cell_volume
        if total <= 0:
            raise ValueError("target density has zero mass")
        if abs(total - 1.0) > 1e-9:
            self.field = ScalarField(self.field.domain, vals / total)

    @property
    def domain(self):
        return self.field.domain

    def integral(self):
        return self.field.integral()


def target_uniform(domain):
    return TargetDistribution(ScalarField.full(domain, 1.0))


def target_uniform_box(domain, lower, upper):
    """Uniform density on an axis-aligned box, zero elsewhere."""
    centers = domain.cell_centers()
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    inside = np.ones(domain.shape, dtype=bool)
    for a in range(domain.dims):
        inside &= (centers[a] >= lo[a]) & (centers[a] <= hi[a])
    if not inside.any():
        raise ValueError("box does not intersect the domain")
    return TargetDistribution(ScalarField(domain, inside.astype(float)))


def target_gaussian_mixture(domain, means, covs, weights=None):
    """Mixture of Gaussians evaluated at cell centers, then normalized."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    k = means.shape[0]
    if weights is None:
        weights = np.ones(k) / k
    weights = np.asarray(weights, dtype=float)
    centers = np.stack([c.reshape(-1) for c in domain.cell_centers()], axis=1)
    vals = np.zeros(centers.shape[0])
    for m in range(k):
        cov = np.asarray(covs[m], dtype=float)
        if cov.ndim == 0:
            cov = np.eye(domain.dims) * float(cov)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        d = centers - means[m]
        sol = np.linalg.solve(cov, d.T).T
        q = np.sum(d * sol, axis=1)
        norm = 1.0 / np.sqrt((2.0 * np.pi) ** domain.dims * np.linalg.det(cov))
        vals += weights[m] * norm * np.exp(-0.5 * q)
    return TargetDistribution(ScalarField(domain, vals.reshape(domain.shape)))


def target_from_image(path, domain):
    """Grayscale image as a 2-D density: intensity -> density, normalized.

    The image is resampled to the grid shape; column index maps to the first
    grid axis and rows are flipped so the image reads upright when the second
    axis points up.
    """
    from PIL import Image

    if domain.dims != 2:
        raise ValueError("image targets are 2-D only")
    img = Image.open(path).convert("L")
    nx, ny = domain.shape
    img = img.resize((nx, ny), Image.BILINEAR)
    arr = np.asarray(img, dtype=float)  # (rows=ny, cols=nx)
    vals = arr[::-1, :].T  # values[x, y], row 0 of the image at the top
    return TargetDistribution(ScalarField(domain, vals))


@dataclass
class CoverageAccumulator:
    """Unnormalized sum of footprint deposits plus the deposit-call count."""

    domain: GridDomain
    footprint_radius: float
    raw: np.ndarray = field(default=None, repr=False)
    steps: int = 0

    def __post_init__(self):
        if self.footprint_radius <= 0:
            raise ValueError("footprint radius must be positive")
        if self.raw is None:
            self.raw = np.zeros(self.domain.shape)

    def copy(self):
        return CoverageAccumulator(self.domain, self.footprint_radius,
                                   self.raw.copy(), self.steps)

    @property
    def has_mass(self):
        return self.steps > 0 and self.raw.sum() > 0.0

    def add_positions(self, positions):
        """In-place deposit of one timestep's agent positions.

        Positions outside the domain are flagged (returned count) and keep
        only the part of their footprint that overlaps the domain, so a
        barely-outside agent still contributes its kernel tail while a
        distant one contributes nothing.
        """
        self.steps += 1
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if positions.size == 0:
            return 0
        dom = self.domain
        sigma = self.footprint_radius
        g = dom.world_to_grid(positions)
        hi = np.asarray(dom.shape, dtype=float) - 1.0
        n_outside = int(np.sum(np.any((g < 0.0) | (g > hi), axis=1)))

        # one batched kernel evaluation for all agents (shared window size)
        halves = [int(np.ceil(3.0 * sigma / dom.spacing[a])) for a in range(dom.dims)]
        centers = np.floor(g).astype(int)
        n = g.shape[0]
        r2 = np.zeros((n,) + tuple(2 * h + 2 for h in halves))
        windows = []
        for a in range(dom.dims):
            rel = np.arange(-halves[a], halves[a] + 2)
            off = (centers[:, a, None] + rel[None, :] - g[:, a, None]) * dom.spacing[a]
            windows.append(rel)
            shape = [n] + [1] * dom.dims
            shape[1 + a] = rel.size
            r2 += (off**2).reshape(shape)
        kernels = np.exp(-0.5 * r2 / sigma**2)
        kernels[r2 > (3.0 * sigma) ** 2] = 0.0
        totals = kernels.reshape(n, -1).sum(axis=1) * dom.cell_volume

        for i in range(n):
            if totals[i] <= 0.0:
                # footprint far smaller than a cell: all mass in the nearest cell
                nearest = tuple(int(round(gi)) for gi in g[i])
                if all(0 <= v < m for v, m in zip(nearest, dom.shape)):
                    self.raw[nearest] += 1.0 / dom.cell_volume
                continue
            # clip the window to the domain; mass in the cut part is lost
            src, dst = [], []
            inside = True
            for a in range(dom.dims):
                i0 = centers[i, a] - halves[a]
                i1 = centers[i, a] + halves[a] + 2
                lo = max(0, -i0)
                cut = i1 - min(i1, dom.shape[a])
                if lo >= windows[a].size - cut:
                    inside = False
                    break
                src.append(slice(lo, windows[a].size - cut))
                dst.append(slice(i0 + lo, i1 - cut))
            if inside:
                self.raw[tuple(dst)] += kernels[i][tuple(src)] / totals[i]
        return n_outside


def deposit_coverage(cov, positions):
    """Pure variant of :meth:`CoverageAccumulator.add_positions`."""
    out = cov.copy()
    out.add_positions(positions)
    return out


def normalized_coverage(cov):
    """Coverage scaled to integrate to one over the domain."""
    if cov.steps == 0:
        raise ValueError("coverage is undefined before the first deposit")
    total = cov.raw.sum() * cov.domain.cell_volume
    if total <= 0.0:
        raise ValueError("no coverage mass has been deposited")
    return ScalarField(cov.domain, cov.raw / total)


def residual_and_source(p, c):
    """Residual e = p - c and heat source s = max(e, 0)^2."""
    check_same_domain(p.field, c)
    e = p.field.values - c.values
    s = np.maximum(e, 0.0) ** 2
    return ScalarField(c.domain, e), ScalarField(c.domain, s)
