"""Uniform rectilinear grid domains and the scalar fields living on them.

Fields are cell-centered: cell (i, j[, k]) has its center at
``origin + index * spacing``.  All field operations are pure (array in,
array out) and deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

_BINARY_INT = np.dtype("<i8")
_BINARY_FLOAT = np.dtype("<f8")


@dataclass(frozen=True)
class GridDomain:
    """A uniform 2-D or 3-D grid: per-axis cell counts, spacing and origin.

    ``origin`` is the world coordinate of the center of cell (0, ..., 0).
    """

    shape: tuple
    spacing: tuple
    origin: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        if len(shape) not in (2, 3):
            raise ValueError(f"grid must be 2-D or 3-D, got {len(shape)} axes")
        if len(spacing) != len(shape) or len(origin) != len(shape):
            raise ValueError("shape, spacing and origin must have equal length")
        if any(n < 3 for n in shape):
            raise ValueError(f"need at least 3 cells per axis for the stencil, got {shape}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")

        object.__setattr__(self, "_cell_volume", float(np.prod(spacing)))

    @property
    def dims(self):
        return len(self.shape)

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return self._cell_volume

    @property
    def lower(self):
        """World coordinate of the low corner of the cell box."""
        return np.asarray(self.origin) - 0.5 * np.asarray(self.spacing)

    @property
    def upper(self):
        return np.asarray(self.origin) + (np.asarray(self.shape) - 0.5) * np.asarray(self.spacing)

    def world_to_grid(self, points):
        """Map world points to continuous grid coordinates (cell-index units)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - np.asarray(self.origin)) / np.asarray(self.spacing)

    def grid_to_world(self, indices):
        idx = np.atleast_2d(np.asarray(indices, dtype=float))
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def contains(self, points):
        """True for points inside the cell box (boundary inclusive)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def cell_centers(self):
        """Meshgrid of cell-center coordinates, one (shape)-array per axis."""
        axes = [self.origin[a] + np.arange(self.shape[a]) * self.spacing[a]
                for a in range(self.dims)]
        return np.meshgrid(*axes, indexing="ij")


@dataclass
class ScalarField:
    """Scalar values on a :class:`GridDomain`, one value per cell."""

    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.domain.shape:
            raise ValueError(f"values shape {vals.shape} != domain shape {self.domain.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        self.values = vals

    def copy(self):
        return ScalarField(self.domain, self.values.copy())

    def integral(self):
        return float(self.values.sum()) * self.domain.cell_volume

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.shape))

    @classmethod
    def full(cls, domain, value):
        return cls(domain, np.full(domain.shape, float(value)))


def check_same_domain(a, b):
    if a.domain != b.domain:
        raise ValueError("fields live on different domains")


def _clip_grid_coords(domain, g):
    """Clamp continuous grid coordinates to the cell-center range [0, n-1]."""
    hi = np.asarray(domain.shape, dtype=float) - 1.0
    return np.clip(g, 0.0, hi)


def interpolate(u, points):
    """Multilinear interpolation of field values at world points.

    Out-of-domain points are clamped to the cell-center range, so the
    interpolant continues with the edge value.  Returns an (n,) array.
    """
    dom = u.domain
    g = _clip_grid_coords(dom, dom.world_to_grid(points))
    i0 = np.floor(g).astype(int)
    i0 = np.minimum(i0, np.asarray(dom.shape) - 2)
    frac = g - i0
    out = np.zeros(g.shape[0])
    for corner in np.ndindex(*(2,) * dom.dims):
        w = np.ones(g.shape[0])
        idx = []
        for a, c in enumerate(corner):
            w = w * (frac[:, a] if c else 1.0 - frac[:, a])
            idx.append(i0[:, a] + c)
        out += w * u.values[tuple(idx)]
    return out


def grid_gradient(u):
    """Per-axis central differences of the field, edge-mirrored at boundaries.

    Returns a list of arrays, one per axis, each with the field's shape.
    """
    grads = []
    p = np.pad(u.values, 1, mode="edge")
    dims = u.domain.dims
    inner = tuple(slice(1, -1) for _ in range(dims))
    for a in range(dims):
        up = list(inner)
        dn = list(inner)
        up[a] = slice(2, None)
        dn[a] = slice(None, -2)
        grads.append((p[tuple(up)] - p[tuple(dn)]) / (2.0 * u.domain.spacing[a]))
    return grads


def sample_gradient(u, x, gradient=None):
    """Gradient of the field at one world point (length-dims vector).

    Central differences on the grid, then multilinear interpolation of each
    gradient component.  ``gradient`` may pass precomputed arrays from
    :func:`grid_gradient` to avoid recomputing them per call.
    """
    if gradient is None:
        gradient = grid_gradient(u)
    return sample_gradient_many(u, np.atleast_2d(x), gradient)[0]


def sample_gradient_many(u, points, gradient=None):
    """Vectorized :func:`sample_gradient` for an (n, dims) array of points."""
    if gradient is None:
        gradient = grid_gradient(u)
    out = np.empty((np.atleast_2d(points).shape[0], u.domain.dims))
    for a, ga in enumerate(gradient):
        out[:, a] = interpolate(ScalarField(u.domain, ga), points)
    return out


# --- serialization ----------------------------------------------------------

def save_field(u, path):
    """Write a field in the flat binary layout.

    Header: dims (int64 LE), shape (dims x int64), spacing (dims x float64),
    origin (dims x float64); then the values row-major as float64.
    """
    dom = u.domain
    with open(path, "wb") as f:
        np.asarray([dom.dims], dtype=_BINARY_INT).tofile(f)
        np.asarray(dom.shape, dtype=_BINARY_INT).tofile(f)
        np.asarray(dom.spacing, dtype=_BINARY_FLOAT).tofile(f)
        np.asarray(dom.origin, dtype=_BINARY_FLOAT).tofile(f)
        np.ascontiguousarray(u.values, dtype=_BINARY_FLOAT).tofile(f)


def load_field(path):
    with open(path, "rb") as f:
        dims = int(np.fromfile(f, dtype=_BINARY_INT, count=1)[0])
        if dims not in (2, 3):
            raise ValueError(f"bad field file: dims={dims}")
        shape = np.fromfile(f, dtype=_BINARY_INT, count=dims)
        spacing = np.fromfile(f, dtype=_BINARY_FLOAT, count=dims)
        origin = np.fromfile(f, dtype=_BINARY_FLOAT, count=dims)
        n = int(np.prod(shape))
        values = np.fromfile(f, dtype=_BINARY_FLOAT, count=n)
        if values.size != n:
            raise ValueError("bad field file: truncated values")
    domain = GridDomain(tuple(int(s) for s in shape), tuple(spacing), tuple(origin))
    return ScalarField(domain, values.reshape(domain.shape))


def field_to_csv(u, path):
    """Write (index tuple, value) rows for plotting."""
    dom = u.domain
    cols = "ijk"[: dom.dims]
    with open(path, "w") as f:
        f.write(",".join(cols) + ",value\n")
        for idx in np.ndindex(*dom.shape):
            f.write(",".join(str(i) for i in idx) + f",{float(u.values[idx])!r}\n")
