"""Exploration performance metric.

The normalized ergodicity is the cell-volume-weighted L2 norm of the
positive part of the residual p - c, divided by the integral of the target.
Zero means the coverage matches (or exceeds) the target everywhere; lower is
better.  Overcoverage is not penalized.
"""

import numpy as np

from .coverage import TargetDistribution
from .grid import check_same_domain


def ergodicity(p, c):
    pf = p.field if isinstance(p, TargetDistribution) else p
    check_same_domain(pf, c)
    vol = pf.domain.cell_volume
    shortfall = np.maximum(pf.values - c.values, 0.0)
    norm = np.sqrt(np.sum(shortfall**2) * vol)
    total = pf.values.sum() * vol
    if total <= 0:
        raise ValueError("target has zero mass")
    return float(norm / total)
