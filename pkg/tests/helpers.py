"""Shared numerical oracles for the test suite.

These are intentionally written from first principles (finite differences,
grid quadrature) so they constitute independent routes to the quantities the
package computes analytically or by Monte-Carlo.
"""

from __future__ import annotations

import numpy as np


def fd_jacobian(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``x`` (columns = directions)."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((f0.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = h
        jac[:, j] = (np.atleast_1d(fn(x + step)) - np.atleast_1d(fn(x - step))) / (2.0 * h)
    return jac


def fd_jacobian_richardson(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Richardson-extrapolated central differences: O(h^4) accurate."""
    coarse = fd_jacobian(fn, x, h)
    fine = fd_jacobian(fn, x, h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def grid_area_2d(indicator, lo, hi, cells: int = 4096) -> float:
    """Midpoint-rule area of ``{indicator == True}`` over a 2-d box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    xs = lo[0] + (np.arange(cells) + 0.5) * (hi[0] - lo[0]) / cells
    ys = lo[1] + (np.arange(cells) + 0.5) * (hi[1] - lo[1]) / cells
    cell_area = (hi[0] - lo[0]) * (hi[1] - lo[1]) / (cells * cells)
    total = 0
    # row-by-row to keep memory flat at large resolutions
    for x in xs:
        pts = np.stack([np.full(cells, x), ys], axis=1)
        total += int(np.count_nonzero(indicator(pts)))
    return total * cell_area
