"""Uniform 1D grid fields and the convolution engine.

Both convolutions are exact for piecewise-linear kernels: the grid path
integrates the kernel over each cell overlap, and the particle path sums
the kernel at particle offsets. Each runs in O((P + Q) log P) using
prefix sums over sorted data, one pass per linear piece of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import write_csv
from .kernels import Kernel, PiecewiseLinearKernel

_CHUNK = 4_000_000
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    cells: int

    def __post_init__(self) -> None:
        if self.cells < 2:
            raise ValueError("a grid needs at least two cells")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.cells

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.h * (np.arange(self.cells) + 0.5)

    def zeros(self) -> GridField:
        return GridField(self, np.zeros(self.cells))


@dataclass
class GridField:
    """Cell averages of u on a uniform grid."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.cells,):
            raise ValueError(f"expected {self.spec.cells} cell values, got {self.values.shape}")

    @classmethod
    def from_function(cls, spec: GridSpec, func) -> GridField:
        return cls(spec, np.asarray(func(spec.centers), dtype=float))

    @classmethod
    def from_pieces(cls, spec: GridSpec, pieces) -> GridField:
        """Exact cell averages of a piecewise-constant datum [(a, b, value), ...]."""
        e = spec.edges
        vals = np.zeros(spec.cells)
        for a, b, v in pieces:
            overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
            vals += v * overlap / spec.h
        return cls(spec, vals)

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def centers(self) -> np.ndarray:
        return self.spec.centers

    def mass(self) -> float:
        return self.h * float(np.sum(self.values))

    def copy(self) -> GridField:
        return GridField(self.spec, self.values.copy())

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ["x", "u"], np.column_stack((self.centers, self.values)))


@dataclass(frozen=True)
class ConvolutionResult:
    points: np.ndarray
    values: np.ndarray


def lq_norm(u: GridField, q: float) -> float:
    a = np.abs(u.values)
    if math.isinf(q):
        return float(a.max()) if a.size else 0.0
    return float((u.h * np.sum(a**q)) ** (1.0 / q))


# ---------------------------------------------------------------------------
# grid convolution


def convolve_grid(u: GridField, k: Kernel, points) -> ConvolutionResult:
    """(u * eta)(x) = int u(x - y) eta(y) dy, u taken as zero off the grid."""
    pts = np.asarray(points, dtype=float)
    if not math.isfinite(k.support_radius):
        raise ValueError("grid convolution needs a kernel with finite support")
    if isinstance(k, PiecewiseLinearKernel):
        vals = _grid_conv_piecewise_linear(u, k, pts)
    else:
        vals = _grid_conv_quadrature(u, k, pts)
    return ConvolutionResult(pts, vals)


def _grid_conv_piecewise_linear(u: GridField, k: PiecewiseLinearKernel, pts: np.ndarray) -> np.ndarray:
    spec = u.spec
    c = 0.5 * (spec.x_min + spec.x_max)
    e = spec.edges - c
    x = pts - c
    # sum_j u_j [G(x - e_j) - G(x - e_{j+1})] = sum_k d_k G(x - e_k)
    d = np.diff(np.concatenate(([0.0], u.values, [0.0])))
    D = np.concatenate(([0.0], np.cumsum(d)))
    DE = np.concatenate(([0.0], np.cumsum(d * e)))
    DE2 = np.concatenate(([0.0], np.cumsum(d * e * e)))
    b = k.breaks
    idx = [np.searchsorted(e, x - bk, side="right") for bk in b]
    G_at_break = k.antiderivative(b[:-1])
    out = k.mass() * D[idx[-1]]
    for p in range(k.n_pieces):
        lo, hi = idx[p + 1], idx[p]
        y = x - b[p]
        s0, s1 = k.start[p], k.slopes[p]
        dD = D[hi] - D[lo]
        dE = DE[hi] - DE[lo]
        out = out + (G_at_break[p] + s0 * y + 0.5 * s1 * y * y) * dD - (s0 + s1 * y) * dE
        if s1 != 0.0:
            out = out + 0.5 * s1 * (DE2[hi] - DE2[lo])
    return out


def _grid_conv_quadrature(u: GridField, k: Kernel, pts: np.ndarray) -> np.ndarray:
    spec = u.spec
    nz = np.flatnonzero(u.values)
    out = np.zeros(pts.size)
    if nz.size == 0:
        return out
    left = spec.edges[nz]
    # nodes s in each active cell; contribution u_j * int eta(x - s) ds
    s = left[:, None] + spec.h * 0.5 * (_GAUSS_X[None, :] + 1.0)
    wts = (0.5 * spec.h * _GAUSS_W)[None, :] * u.values[nz][:, None]
    s, wts = s.ravel(), wts.ravel()
    step = max(1, _CHUNK // s.size)
    for i in range(0, pts.size, step):
        q = pts[i : i + step]
        out[i : i + step] = k(q[:, None] - s[None, :]) @ wts
    return out


# ---------------------------------------------------------------------------
# particle convolution


def particle_sum(positions, weights, k: Kernel, points, presorted: bool = False) -> np.ndarray:
    """sum_i w_i eta(x - x_i) at every evaluation point x."""
    x = np.asarray(positions, dtype=float)
    w = np.asarray(weights, dtype=float)
    q = np.asarray(points, dtype=float)
    if x.shape[0] == 0:
        shape = q.shape[:1] if k.dim > 1 else q.shape
        return np.zeros(shape if k.codim == 1 else shape + (k.codim,))
    if k.dim == 1 and isinstance(k, PiecewiseLinearKernel):
        return _particle_sum_piecewise_linear(x, w, k, q, presorted)
    return _particle_sum_direct(x, w, k, q)


def _particle_sum_piecewise_linear(x, w, k: PiecewiseLinearKernel, q, presorted: bool) -> np.ndarray:
    if not presorted:
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
    c = 0.5 * (x[0] + x[-1])
    xs = x - c
    qs = q - c
    W = np.concatenate(([0.0], np.cumsum(w)))
    WX = np.concatenate(([0.0], np.cumsum(w * xs)))
    b = k.breaks
    # eta(q - x_j) uses piece p iff q - b[p+1] < x_j <= q - b[p]
    idx = [np.searchsorted(xs, qs - bk, side="right") for bk in b]
    out = np.zeros(q.shape)
    for p in range(k.n_pieces):
        lo, hi = idx[p + 1], idx[p]
        s0, s1 = k.start[p], k.slopes[p]
        if s1 == 0.0:
            if s0 != 0.0:
                out += s0 * (W[hi] - W[lo])
            continue
        out += (s0 + s1 * (qs - b[p])) * (W[hi] - W[lo]) - s1 * (WX[hi] - WX[lo])
    return out


def _particle_sum_direct(x, w, k: Kernel, q) -> np.ndarray:
    P = x.shape[0]
    step = max(1, _CHUNK // (P * (k.dim if k.dim > 1 else 1)))
    parts = []
    for i in range(0, q.shape[0], step):
        qc = q[i : i + step]
        diff = qc[:, None] - x[None, :]
        vals = np.asarray(k(diff), dtype=float)
        if vals.ndim == 2:
            parts.append(vals @ w)
        else:
            parts.append(np.einsum("qpn,p->qn", vals, w))
    return np.concatenate(parts, axis=0)


def convolve_particles(particles, k: Kernel, points) -> ConvolutionResult:
    """Convolution of the measure sum_i w_i delta_{x_i} with the kernel."""
    pts = np.asarray(points, dtype=float)
    vals = particle_sum(particles.positions, particles.weights, k, pts)
    return ConvolutionResult(pts, vals)
