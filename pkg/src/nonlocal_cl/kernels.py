"""Convolution kernels: evaluation, exact norms, and admissibility checks.

Two concrete families carry the scenarios:

* the indicator of ]-1, 0[ (a BV kernel with two unit jumps), and
* the continuous seven-piece profile parametrised by ``alpha`` and ``n``
  whose value on [-1/n, 1/n] is ``alpha``; it converges to the indicator
  in L^1 as ``n`` grows.

Both are instances of :class:`PiecewiseLinearKernel`, for which every norm
is computed by exact segment integration. Other closed-form kernels fall
back to adaptive quadrature.

Jumps are resolved with the right-limit convention: a kernel evaluated at a
discontinuity returns the limit from the right.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import NonIntegrableKernelError

QUAD_RTOL = 1e-10
JUMP_CONVENTION = "right"


class Regularity(NamedTuple):
    kind: str  # "smooth" | "sobolev" | "bv"
    p: float | None = None

    def __str__(self) -> str:
        if self.kind == "sobolev":
            return f"Sobolev({self.p:g})"
        return self.kind.upper() if self.kind == "bv" else self.kind.capitalize()


SMOOTH = Regularity("smooth")
BV = Regularity("bv")


class KernelNorms(NamedTuple):
    l1: float
    lp: float
    tv: float
    grad_lp: float  # inf when the kernel has jumps


class Kernel:
    """Base class. Subclasses implement evaluation and the norm queries."""

    dim: int = 1
    codim: int = 1
    regularity: Regularity = BV
    jump_convention: str = JUMP_CONVENTION
    name: str = "kernel"

    def __call__(self, z):
        raise NotImplementedError

    @property
    def support_radius(self) -> float:
        raise NotImplementedError

    def l1_norm(self) -> float:
        return self.lp_norm(1.0)

    def lp_norm(self, p: float) -> float:
        raise NotImplementedError

    def total_variation(self) -> float:
        raise NotImplementedError

    def gradient_lp_norm(self, p: float) -> float:
        raise NotImplementedError

    def tail_norm(self, R: float, p: float = 1.0) -> float:
        """(int_{|x| > R} |eta|^p)^{1/p}."""
        raise NotImplementedError

    def fingerprint(self) -> str:
        return self.name


# ---------------------------------------------------------------------------
# piecewise-linear kernels (1D, scalar)


def _segment_abs_power(a: float, b: float, length: float, p: float) -> float:
    """Exact int_0^length |a + (b - a) s / length|^p ds."""
    if length <= 0.0:
        return 0.0
    if a * b < 0.0:
        root = length * abs(a) / (abs(a) + abs(b))
        return (root * abs(a) ** p + (length - root) * abs(b) ** p) / (p + 1.0)
    a, b = abs(a), abs(b)
    if a == b:
        return length * a**p
    return length * (b ** (p + 1.0) - a ** (p + 1.0)) / ((p + 1.0) * (b - a))


class PiecewiseLinearKernel(Kernel):
    """Scalar 1D kernel, linear on each ``[breaks[k], breaks[k+1])``.

    ``start[k]`` is the right limit at ``breaks[k]`` and ``end[k]`` the left
    limit at ``breaks[k+1]``. Outside ``[breaks[0], breaks[-1])`` the kernel
    vanishes.
    """

    def __init__(
        self,
        breaks: Sequence[float],
        start: Sequence[float],
        end: Sequence[float],
        name: str = "piecewise_linear",
    ) -> None:
        breaks = np.asarray(breaks, dtype=float)
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        if breaks.ndim != 1 or breaks.size < 2:
            raise ValueError("need at least two breakpoints")
        if start.shape != (breaks.size - 1,) or end.shape != start.shape:
            raise ValueError("one start/end value per piece")
        if np.any(np.diff(breaks) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        self.breaks = breaks
        self.start = start
        self.end = end
        self.lengths = np.diff(breaks)
        self.slopes = (end - start) / self.lengths
        self.name = name
        for arr in (self.breaks, self.start, self.end, self.lengths, self.slopes):
            arr.setflags(write=False)
        self.regularity = BV if self.max_jump() > 0.0 else Regularity("sobolev", math.inf)

    @property
    def n_pieces(self) -> int:
        return self.start.size

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    @property
    def support_radius(self) -> float:
        return float(max(abs(self.breaks[0]), abs(self.breaks[-1])))

    def jumps(self) -> np.ndarray:
        """Jump heights at every breakpoint, right limit minus left limit."""
        left = np.concatenate(([0.0], self.end))
        right = np.concatenate((self.start, [0.0]))
        return right - left

    def max_jump(self) -> float:
        return float(np.max(np.abs(self.jumps())))

    def evaluate(self, z, side: str = "right") -> np.ndarray:
        """Evaluate with the given one-sided limit at breakpoints."""
        z = np.asarray(z, dtype=float)
        idx = np.searchsorted(self.breaks, z, side=side) - 1
        inside = (idx >= 0) & (idx < self.n_pieces)
        i = np.clip(idx, 0, self.n_pieces - 1)
        val = self.start[i] + self.slopes[i] * (z - self.breaks[i])
        return np.where(inside, val, 0.0)

    def __call__(self, z):
        return self.evaluate(z, side="right")

    def antiderivative(self, z) -> np.ndarray:
        """G(z) = int_{-inf}^z eta."""
        z = np.asarray(z, dtype=float)
        masses = 0.5 * (self.start + self.end) * self.lengths
        cum = np.concatenate(([0.0], np.cumsum(masses)))
        idx = np.clip(np.searchsorted(self.breaks, z, side="right") - 1, 0, self.n_pieces - 1)
        s = np.clip(z - self.breaks[idx], 0.0, self.lengths[idx])
        partial = self.start[idx] * s + 0.5 * self.slopes[idx] * s * s
        out = cum[idx] + partial
        out = np.where(z < self.breaks[0], 0.0, out)
        return np.where(z >= self.breaks[-1], cum[-1], out)

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            return float(np.max(np.maximum(np.abs(self.start), np.abs(self.end))))
        total = sum(
            _segment_abs_power(a, b, ell, p)
            for a, b, ell in zip(self.start, self.end, self.lengths)
        )
        return total ** (1.0 / p)

    def mass(self) -> float:
        return float(np.sum(0.5 * (self.start + self.end) * self.lengths))

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.end - self.start)) + np.sum(np.abs(self.jumps())))

    def gradient_lp_norm(self, p: float) -> float:
        if self.max_jump() > 0.0:
            return math.inf
        if math.isinf(p):
            return float(np.max(np.abs(self.slopes)))
        return float(np.sum(np.abs(self.slopes) ** p * self.lengths)) ** (1.0 / p)

    def derivative(self) -> PiecewiseLinearKernel:
        """Piecewise-constant a.e. derivative; only defined for Lipschitz kernels."""
        if self.max_jump() > 0.0:
            raise ValueError(f"{self.name} has jumps; its derivative is a measure")
        return PiecewiseLinearKernel(self.breaks, self.slopes, self.slopes, name=f"d({self.name})")

    def tail_norm(self, R: float, p: float = 1.0) -> float:
        total = 0.0
        for a0, a1, v0, v1 in zip(self.breaks[:-1], self.breaks[1:], self.start, self.end):
            for lo, hi in ((a0, min(a1, -R)), (max(a0, R), a1)):
                if hi <= lo:
                    continue
                slope = (v1 - v0) / (a1 - a0)
                f_lo = v0 + slope * (lo - a0)
                f_hi = v0 + slope * (hi - a0)
                if math.isinf(p):
                    total = max(total, abs(f_lo), abs(f_hi))
                else:
                    total += _segment_abs_power(f_lo, f_hi, hi - lo, p)
        if math.isinf(p):
            return total
        return total ** (1.0 / p)

    def fingerprint(self) -> str:
        vals = ",".join(
            f"{x:.17g}" for x in np.concatenate((self.breaks, self.start, self.end))
        )
        return f"{self.name}[{vals}]"


class SmoothedStepKernel(PiecewiseLinearKernel):
    """Continuous approximation of the indicator of ]-1, 0[ taking the value
    ``alpha`` on [-1/n, 1/n]. ``r`` is the offset making the total mass 1."""

    def __init__(self, alpha: float, n: int) -> None:
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if int(n) != n or n < 3:
            raise ValueError(f"n must be an integer >= 3, got {n}")
        n = int(n)
        r = smoothed_offset(alpha, n)
        if not -r < -2.0 / n:
            raise ValueError(f"n = {n} too small for alpha = {alpha}: breakpoints not ordered")
        breaks = [-r - 1.0 / n, -r, -2.0 / n, -1.0 / n, 1.0 / n, 2.0 / n]
        start = [0.0, 1.0, 1.0, alpha, alpha]
        end = [1.0, 1.0, alpha, alpha, 0.0]
        super().__init__(breaks, start, end, name=f"smoothed_step(alpha={alpha:.17g},n={n})")
        self.alpha = float(alpha)
        self.n = n
        self.r = r


def smoothed_offset(alpha: float, n: int) -> float:
    """Offset giving the smoothed step unit mass: 1 + (1 - 3 alpha)/n.

    Piece masses are 1/(2n), r - 2/n, (1 + alpha)/(2n), 2 alpha/n and
    alpha/(2n), which sum to r + (3 alpha - 1)/n.
    """
    return 1.0 + (1.0 - 3.0 * alpha) / n


def make_step_kernel() -> PiecewiseLinearKernel:
    """Indicator of the open interval ]-1, 0[."""
    return PiecewiseLinearKernel([-1.0, 0.0], [1.0], [1.0], name="step")


def make_smoothed_kernel(alpha: float, n: int) -> SmoothedStepKernel:
    return SmoothedStepKernel(alpha, n)


# ---------------------------------------------------------------------------
# closed-form kernels


def _quad(f, a, b, points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if points is not None and math.isfinite(a) and math.isfinite(b):
                pts = [x for x in points if a < x < b]
                val, _ = integrate.quad(f, a, b, points=pts or None, epsrel=QUAD_RTOL, epsabs=0.0, limit=500)
            else:
                val, _ = integrate.quad(f, a, b, epsrel=QUAD_RTOL, epsabs=1e-300, limit=500)
        except integrate.IntegrationWarning as exc:
            raise NonIntegrableKernelError(str(exc)) from exc
    if not math.isfinite(val):
        raise NonIntegrableKernelError(f"integral over [{a}, {b}] diverges")
    return val


@dataclass(eq=False)
class ClosedFormKernel(Kernel):
    """Scalar 1D kernel given by a vectorised function.

    ``breakpoints`` lists points where the function or its derivative may be
    discontinuous; quadrature splits there. TV needs ``derivative`` unless the
    support is finite, in which case it is estimated from a dense sampling.
    """

    func: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float] = (-math.inf, math.inf)
    derivative_func: Callable[[np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()
    regularity: Regularity = SMOOTH
    name: str = "closed_form"
    params: dict = field(default_factory=dict)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.support
        val = np.asarray(self.func(z), dtype=float) * np.ones_like(z)
        return np.where((z >= lo) & (z < hi), val, 0.0)

    @property
    def support_radius(self) -> float:
        return max(abs(self.support[0]), abs(self.support[1]))

    def _integrate(self, g, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        f = lambda x: float(g(np.array(x)))  # noqa: E731
        pts = sorted(set(self.breakpoints))
        if math.isfinite(lo) and math.isfinite(hi):
            return _quad(f, lo, hi, pts)
        # split so the finite part sees the breakpoints
        inner = [x for x in pts if lo < x < hi]
        a = inner[0] if inner else (0.0 if lo < 0.0 < hi else (lo if math.isfinite(lo) else hi))
        b = inner[-1] if inner else a
        total = 0.0
        if lo < a:
            total += _quad(f, lo, a)
        if a < b:
            total += _quad(f, a, b, pts)
        if b < hi:
            total += _quad(f, b, hi)
        return total

    def lp_norm(self, p: float) -> float:
        lo, hi = self.support
        if math.isinf(p):
            grid = np.linspace(max(lo, -50.0), min(hi, 50.0), 200001)
            return float(np.max(np.abs(self(grid))))
        return self._integrate(lambda x: np.abs(self.func(x)) ** p, lo, hi) ** (1.0 / p)

    def total_variation(self) -> float:
        lo, hi = self.support
        edge = sum(
            abs(float(self.func(np.array(x)))) for x in (lo, hi) if math.isfinite(x)
        )
        if self.derivative_func is not None:
            return self._integrate(lambda x: np.abs(self.derivative_func(x)), lo, hi) + edge
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise NonIntegrableKernelError("TV of an unbounded closed-form kernel needs a derivative")
        grid = np.linspace(lo, hi, 2**20 + 1)
        return float(np.sum(np.abs(np.diff(self.func(grid))))) + edge

    def gradient_lp_norm(self, p: float) -> float:
        if self.regularity.kind == "bv":
            return math.inf
        if self.derivative_func is None:
            raise ValueError(f"{self.name}: gradient norm needs a closed-form derivative")
        lo, hi = self.support
        if math.isinf(p):
            grid = np.linspace(max(lo, -50.0), min(hi, 50.0), 200001)
            return float(np.max(np.abs(self.derivative_func(grid))))
        return self._integrate(lambda x: np.abs(self.derivative_func(x)) ** p, lo, hi) ** (1.0 / p)

    def tail_norm(self, R: float, p: float = 1.0) -> float:
        lo, hi = self.support
        g = lambda x: np.abs(self.func(x)) ** p  # noqa: E731
        total = self._integrate(g, lo, min(hi, -R)) + self._integrate(g, max(lo, R), hi)
        return total ** (1.0 / p)

    def fingerprint(self) -> str:
        items = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}({items})"


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / gamma(dim / 2.0)


@dataclass(eq=False)
class RadialKernel(Kernel):
    """eta(x) = profile(|x|) for |x| < radius in R^dim, zero elsewhere."""

    profile: Callable[[np.ndarray], np.ndarray]
    dim: int = 2
    radius: float = 1.0
    profile_derivative: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "radial"

    def __post_init__(self) -> None:
        jump = abs(float(self.profile(np.array(self.radius))))
        self.regularity = BV if jump > 0.0 else Regularity("sobolev", math.inf)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1) if self.dim > 1 else np.abs(z)
        return np.where(r < self.radius, self.profile(r), 0.0)

    @property
    def support_radius(self) -> float:
        return self.radius

    def _radial(self, g, lo: float = 0.0) -> float:
        w = sphere_area(self.dim)
        f = lambda r: w * r ** (self.dim - 1) * float(g(np.array(r)))  # noqa: E731
        return _quad(f, lo, self.radius) if lo < self.radius else 0.0

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            r = np.linspace(0.0, self.radius, 100001)[:-1]
            return float(np.max(np.abs(self.profile(r))))
        return self._radial(lambda r: np.abs(self.profile(r)) ** p) ** (1.0 / p)

    def total_variation(self) -> float:
        if self.profile_derivative is None:
            raise ValueError(f"{self.name}: TV needs the profile derivative")
        edge = abs(float(self.profile(np.array(self.radius)))) * sphere_area(self.dim) * self.radius ** (self.dim - 1)
        return self._radial(lambda r: np.abs(self.profile_derivative(r))) + edge

    def gradient_lp_norm(self, p: float) -> float:
        if self.regularity.kind == "bv":
            return math.inf
        if self.profile_derivative is None:
            raise ValueError(f"{self.name}: gradient norm needs the profile derivative")
        if math.isinf(p):
            r = np.linspace(0.0, self.radius, 100001)
            return float(np.max(np.abs(self.profile_derivative(r))))
        return self._radial(lambda r: np.abs(self.profile_derivative(r)) ** p) ** (1.0 / p)

    def tail_norm(self, R: float, p: float = 1.0) -> float:
        if R >= self.radius:
            return 0.0
        return self._radial(lambda r: np.abs(self.profile(r)) ** p, lo=R) ** (1.0 / p)


# ---------------------------------------------------------------------------
# queries


def kernel_norms(k: Kernel, p: float = 1.0) -> KernelNorms:
    """L^1 norm, L^p norm, total variation, and L^p norm of the gradient."""
    l1 = k.l1_norm()
    lp = l1 if p == 1.0 else k.lp_norm(p)
    try:
        grad = k.gradient_lp_norm(p)
    except ValueError:
        grad = math.nan
    return KernelNorms(l1=l1, lp=lp, tv=k.total_variation(), grad_lp=grad)


def l1_distance(k1: Kernel, k2: Kernel) -> float:
    """Exact for two piecewise-linear kernels, quadrature otherwise."""
    if isinstance(k1, PiecewiseLinearKernel) and isinstance(k2, PiecewiseLinearKernel):
        pts = np.union1d(k1.breaks, k2.breaks)
        a, b = pts[:-1], pts[1:]
        left = k1.evaluate(a, "right") - k2.evaluate(a, "right")
        right = k1.evaluate(b, "left") - k2.evaluate(b, "left")
        return float(sum(_segment_abs_power(x, y, ell, 1.0) for x, y, ell in zip(left, right, b - a)))
    lo = min(getattr(k, "support", (-math.inf,))[0] for k in (k1, k2))
    hi = max(getattr(k, "support", (0, math.inf))[1] for k in (k1, k2))
    pts = []
    for k in (k1, k2):
        pts.extend(getattr(k, "breaks", getattr(k, "breakpoints", ())))
    f = lambda x: abs(float(k1(np.array(x)) - k2(np.array(x))))  # noqa: E731
    return _quad(f, lo, hi, pts)


class DecayReport(NamedTuple):
    R_values: tuple[float, ...]
    sequence: tuple[float, ...]
    verdict: str  # "PASS" | "INCONCLUSIVE" | "NON_DECAY"
    decaying: bool


def check_decay_condition(
    k: Kernel, p: float, R_values: Sequence[float], tol: float = 1e-14
) -> DecayReport:
    """Sample R^d * ||eta||_{L^p(|x| > R)} along increasing radii.

    Only a compactly supported kernel whose tail vanishes at the largest
    radius gets PASS; a finite sample cannot certify a limit otherwise.
    """
    R = [float(r) for r in R_values]
    if not R or any(r <= 0 for r in R) or any(b <= a for a, b in zip(R, R[1:])):
        raise ValueError("R_values must be positive and strictly increasing")
    seq = tuple(r**k.dim * k.tail_norm(r, p) for r in R)
    finite_support = math.isfinite(k.support_radius)
    decaying = all(b < a for a, b in zip(seq, seq[1:])) or seq[-1] <= tol
    if finite_support and seq[-1] <= tol:
        verdict = "PASS"
    elif decaying:
        verdict = "INCONCLUSIVE"
    else:
        verdict = "NON_DECAY"
    return DecayReport(tuple(R), seq, verdict, decaying)
