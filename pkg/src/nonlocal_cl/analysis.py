"""Quantitative diagnostics: existence-time bounds, the Q_R flow-distance
functional, blow-up time extrapolation, and Dirac-line tracking for the
smoothed-step kernel family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import Kernel, make_smoothed_kernel
from .lagrangian import LagrangianRun, seed_from_datum
from .velocity import VelocityModel, divergence_constants, make_identity_velocity

LN2 = math.log(2.0)
BLOWUP_DATUM = ((0.0, 0.5, 2.0),)


# ---------------------------------------------------------------------------
# existence time


@dataclass(frozen=True)
class ExistenceBound:
    K1: float
    K2: float
    q: float
    norm: float
    T_q: float
    T_star_lower: float
    terms: int


def existence_bound(
    V: VelocityModel, k: Kernel, u0_norm: float, q: float = math.inf, tol: float = 1e-12
) -> ExistenceBound:
    """Doubling time ln2 / (K1 + 2 K2 |u0|) and the lower bound
    sum_{j>=1} ln2 / (K1 + 2^j K2 |u0|) on the existence time.

    q = inf uses the total variation of the kernel; finite q uses the
    L^p norm of its gradient with p = q / (q - 1).
    """
    if u0_norm <= 0:
        raise ValueError("datum norm must be positive")
    if math.isinf(q):
        K1, K2 = divergence_constants(V, k, "bv")
    else:
        p = math.inf if q == 1.0 else q / (q - 1.0)
        K1, K2 = divergence_constants(V, k, "sobolev", p)
    a = K2 * u0_norm
    denom = K1 + 2.0 * a
    T_q = LN2 / denom if denom > 0 else math.inf
    if a == 0.0:
        return ExistenceBound(K1, K2, q, u0_norm, T_q, math.inf, 0)
    if K1 == 0.0:
        # geometric series: sum_j ln2 / (2^j a) = ln2 / a
        return ExistenceBound(K1, K2, q, u0_norm, T_q, LN2 / a, -1)
    total, j = 0.0, 1
    while True:
        inc = LN2 / (K1 + 2.0**j * a)
        total += inc
        if inc < tol:
            break
        j += 1
    return ExistenceBound(K1, K2, q, u0_norm, T_q, total, j)


# ---------------------------------------------------------------------------
# Q_R functional


@dataclass
class QRFunctional:
    R: float
    cutoff: str  # "exponential" | "unit"
    times: np.ndarray
    values: np.ndarray


def _positions_at(run: LagrangianRun, t: float) -> np.ndarray:
    for snap in run.snapshots:
        if abs(snap.t - t) <= 0.5 * run.dt:
            return snap.positions
    if abs(run.t - t) <= 0.5 * run.dt:
        return run.ensemble.positions
    raise ValueError(f"no snapshot at t = {t}")


def qr_functional(
    flow1: LagrangianRun, flow2: LagrangianRun, R: float, times: Sequence[float]
) -> QRFunctional:
    """sum_i chi_R(x_i^0) |u0_i| |X1_i(t) - X2_i(t)| vol_i with
    chi_R(x) = exp(-|x| / R), or chi = 1 for R = inf."""
    e1, e2 = flow1.ensemble, flow2.ensemble
    if e1.initial_positions.shape != e2.initial_positions.shape or not np.array_equal(
        e1.initial_positions, e2.initial_positions
    ) or not np.array_equal(e1.u0, e2.u0):
        raise ValueError("paired flows must be seeded identically")
    x0 = e1.initial_positions
    r0 = np.abs(x0) if x0.ndim == 1 else np.linalg.norm(x0, axis=1)
    if math.isinf(R):
        chi, cutoff = np.ones_like(r0), "unit"
    else:
        chi, cutoff = np.exp(-r0 / R), "exponential"
    weight = chi * np.abs(e1.u0) * e1.volumes
    times = np.asarray(times, dtype=float)
    vals = np.empty(times.size)
    for i, t in enumerate(times):
        d = _positions_at(flow1, t) - _positions_at(flow2, t)
        dist = np.abs(d) if d.ndim == 1 else np.linalg.norm(d, axis=1)
        vals[i] = float(np.sum(weight * dist))
    return QRFunctional(float(R), cutoff, times, vals)


# ---------------------------------------------------------------------------
# blow-up detection


@dataclass(frozen=True)
class BlowupEstimate:
    detected: bool
    first_exceed: float  # nan when the threshold is never crossed
    extrapolated: float  # nan when no growth is detected
    fit_window: tuple[float, float]
    fit_points: int


def fit_blowup_time(times, max_u) -> float:
    """Least-squares line through 1/max_u versus t; returns its root."""
    t = np.asarray(times, dtype=float)
    y = 1.0 / np.asarray(max_u, dtype=float)
    slope, intercept = np.polyfit(t, y, 1)
    if slope >= 0:
        return math.nan
    return float(-intercept / slope)


def detect_blowup(run, threshold: float) -> BlowupEstimate:
    """First time max u exceeds ``threshold`` and the blow-up time from a
    c / (T - t) fit over the last decade of growth of max u.

    The fit presumes the reciprocal-linear profile of the exact blow-up
    solution; it is a scenario-specific extrapolation, not a general test.
    """
    t = np.array([r.t for r in run.history])
    m = np.array([r.max_u for r in run.history])
    over = np.flatnonzero(m > threshold)
    first = float(t[over[0]]) if over.size else math.nan
    finite = np.isfinite(m) & (m > 0)
    none = BlowupEstimate(False, first, math.nan, (math.nan, math.nan), 0)
    if not over.size or finite.sum() < 3:
        return none
    tf, mf = t[finite], m[finite]
    peak = int(np.argmax(mf))
    if mf[peak] <= mf[0]:
        return none
    window = np.flatnonzero(mf[: peak + 1] >= mf[peak] / 10.0)
    if window.size < 3:
        window = np.arange(max(0, peak - 2), peak + 1)
    T = fit_blowup_time(tf[window], mf[window])
    if not math.isfinite(T):
        return none
    return BlowupEstimate(True, first, T, (float(tf[window[0]]), float(tf[window[-1]])), int(window.size))


# ---------------------------------------------------------------------------
# concentration on the Dirac line


def predicted_position(alpha: float, t):
    """Centroid of the limit: (t + 1/2)/2 before blow-up (centroid of the
    exact solution), alpha t + (1 - alpha)/2 afterwards."""
    t = np.asarray(t, dtype=float)
    return np.where(t < 0.5, 0.5 * (t + 0.5), alpha * t + 0.5 * (1.0 - alpha))


@dataclass
class ConcentrationReport:
    alpha: float
    n: int
    r: float
    times: np.ndarray
    mass: np.ndarray
    max_u: np.ndarray
    centroid: np.ndarray
    spread: np.ndarray
    predicted: np.ndarray
    centroid_error: np.ndarray
    extrapolated_blowup: float
    extra: dict = field(default_factory=dict)

    @property
    def final_centroid_error(self) -> float:
        return float(self.centroid_error[-1])

    def at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"no record at t = {t}")
        return i

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "r": self.r,
            "final_time": float(self.times[-1]),
            "final_centroid": float(self.centroid[-1]),
            "final_spread": float(self.spread[-1]),
            "final_centroid_error": self.final_centroid_error,
            "extrapolated_blowup": self.extrapolated_blowup,
        }

    def series(self) -> dict:
        return {
            "t": self.times, "mass": self.mass, "max_u": self.max_u, "centroid": self.centroid,
            "spread": self.spread, "centroid_error": self.centroid_error,
        }


@dataclass(frozen=True)
class StudySolverConfig:
    particles: int = 4000
    dt: float = 1e-4
    t_end: float = 1.0
    record_every: int = 100
    snapshot_every: int | None = None
    blowup_threshold: float = 50.0


def run_counterexample(alpha: float, n: int, cfg: StudySolverConfig) -> LagrangianRun:
    k = make_smoothed_kernel(alpha, n)
    ens = seed_from_datum(BLOWUP_DATUM, cfg.particles)
    run = LagrangianRun(
        ens, k, make_identity_velocity(), cfg.dt,
        snapshot_every=cfg.snapshot_every, record_every=cfg.record_every,
        fingerprint=f"counterexample|{k.fingerprint()}|identity|{BLOWUP_DATUM}",
    )
    return run.advance_to(cfg.t_end)


def concentration_report(run: LagrangianRun, alpha: float, threshold: float = 50.0) -> ConcentrationReport:
    h = run.history
    t = np.array([r.t for r in h])
    centroid = np.array([r.centroid for r in h])
    pred = predicted_position(alpha, t)
    k = run.kernel
    return ConcentrationReport(
        alpha=float(alpha), n=int(getattr(k, "n", 0)), r=float(getattr(k, "r", math.nan)),
        times=t, mass=np.array([r.mass for r in h]), max_u=np.array([r.max_u for r in h]),
        centroid=centroid, spread=np.array([r.spread for r in h]), predicted=pred,
        centroid_error=np.abs(centroid - pred),
        extrapolated_blowup=detect_blowup(run, threshold).extrapolated,
    )


def concentration_study(
    alpha: float, n_values: Sequence[int], cfg: StudySolverConfig = StudySolverConfig()
) -> dict[int, ConcentrationReport]:
    """Run the smoothed-kernel family past blow-up for each n and report the
    centroid error against the predicted Dirac line."""
    if any(n < 18 for n in n_values):
        raise ValueError("concentration study needs n >= 18")
    return {
        int(n): concentration_report(run_counterexample(alpha, n, cfg), alpha, cfg.blowup_threshold)
        for n in n_values
    }


def velocity_window_bracket(run: LagrangianRun, alpha: float, tol: float = 1e-6) -> int:
    """Count records where the leftmost particle moves slower than
    alpha * mass or the rightmost faster, beyond ``tol``."""
    count = 0
    for r in run.history:
        target = alpha * r.mass
        if r.v_left < target - tol or r.v_right > target + tol:
            count += 1
    return count
