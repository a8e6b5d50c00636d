"""Particle (characteristics) solver for d_t u + div(u V(t, x, u * eta)) = 0.

The solution is carried as the push-forward of the initial datum: each
particle keeps its mass and moves with the nonlocal velocity computed from
the current particle measure. Densities are recovered either from the 1D
particle spacing (discrete Jacobian) or from the accumulated divergence of
the transport field along each trajectory.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BlowupAbort, DomainTooSmallError
from .fields import GridField, GridSpec, particle_sum
from .io import write_csv
from .kernels import Kernel, PiecewiseLinearKernel
from .velocity import VelocityModel

log = logging.getLogger(__name__)

Piece = tuple  # (a, b, value) in 1D; (lo, hi, value) with array corners in d > 1


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    weights: np.ndarray
    u0: np.ndarray
    volumes: np.ndarray
    segment: np.ndarray  # contiguous-piece id, spacing densities never cross ids
    div_integral: np.ndarray = None
    initial_positions: np.ndarray = None

    def __post_init__(self) -> None:
        if self.div_integral is None:
            self.div_integral = np.zeros(self.weights.shape)
        if self.initial_positions is None:
            self.initial_positions = self.positions.copy()

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else self.positions.shape[1]

    def copy(self) -> ParticleEnsemble:
        return ParticleEnsemble(
            self.positions.copy(), self.weights.copy(), self.u0.copy(), self.volumes.copy(),
            self.segment.copy(), self.div_integral.copy(), self.initial_positions.copy(),
        )


def seed_from_datum(pieces: Sequence[Piece], P: int, domain=None) -> ParticleEnsemble:
    """Particles at the cell centres of a uniform partition of supp u0.

    Particles are shared among the nonzero pieces in proportion to their
    length (volume in d > 1), each particle carrying u0 * cell volume.
    """
    if P < 2:
        raise ValueError("need at least two particles")
    live = [pc for pc in pieces if pc[2] != 0.0]
    if not live:
        raise ValueError("initial datum has empty support")
    if np.ndim(live[0][0]) > 0:
        return _seed_boxes(live, P)
    live = sorted(live, key=lambda pc: pc[0])
    if domain is not None:
        lo, hi = domain
        if live[0][0] < lo or live[-1][1] > hi:
            raise DomainTooSmallError("initial datum not contained in the domain")
    lengths = np.array([b - a for a, b, _ in live], dtype=float)
    counts = _apportion(P, lengths)
    xs, u0, vol, seg = [], [], [], []
    for sid, ((a, b, v), m) in enumerate(zip(live, counts)):
        cell = (b - a) / m
        xs.append(a + cell * (np.arange(m) + 0.5))
        u0.append(np.full(m, float(v)))
        vol.append(np.full(m, cell))
        seg.append(np.full(m, sid))
    u0 = np.concatenate(u0)
    vol = np.concatenate(vol)
    return ParticleEnsemble(np.concatenate(xs), u0 * vol, u0, vol, np.concatenate(seg))


def _apportion(P: int, sizes: np.ndarray) -> np.ndarray:
    raw = P * sizes / sizes.sum()
    counts = np.maximum(1, np.floor(raw).astype(int))
    while counts.sum() < P:
        counts[np.argmax(raw - counts)] += 1
    while counts.sum() > P:
        counts[np.argmax(counts)] -= 1
    return counts


def _seed_boxes(pieces, P: int) -> ParticleEnsemble:
    vols = np.array([np.prod(np.asarray(hi, float) - np.asarray(lo, float)) for lo, hi, _ in pieces])
    counts = _apportion(P, vols)
    xs, u0, vol, seg = [], [], [], []
    for sid, ((lo, hi, v), m) in enumerate(zip(pieces, counts)):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        per_axis = max(1, int(round(m ** (1.0 / lo.size))))
        axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(per_axis) + 0.5) / per_axis for i in range(lo.size)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        cell = float(np.prod((hi - lo) / per_axis))
        xs.append(grid)
        u0.append(np.full(len(grid), float(v)))
        vol.append(np.full(len(grid), cell))
        seg.append(np.full(len(grid), sid))
    u0 = np.concatenate(u0)
    vol = np.concatenate(vol)
    return ParticleEnsemble(np.concatenate(xs), u0 * vol, u0, vol, np.concatenate(seg))


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    max_u: float
    l1: float
    l2: float
    vel_min: float
    vel_max: float
    lip_dt: float
    support_left: float
    support_right: float
    centroid: float
    spread: float
    v_left: float = math.nan
    v_right: float = math.nan
    halvings: int = 0

    FIELDS = (
        "t", "mass", "max_u", "l1", "l2", "vel_min", "vel_max", "lip_dt",
        "support_left", "support_right", "centroid", "spread", "v_left", "v_right", "halvings",
    )

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class Snapshot:
    t: float
    positions: np.ndarray
    density: np.ndarray
    velocity: np.ndarray


@dataclass
class SolutionValues:
    positions: np.ndarray
    density: np.ndarray
    density_div: np.ndarray | None
    concentrated: bool


def spacing_density(ens: ParticleEnsemble, positions: np.ndarray | None = None) -> np.ndarray:
    """u0_i * (initial local spacing / current local spacing), per 1D particle.

    Zero or negative spacing (coincident or crossed particles) gives inf.
    """
    x = ens.positions if positions is None else positions
    x0 = ens.initial_positions
    out = np.empty_like(x)
    bounds = np.flatnonzero(np.diff(ens.segment)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, x.size]):
        s, s0 = _local_spacing(x[lo:hi]), _local_spacing(x0[lo:hi])
        with np.errstate(divide="ignore", invalid="ignore"):
            out[lo:hi] = np.where(s > 0.0, ens.u0[lo:hi] * s0 / s, math.inf)
    return out


def _local_spacing(x: np.ndarray) -> np.ndarray:
    if x.size == 1:
        return np.ones(1)
    s = np.empty_like(x)
    s[1:-1] = 0.5 * (x[2:] - x[:-2])
    s[0] = x[1] - x[0]
    s[-1] = x[-1] - x[-2]
    return s


class LagrangianRun:
    """Fixed-step RK4 integration of the coupled particle system.

    All particle velocities of a stage are evaluated from the same frozen
    stage ensemble. ``snapshot_every`` and ``record_every`` count steps.
    """

    def __init__(
        self,
        ensemble: ParticleEnsemble,
        kernel: Kernel,
        velocity: VelocityModel,
        dt: float,
        track_divergence: bool = False,
        snapshot_every: int | None = None,
        record_every: int = 1,
        fingerprint: str = "",
    ) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.ensemble = ensemble
        self.kernel = kernel
        self.velocity = velocity
        self.dt = float(dt)
        self.steps = 0
        self.snapshot_every = snapshot_every
        self.record_every = max(1, int(record_every))
        self.fingerprint = fingerprint
        self.history: list[DiagnosticsRecord] = []
        self.snapshots: list[Snapshot] = []
        self.track_divergence = track_divergence
        self._dkernel = None
        if track_divergence:
            if not isinstance(kernel, PiecewiseLinearKernel) or ensemble.dim != 1:
                raise ValueError("divergence tracking needs a 1D piecewise-linear kernel")
            self._dkernel = kernel.derivative()
            if velocity.dx is None or velocity.dxi is None:
                raise ValueError("divergence tracking needs closed-form derivatives of V")
        self._one_d_pl = ensemble.dim == 1 and isinstance(kernel, PiecewiseLinearKernel)
        self._lip_routes = _lipschitz_routes(kernel, velocity)
        self._rates = self._evaluate(self.t, ensemble.positions)
        self._record()
        self._maybe_snapshot(force=True)

    @property
    def t(self) -> float:
        return self.steps * self.dt

    def _conv(self, X, k) -> np.ndarray:
        w = self.ensemble.weights
        if self._one_d_pl:
            presorted = bool(np.all(X[1:] >= X[:-1]))
            return particle_sum(X, w, k, X, presorted=presorted)
        return particle_sum(X, w, k, X)

    def _evaluate(self, t: float, X: np.ndarray):
        conv = self._conv(X, self.kernel)
        b = self.velocity(t, X, conv)
        if self._dkernel is None:
            return b, None
        dconv = self._conv(X, self._dkernel)
        div = self.velocity.dx(t, X, conv) + self.velocity.dxi(t, X, conv) * dconv
        return b, div

    def step(self) -> LagrangianRun:
        ens, dt, t = self.ensemble, self.dt, self.t
        X = ens.positions
        b1, d1 = self._rates
        b2, d2 = self._evaluate(t + 0.5 * dt, X + 0.5 * dt * b1)
        b3, d3 = self._evaluate(t + 0.5 * dt, X + 0.5 * dt * b2)
        b4, d4 = self._evaluate(t + dt, X + dt * b3)
        X_new = X + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not np.all(np.isfinite(X_new)):
            raise BlowupAbort(f"non-finite particle position at t = {t + dt:.6g}")
        ens.positions = X_new
        if d1 is not None:
            ens.div_integral = ens.div_integral + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        self.steps += 1
        self._rates = self._evaluate(self.t, X_new)
        if self.steps % self.record_every == 0:
            self._record()
        self._maybe_snapshot()
        return self

    def advance_to(self, t_end: float) -> LagrangianRun:
        n_target = int(round(t_end / self.dt))
        if abs(n_target * self.dt - t_end) > 1e-9 * max(1.0, t_end):
            raise ValueError(f"t_end = {t_end} is not a multiple of dt = {self.dt}")
        while self.steps < n_target:
            self.step()
        if self.history[-1].t != self.t:
            self._record()
        self._maybe_snapshot(force=True)
        return self

    def _maybe_snapshot(self, force: bool = False) -> None:
        due = self.snapshot_every and self.steps % self.snapshot_every == 0
        if not (due or force):
            return
        if self.snapshots and self.snapshots[-1].t == self.t:
            return
        dens = spacing_density(self.ensemble) if self.ensemble.dim == 1 else np.full(self.ensemble.count, math.nan)
        self.snapshots.append(
            Snapshot(self.t, self.ensemble.positions.copy(), dens, np.array(self._rates[0], copy=True))
        )

    def _record(self) -> None:
        ens = self.ensemble
        w, X = ens.weights, ens.positions
        b = self._rates[0]
        mass = float(np.sum(w))
        l1 = float(np.sum(np.abs(w)))
        if ens.dim == 1:
            dens = spacing_density(ens)
            finite = np.isfinite(dens)
            max_u = float(np.max(np.abs(dens))) if dens.size else 0.0
            l2 = math.sqrt(float(np.sum(np.abs(w) * np.abs(dens)))) if np.all(finite) else math.inf
            centroid = float(np.sum(w * X) / mass) if mass != 0 else math.nan
            spread = math.sqrt(max(0.0, float(np.sum(w * (X - centroid) ** 2) / mass))) if mass != 0 else math.nan
            left, right = float(X.min()), float(X.max())
            v_left, v_right = float(b[0]), float(b[-1])
            bmin, bmax = float(np.min(b)), float(np.max(b))
        else:
            max_u = l2 = math.nan
            c = (w[:, None] * X).sum(axis=0) / mass
            centroid = float(np.linalg.norm(c))
            spread = math.sqrt(float(np.sum(w * np.sum((X - c) ** 2, axis=1)) / mass))
            left = right = math.nan
            v_left = v_right = math.nan
            speed = np.linalg.norm(np.atleast_2d(b), axis=-1)
            bmin, bmax = float(speed.min()), float(speed.max())
        lip = min((route(max_u, l1) for route in self._lip_routes), default=math.nan)
        self.history.append(
            DiagnosticsRecord(
                t=self.t, mass=mass, max_u=max_u, l1=l1, l2=l2, vel_min=bmin, vel_max=bmax,
                lip_dt=lip * self.dt, support_left=left, support_right=right,
                centroid=centroid, spread=spread, v_left=v_left, v_right=v_right,
            )
        )
        if lip * self.dt > 0.5 and not getattr(self, "_warned_cfl", False):
            log.warning("Lipschitz bound x dt = %.3g exceeds 0.5 at t = %.6g", lip * self.dt, self.t)
            self._warned_cfl = True

    def write_trajectories(self, path: str | Path) -> None:
        rows = []
        w = self.ensemble.weights
        for snap in self.snapshots:
            for i in range(w.size):
                rows.append((snap.t, i, snap.positions[i], w[i], snap.density[i]))
        write_csv(path, ["t", "particle_id", "x", "weight", "u_value"], rows)


def _lipschitz_routes(k: Kernel, V: VelocityModel):
    """Available bounds on the x-Lipschitz constant of b, as functions of
    (||u||_inf, ||u||_1): the BV route and the W^{1,inf} route."""
    L = V.lipschitz
    routes = []
    try:
        tv = k.total_variation()
        routes.append(lambda umax, ul1, tv=tv: L + L * tv * umax)
    except (ValueError, NotImplementedError):
        pass
    try:
        g = k.gradient_lp_norm(math.inf)
        if math.isfinite(g):
            routes.append(lambda umax, ul1, g=g: L + L * g * ul1)
    except (ValueError, NotImplementedError):
        pass
    return routes


def step(run: LagrangianRun) -> LagrangianRun:
    return run.step()


def solution_values(run: LagrangianRun) -> SolutionValues:
    """Per-particle densities; the divergence form is included when tracked."""
    ens = run.ensemble
    if ens.dim != 1:
        dens = None
        concentrated = False
    else:
        dens = spacing_density(ens)
        concentrated = not bool(np.all(np.isfinite(dens)))
    div_form = ens.u0 * np.exp(-ens.div_integral) if run.track_divergence else None
    if dens is None:
        dens = div_form
    return SolutionValues(ens.positions.copy(), dens, div_form, concentrated)


def deposit(run_or_ensemble, grid: GridSpec) -> GridField:
    """Histogram of particle masses on the grid, divided by the cell width."""
    ens = getattr(run_or_ensemble, "ensemble", run_or_ensemble)
    x = ens.positions
    if ens.dim != 1:
        raise ValueError("deposition is 1D only")
    idx = np.floor((x - grid.x_min) / grid.h).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= grid.cells):
        raise DomainTooSmallError("particle outside the deposition grid")
    acc = np.bincount(idx, weights=ens.weights, minlength=grid.cells)
    return GridField(grid, acc / grid.h)
