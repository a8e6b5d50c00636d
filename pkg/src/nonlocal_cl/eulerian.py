"""First-order upwind finite-volume cross-check solver (1D).

Face velocities b_{j+1/2} = V(t, x_{j+1/2}, (u * eta)(x_{j+1/2})) are
recomputed from the current cell averages every step and frozen over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowupAbort, DomainTooSmallError
from .fields import GridField, GridSpec, convolve_grid, lq_norm
from .kernels import Kernel
from .lagrangian import DiagnosticsRecord, LagrangianRun, deposit
from .velocity import VelocityModel


@dataclass
class GridSnapshot:
    t: float
    field: GridField


class EulerianRun:
    """Upwind run with CFL control: a step whose dt * max|b| / h exceeds
    ``cfl`` is retried with dt halved, and the halving is recorded."""

    def __init__(
        self,
        state: GridField,
        kernel: Kernel,
        velocity: VelocityModel,
        cfl: float = 0.5,
        dt: float | None = None,
        snapshot_times=(),
        fingerprint: str = "",
    ) -> None:
        if not 0.0 < cfl <= 1.0:
            raise ValueError("CFL number must lie in (0, 1]")
        self.state = state.copy()
        self.kernel = kernel
        self.velocity = velocity
        self.cfl = float(cfl)
        self.t = 0.0
        self.steps = 0
        self.halvings = 0
        self.fingerprint = fingerprint
        self.history: list[DiagnosticsRecord] = []
        self.snapshots: list[GridSnapshot] = [GridSnapshot(0.0, self.state.copy())]
        self.snapshot_times = sorted(float(s) for s in snapshot_times if s > 0)
        b = self.face_velocities()
        h = state.h
        vmax = float(np.max(np.abs(b))) if b.size else 0.0
        self.dt = float(dt) if dt is not None else self.cfl * h / max(vmax, 1.0)
        self._record(b, 0)

    @property
    def faces(self) -> np.ndarray:
        return self.state.spec.edges[1:-1]

    def face_velocities(self) -> np.ndarray:
        faces = self.faces
        conv = convolve_grid(self.state, self.kernel, faces)
        return self.velocity(self.t, faces, conv.values)

    def step(self, dt_max: float | None = None) -> EulerianRun:
        u = self.state.values
        if u[0] != 0.0 or u[-1] != 0.0:
            raise DomainTooSmallError(f"solution support reached the domain boundary at t = {self.t:.6g}")
        h = self.state.h
        b = self.face_velocities()
        dt = self.dt if dt_max is None else min(self.dt, dt_max)
        halvings = 0
        vmax = float(np.max(np.abs(b))) if b.size else 0.0
        while dt * vmax / h > self.cfl:
            dt *= 0.5
            halvings += 1
        flux = np.where(b >= 0.0, b * u[:-1], b * u[1:])
        F = np.concatenate(([0.0], flux, [0.0]))
        new = u - (dt / h) * np.diff(F)
        if not np.all(np.isfinite(new)):
            raise BlowupAbort(f"non-finite cell value at t = {self.t + dt:.6g}")
        self.state = GridField(self.state.spec, new)
        self.t += dt
        self.steps += 1
        self.halvings += halvings
        self._record(b, halvings)
        return self

    def advance_to(self, t_end: float) -> EulerianRun:
        pending = [s for s in self.snapshot_times if s > self.t + 1e-15]
        while self.t < t_end - 1e-14:
            target = min([t_end] + pending)
            self.step(dt_max=target - self.t)
            if pending and abs(self.t - pending[0]) <= 1e-12:
                self.t = pending.pop(0)
                self.snapshots.append(GridSnapshot(self.t, self.state.copy()))
        if abs(self.t - t_end) <= 1e-12:
            self.t = t_end
        if not self.snapshots or self.snapshots[-1].t != self.t:
            self.snapshots.append(GridSnapshot(self.t, self.state.copy()))
        return self

    def _record(self, b: np.ndarray, halvings: int) -> None:
        u = self.state
        x = u.centers
        w = u.values * u.h
        mass = float(np.sum(w))
        nz = np.flatnonzero(u.values)
        centroid = float(np.sum(w * x) / mass) if mass != 0 else math.nan
        spread = math.sqrt(max(0.0, float(np.sum(w * (x - centroid) ** 2) / mass))) if mass != 0 else math.nan
        self.history.append(
            DiagnosticsRecord(
                t=self.t, mass=mass, max_u=lq_norm(u, math.inf), l1=lq_norm(u, 1.0),
                l2=lq_norm(u, 2.0),
                vel_min=float(b.min()) if b.size else 0.0, vel_max=float(b.max()) if b.size else 0.0,
                lip_dt=self.dt * float(np.max(np.abs(b))) / u.h if b.size else 0.0,
                support_left=float(u.spec.edges[nz[0]]) if nz.size else math.nan,
                support_right=float(u.spec.edges[nz[-1] + 1]) if nz.size else math.nan,
                centroid=centroid, spread=spread, halvings=halvings,
            )
        )


def euler_step(run: EulerianRun) -> EulerianRun:
    return run.step()


@dataclass
class CrossValidationReport:
    t: float
    distance: float
    tolerance: float
    passed: bool
    comparison_cells: int


def _coarsen(field: GridField, factor: int) -> GridField:
    spec = field.spec
    if spec.cells % factor:
        raise ValueError(f"cannot coarsen {spec.cells} cells by {factor}")
    coarse = GridSpec(spec.x_min, spec.x_max, spec.cells // factor)
    return GridField(coarse, field.values.reshape(-1, factor).mean(axis=1))


def cross_validate(
    lag: LagrangianRun,
    eul: EulerianRun,
    t: float,
    tolerance: float = 0.05,
    coarsen: int | None = None,
) -> CrossValidationReport:
    """L^1 distance between the deposited particle field and the grid field.

    Both fields are compared on a common grid ``coarsen`` times coarser than
    the Eulerian one, so that each comparison cell holds many particles and
    deposition noise stays below the solvers' own error.
    """
    if lag.fingerprint != eul.fingerprint:
        raise ValueError("runs were configured from different scenarios")
    if lag.t > t + 1e-12 or eul.t > t + 1e-12:
        raise ValueError("a run is already past the comparison time")
    lag.advance_to(t)
    eul.advance_to(t)
    spec = eul.state.spec
    if coarsen is None:
        # aim for ~50 particles per comparison cell over the current support
        support = max(float(np.ptp(lag.ensemble.positions)), spec.h)
        target = 50.0 * support / lag.ensemble.count
        coarsen = 1
        for f in range(1, spec.cells + 1):
            if spec.cells % f == 0:
                coarsen = f
                if f * spec.h >= target:
                    break
    e = _coarsen(eul.state, coarsen)
    dep = deposit(lag, e.spec)
    dist = float(np.sum(np.abs(dep.values - e.values)) * e.h)
    return CrossValidationReport(t, dist, tolerance, dist <= tolerance, e.spec.cells)
