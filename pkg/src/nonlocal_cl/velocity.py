"""Velocity laws V(t, x, xi), the assembled transport field, and the
Lipschitz / divergence bounds of the field b(t, x) = V(t, x, (u * eta)(t, x)).

Unspecified constants are fixed as K1 = d * L and K2 = d * N * L * ||eta||,
the bluntest choice that bounds div b term by term. When V carries
closed-form derivatives the sharper sup |d_x V| and sup |d_xi V| replace L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolation
from .fields import ConvolutionResult
from .kernels import Kernel

VelocityFunc = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VelocityModel:
    """V(t, x, xi) with joint Lipschitz constant ``lipschitz``.

    ``dx`` and ``dxi`` are optional closed forms of d_x V and d_xi V (1D
    scalar case); ``dx_sup`` / ``dxi_sup`` are their suprema.
    """

    func: VelocityFunc
    lipschitz: float
    dim: int = 1
    codim: int = 1
    dx: VelocityFunc | None = None
    dxi: VelocityFunc | None = None
    dx_sup: float | None = None
    dxi_sup: float | None = None
    name: str = "custom"

    def __call__(self, t: float, x, xi) -> np.ndarray:
        return self.func(t, np.asarray(x, dtype=float), np.asarray(xi, dtype=float))


def _identity(t, x, xi):
    return np.array(xi, dtype=float, copy=True)


def _zero(t, x, xi):
    return np.zeros(np.shape(xi))


def _one(t, x, xi):
    return np.ones(np.shape(xi))


def make_identity_velocity(dim: int = 1) -> VelocityModel:
    """V(t, x, xi) = xi (so N = d), L = 1."""
    return VelocityModel(
        func=_identity, lipschitz=1.0, dim=dim, codim=dim,
        dx=_zero, dxi=_one, dx_sup=0.0, dxi_sup=1.0, name="identity",
    )


def make_affine_desired_velocity(desired: float, slope: float = 0.0) -> VelocityModel:
    """Pedestrian form V = V_d(x) + xi with V_d(x) = desired + slope * x."""

    def func(t, x, xi):
        return desired + slope * x + xi

    def dx(t, x, xi):
        return np.full(np.shape(xi), float(slope))

    return VelocityModel(
        func=func, lipschitz=max(1.0, abs(slope)), dx=dx, dxi=_one,
        dx_sup=abs(slope), dxi_sup=1.0,
        name=f"affine_desired(desired={desired:.17g},slope={slope:.17g})",
    )


def make_constant_velocity(speed: float) -> VelocityModel:
    """V = speed, ignoring the nonlocal argument. Used for sanity runs."""

    def func(t, x, xi):
        return np.full(np.shape(xi), float(speed))

    return VelocityModel(
        func=func, lipschitz=0.0, dx=_zero, dxi=_zero, dx_sup=0.0, dxi_sup=0.0,
        name=f"constant({speed:.17g})",
    )


def lipschitz_spot_check(
    V: VelocityModel, n_pairs: int = 1000, seed: int = 0, box: float = 10.0
) -> float:
    """Largest observed |dV| / (|dt| + |dx| + |dxi|) over random pairs."""
    rng = np.random.default_rng(seed)
    shape = (n_pairs,) if V.dim == 1 else (n_pairs, V.dim)
    xi_shape = (n_pairs,) if V.codim == 1 else (n_pairs, V.codim)
    t1, t2 = rng.uniform(0.0, box, (2, n_pairs))
    x1, x2 = rng.uniform(-box, box, (2,) + shape)
    y1, y2 = rng.uniform(-box, box, (2,) + xi_shape)
    ratios = np.empty(n_pairs)
    for i in range(n_pairs):
        dv = np.linalg.norm(np.atleast_1d(V(t1[i], x1[i], y1[i]) - V(t2[i], x2[i], y2[i])))
        dist = abs(t1[i] - t2[i]) + np.linalg.norm(np.atleast_1d(x1[i] - x2[i])) + np.linalg.norm(
            np.atleast_1d(y1[i] - y2[i])
        )
        ratios[i] = dv / dist
    return float(ratios.max())


@dataclass(frozen=True)
class TransportField:
    """Snapshot x -> b(t, x), defined only at the convolution's points."""

    t: float
    points: np.ndarray
    values: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        order = np.argsort(self.points, kind="stable")
        sp = self.points[order]
        idx = np.clip(np.searchsorted(sp, x), 0, sp.size - 1)
        if sp.size == 0 or np.any(sp[idx] != x):
            raise ContractViolation("transport field queried at a point with no convolution value")
        return self.values[order[idx]]


def assemble_field(V: VelocityModel, conv: ConvolutionResult, t: float) -> TransportField:
    return TransportField(t, conv.points, V(t, conv.points, conv.values))


def _kernel_norm(k: Kernel, regularity: str, p: float | None) -> float:
    if regularity == "bv":
        return k.total_variation()
    if regularity == "sobolev":
        if p is None:
            raise ValueError("Sobolev bound needs the exponent p")
        g = k.gradient_lp_norm(p)
        if not math.isfinite(g):
            raise ValueError(f"{k.name} has jumps: use the BV bound, not Sobolev({p:g})")
        return g
    raise ValueError(f"unknown regularity {regularity!r}")


def lipschitz_bound(
    V: VelocityModel, k: Kernel, u_norm: float, regularity: str = "bv", p: float | None = None
) -> float:
    """L + L * (TV or ||grad eta||_p) * u_norm.

    ``u_norm`` is ||u||_inf on the BV route and ||u||_q, q = p/(p-1), on the
    Sobolev route.
    """
    L = V.lipschitz
    return L + L * _kernel_norm(k, regularity, p) * u_norm


def divergence_constants(
    V: VelocityModel, k: Kernel, regularity: str = "bv", p: float | None = None
) -> tuple[float, float]:
    d, N, L = V.dim, V.codim, V.lipschitz
    K1 = V.dx_sup if V.dx_sup is not None else d * L
    coupling = V.dxi_sup if V.dxi_sup is not None else L
    K2 = d * N * coupling * _kernel_norm(k, regularity, p)
    return K1, K2


def divergence_bound(
    V: VelocityModel,
    k: Kernel,
    u_norm: float,
    constants: tuple[float, float] | None = None,
    regularity: str = "bv",
    p: float | None = None,
) -> float:
    """Instantaneous bound K1 + K2 * u_norm on |div b|."""
    K1, K2 = constants if constants is not None else divergence_constants(V, k, regularity, p)
    return K1 + K2 * u_norm
