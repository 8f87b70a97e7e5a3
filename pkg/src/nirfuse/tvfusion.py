"""Variational two-observation fusion with a total-variation prior.

Minimizes, over the latent image C,

    E(C) = ||k1 * C - D1||^2 + ||k2 * C - D2||^2 + ||X - C||^2 + lambda * TV(C)

where * is periodic convolution, X is the per-pixel mean of the two
observations (held fixed), and TV is the isotropic discrete total variation
with forward differences. The solver is proximal gradient descent: an
explicit step on the smooth quadratic part followed by a TV proximal step
evaluated with a fixed number of dual (Chambolle-style) projection
iterations. Steps that fail to decrease the energy are shrunk and, as a last
resort, rejected, so the energy sequence is non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, NumericError
from .image import Image, ImageKind, require_same_size

_DELTA = np.array([[1.0]])
_INNER_ITERATIONS = 10  # dual projections per proximal step
_DUAL_STEP = 0.125
_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class TVFusionParams:
    lambda_tv: float = 0.1
    iterations: int = 100
    kernel1: np.ndarray = field(default_factory=lambda: _DELTA.copy())
    kernel2: np.ndarray = field(default_factory=lambda: _DELTA.copy())

    def __post_init__(self):
        if self.lambda_tv < 0.0:
            raise ArgumentError(f"lambda_tv must be >= 0, got {self.lambda_tv}")
        if self.iterations < 0:
            raise ArgumentError(f"iterations must be >= 0, got {self.iterations}")
        for name in ("kernel1", "kernel2"):
            k = np.asarray(getattr(self, name), dtype=np.float64)
            if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ArgumentError(f"{name} must be a 2-D array with odd dimensions")
            if abs(k.sum() - 1.0) > 1e-6:
                raise ArgumentError(f"{name} must sum to 1, got {k.sum()}")
            object.__setattr__(self, name, k)


def _grad(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with Neumann (zero last row/column) boundary."""
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1, :] = a[1:, :] - a[:-1, :]
    return gx, gy


def _div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of _grad."""
    out = np.zeros_like(px)
    out[:, 0] += px[:, 0]
    out[:, 1:] += px[:, 1:] - px[:, :-1]
    out[:, -1] -= px[:, -1]
    out[0, :] += py[0, :]
    out[1:, :] += py[1:, :] - py[:-1, :]
    out[-1, :] -= py[-1, :]
    return out


def total_variation(a: np.ndarray) -> float:
    gx, gy = _grad(np.asarray(a, dtype=np.float64))
    return float(np.hypot(gx, gy).sum())


def _conv(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    if k.shape == (1, 1):
        return a * k[0, 0]
    return ndimage.convolve(a, k, mode="wrap")


def _conv_adjoint(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Periodic convolution's adjoint is periodic correlation.
    if k.shape == (1, 1):
        return a * k[0, 0]
    return ndimage.correlate(a, k, mode="wrap")


def fusion_energy(c: np.ndarray, d1: np.ndarray, d2: np.ndarray, x: np.ndarray,
                  params: TVFusionParams) -> float:
    """The objective E(C); exposed so tests can track solver trajectories."""
    r1 = _conv(c, params.kernel1) - d1
    r2 = _conv(c, params.kernel2) - d2
    value = float(np.sum(r1 * r1) + np.sum(r2 * r2) + np.sum((x - c) ** 2))
    if params.lambda_tv > 0.0:
        value += params.lambda_tv * total_variation(c)
    return value


def _prox_tv(g: np.ndarray, theta: float) -> np.ndarray:
    """argmin_u 0.5 ||u - g||^2 + theta TV(u), by fixed-count dual projection."""
    if theta <= 0.0:
        return g
    px = np.zeros_like(g)
    py = np.zeros_like(g)
    for _ in range(_INNER_ITERATIONS):
        gx, gy = _grad(_div(px, py) - g / theta)
        denom = 1.0 + _DUAL_STEP * np.hypot(gx, gy)
        px = (px + _DUAL_STEP * gx) / denom
        py = (py + _DUAL_STEP * gy) / denom
    return g - theta * _div(px, py)


def tv_bayesian_fusion(
    d1: Image,
    d2: Image,
    params: TVFusionParams | None = None,
    track_energy: bool = False,
):
    """Fuse two single-channel observations through the TV-regularized energy.

    Returns the final estimate as a GRAY image; with ``track_energy=True``
    returns (image, energies) where energies[i] is E(C) after i outer steps.
    With delta kernels and lambda 0 the minimizer is (D1 + D2 + X) / 3; since
    X is fixed at (D1 + D2) / 2, a single exact step reaches it.
    """
    params = params or TVFusionParams()
    for name, img in (("d1", d1), ("d2", d2)):
        if img.channels != 1:
            raise ArgumentError(f"{name} must have one channel, got {img.channels}")
    require_same_size(d1, d2, "observations")

    a1 = d1.plane(0).astype(np.float64)
    a2 = d2.plane(0).astype(np.float64)
    if not (np.isfinite(a1).all() and np.isfinite(a2).all()):
        raise NumericError("non-finite samples in fusion inputs")

    x = 0.5 * (a1 + a2)
    c = x.copy()

    # Lipschitz bound for the smooth part under periodic convolution:
    # 2 (|k1|_1^2 + |k2|_1^2 + 1). Backtracking guards the TV prox besides.
    lip = 2.0 * (
        np.abs(params.kernel1).sum() ** 2 + np.abs(params.kernel2).sum() ** 2 + 1.0
    )
    base_step = 1.0 / lip

    energies = [fusion_energy(c, a1, a2, x, params)]
    for _ in range(params.iterations):
        grad = (
            2.0 * _conv_adjoint(_conv(c, params.kernel1) - a1, params.kernel1)
            + 2.0 * _conv_adjoint(_conv(c, params.kernel2) - a2, params.kernel2)
            + 2.0 * (c - x)
        )
        if not np.isfinite(grad).all():
            raise NumericError("solver state became non-finite")

        step = base_step
        accepted = None
        for _ in range(_MAX_BACKTRACKS):
            candidate = _prox_tv(c - step * grad, step * params.lambda_tv)
            energy = fusion_energy(candidate, a1, a2, x, params)
            if energy <= energies[-1]:
                accepted = (candidate, energy)
                break
            step *= 0.5
        if accepted is None:
            # No step improves: hold position, keep energy flat.
            energies.append(energies[-1])
            continue
        c, energy = accepted
        energies.append(energy)

    result = Image(c, ImageKind.GRAY)
    if track_energy:
        return result, np.asarray(energies)
    return result
