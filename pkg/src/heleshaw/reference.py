"""Closed-form reference objects: the flat profile, planar cone harmonics, the
critical-angle quadratic and the linearized graph evolution about ``h = 0``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionUnsupported


def v0(t, xN):
    """Transformed pressure of the fluid at rest: ``int_0^t max(0, s - x_N) ds``.

    Piecewise ``t(t/2 - x)`` for ``x < 0``, ``(t - x)^2 / 2`` on ``[0, t]``, and 0 above.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(xN, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = np.where(x < 0, t * (0.5 * t - x), 0.5 * np.square(np.maximum(t - x, 0.0)))
    return out if out.ndim else float(out)


def critical_angle(d: int) -> float:
    """Aperture at which the cone exponent equals 2: ``2 arctan(sqrt(d))``."""
    return 2.0 * math.atan(math.sqrt(d))


@dataclass(frozen=True)
class ConeSpec:
    apex: tuple[float, ...]
    alpha: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 2 * math.pi:
            raise ValueError("cone aperture must lie in (0, 2*pi)")
        if len(self.apex) != self.d + 1:
            raise ValueError("apex must have d + 1 coordinates")


@dataclass(frozen=True)
class ConeExponent:
    alpha: float
    lam: float


def cone_exponent_2d(alpha: float, d: int = 1) -> ConeExponent:
    """Homogeneity of the positive harmonic function on the planar cone: ``pi / alpha``."""
    if d != 1:
        raise DimensionUnsupported("cone exponents are only implemented in the plane")
    if not 0 < alpha <= 2 * math.pi:
        raise ValueError("alpha must lie in (0, 2*pi]")
    return ConeExponent(alpha, math.pi / alpha)


def cone_harmonic_2d(c: ConeSpec, x) -> np.ndarray | float:
    """``r^lam sin(lam * theta) / lam``, theta measured from one wall; zero outside.

    The ``1/lam`` factor gives ``|grad u| = r^(lam - 1)`` on the walls.
    """
    if c.d != 1:
        raise DimensionUnsupported("cone harmonics are only implemented in the plane")
    x = np.asarray(x, dtype=float)
    lam = math.pi / c.alpha
    dx1 = x[..., 0] - c.apex[0]
    dxn = x[..., 1] - c.apex[1]
    r = np.hypot(dx1, dxn)
    # signed angle from the downward axis, then shifted so one wall sits at 0
    theta = np.arctan2(dx1, -dxn) + 0.5 * c.alpha
    inside = (theta > 0) & (theta < c.alpha)
    val = np.where(inside, np.power(r, lam) * np.sin(lam * np.clip(theta, 0, c.alpha)) / lam, 0.0)
    return val if val.ndim else float(val)


def quadratic_harmonic(x, d: int):
    """``d * x_N^2 - |x'|^2``; harmonic, positive on the critical cone, zero on its wall."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d + 1:
        raise ValueError(f"points must have {d + 1} coordinates")
    val = d * x[..., -1] ** 2 - np.sum(x[..., :-1] ** 2, axis=-1)
    return val if np.ndim(val) else float(val)


def wavenumbers(n: int, R: float) -> np.ndarray:
    """Physical angular wavenumbers of the ``n``-point periodic grid on ``[-R, R)``."""
    return 2 * math.pi * np.fft.fftfreq(n, d=2 * R / n)


def linearized_graph_evolution(h0_samples, t: float, R: float = math.pi) -> np.ndarray:
    """Evolve ``dh/dt + |D| h = 0`` exactly: mode ``k`` decays like ``exp(-|k| t)``.

    ``h0_samples`` live on the periodic lateral grid of ``[-R, R)^d``.
    """
    h0 = np.asarray(h0_samples, dtype=float)
    ks = [wavenumbers(n, R) for n in h0.shape]
    kk = np.sqrt(sum(k ** 2 for k in np.meshgrid(*ks, indexing="ij")))
    return np.real(np.fft.ifftn(np.fft.fftn(h0) * np.exp(-kk * t)))


def mode_amplitude(h_samples, R: float, k: Sequence[float] | float = 1.0) -> float:
    """Amplitude of the ``cos``/``sin`` pair with wavevector ``k`` in periodic samples."""
    h = np.asarray(h_samples, dtype=float)
    lat = np.meshgrid(*[-R + 2 * R / n * np.arange(n) for n in h.shape], indexing="ij")
    k = [k] * h.ndim if np.isscalar(k) else list(k)
    phase = sum(kk * x for kk, x in zip(k, lat))
    a = 2 * np.mean(h * np.cos(phase))
    b = 2 * np.mean(h * np.sin(phase))
    return float(math.hypot(a, b))
