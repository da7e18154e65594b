"""
Sampled joint spectral amplitudes and their brute-force transform to the time
domain.

Frequency grids are n points on [-L, L) with L chosen from the Gaussian model
so that the sampled function and its transform both decay to the same level at
the grid edges. The sinc family is sized from its Gaussian-equivalent envelope;
its sidelobes only decay algebraically and would never meet a fixed edge level.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
import torch
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ..errors import GridTooCoarse
from ..model.gaussian import build_biphoton
from ..model.params import PdcParams

logger = logging.getLogger(__name__)

MIN_GRID_SIZE = 64
EDGE_TOL = 1e-8
SINC_TAYLOR_CUTOFF = 1e-8

Domain = Literal["frequency", "time"]
Family = Literal["sinc", "gaussian"]


@dataclass(frozen=True)
class Grid2D:
    # values[i, j] is the sample at (axis1[i], axis2[j])
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    domain: Domain
    family: Family
    # Gaussian-model level at the edge of this grid and of its transform
    edge_ratio: float
    dual_edge_ratio: float
    params: PdcParams = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.axis1)

    @property
    def step1(self) -> float:
        return float(self.axis1[1] - self.axis1[0])

    @property
    def step2(self) -> float:
        return float(self.axis2[1] - self.axis2[0])

    @property
    def span1(self) -> float:
        return self.step1 * len(self.axis1)

    @property
    def span2(self) -> float:
        return self.step2 * len(self.axis2)

    @property
    def units(self) -> str:
        return "rad/ps" if self.domain == "frequency" else "ps"


def sinc(x):
    """sin(x)/x, with the Taylor series near the removable singularity."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SINC_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x ** 2 / 6.0, np.sin(safe) / safe)


def sinc_half_max() -> float:
    """Abscissa where sinc drops to 1/2 (about 1.8955)."""
    return brentq(lambda x: math.sin(x) / x - 0.5, 1.0, 3.0, xtol=1e-14)


def gaussian_half_max(sigma_s: float) -> float:
    """Abscissa where exp(-x^2/2 sigma_s^2) drops to 1/2."""
    return sigma_s * math.sqrt(2.0 * math.log(2.0))


def _frequency_axis(params: PdcParams, n: int):
    """
    Axis, step and edge levels for an n-point frequency grid.

    The JSA is exp(-x' Lam x / 2) and the JTA exp(-t' Lam^-1 t / 2); L is
    picked so that both edges sit the same number of widths out.
    """
    if n < MIN_GRID_SIZE or n % 2:
        raise GridTooCoarse(f"grid size must be even and >= {MIN_GRID_SIZE}, got {n}")
    lam = build_biphoton(params).lam_matrix
    sigma_f = math.sqrt(float(np.max(np.diag(np.linalg.inv(lam)))))
    sigma_t = math.sqrt(float(np.max(np.diag(lam))))

    half_span = math.sqrt(math.pi * n * sigma_f / (2.0 * sigma_t))
    step = 2.0 * half_span / n
    edge = math.exp(-half_span ** 2 / (2.0 * sigma_f ** 2))
    dual_edge = math.exp(-(math.pi / step) ** 2 / (2.0 * sigma_t ** 2))
    if max(edge, dual_edge) > EDGE_TOL:
        raise GridTooCoarse(
            f"n={n} leaves the amplitude at {max(edge, dual_edge):.2e} of its peak at the grid edge "
            f"(need <= {EDGE_TOL:.0e})",
            edge_ratio=max(edge, dual_edge),
        )
    axis = step * (np.arange(n) - n // 2)
    logger.debug(f"frequency grid n={n} L={half_span:.4g} rad/ps step={step:.4g} edge={edge:.2e}")
    return axis, edge, dual_edge


def _pump(params: PdcParams, w1, w2):
    return np.exp(-((w1 + w2) ** 2) / (4.0 * params.omega_p ** 2))


def jsa_sinc(params: PdcParams, n: int = 512) -> Grid2D:
    axis, edge, dual_edge = _frequency_axis(params, n)
    w1, w2 = np.meshgrid(axis, axis, indexing="ij")
    values = _pump(params, w1, w2) * sinc(params.tau_o * w1 + params.tau_e * w2)
    return Grid2D(axis, axis.copy(), values.astype(complex), "frequency", "sinc", edge, dual_edge, params)


def jsa_gaussian(params: PdcParams, n: int = 512) -> Grid2D:
    axis, edge, dual_edge = _frequency_axis(params, n)
    w1, w2 = np.meshgrid(axis, axis, indexing="ij")
    phase_matching = np.exp(-((params.tau_o * w1 + params.tau_e * w2) ** 2) / (2.0 * params.sigma_s ** 2))
    values = _pump(params, w1, w2) * phase_matching
    return Grid2D(axis, axis.copy(), values.astype(complex), "frequency", "gaussian", edge, dual_edge, params)


def ridge_half_width(g: Grid2D) -> float:
    """
    Half-maximum abscissa of |JSA| along the line w' = -w, found on a cubic
    spline through the grid samples.
    """
    if g.domain != "frequency":
        raise ValueError("ridge_half_width needs a frequency grid")
    n = g.n
    # axis is symmetric about index n/2, so (i, n - i) lies on w' = -w
    idx = np.arange(n // 2, n)
    profile = np.abs(g.values[idx, n - idx])
    spline = CubicSpline(g.axis1[idx], profile)
    below = np.nonzero(profile < 0.5)[0]
    if len(below) == 0:
        raise GridTooCoarse("half maximum lies outside the grid")
    hi = g.axis1[idx[below[0]]]
    return brentq(lambda w: float(spline(w)) - 0.5, 0.0, hi, xtol=1e-14)


@torch.no_grad()
def jta_numeric(g: Grid2D) -> Grid2D:
    """
    J(t, t') = (2 pi)^-2 sum J(w, w') exp(-i w t - i w' t') dw dw' by a
    centred 2-D FFT; t = 2 pi k / (n dw).
    """
    if g.domain != "frequency":
        raise ValueError("jta_numeric needs a frequency grid")
    if g.dual_edge_ratio > EDGE_TOL:
        raise GridTooCoarse(
            f"time window edge at {g.dual_edge_ratio:.2e} of peak", edge_ratio=g.dual_edge_ratio
        )
    h1, h2 = g.step1, g.step2
    x = torch.from_numpy(np.ascontiguousarray(g.values))
    spectrum = torch.fft.fftshift(torch.fft.fft2(torch.fft.ifftshift(x)))
    values = spectrum.numpy() * (h1 * h2 / (2.0 * math.pi) ** 2)

    n1, n2 = g.values.shape
    t1 = 2.0 * math.pi / (n1 * h1) * (np.arange(n1) - n1 // 2)
    t2 = 2.0 * math.pi / (n2 * h2) * (np.arange(n2) - n2 // 2)
    return Grid2D(t1, t2, values, "time", g.family, g.dual_edge_ratio, g.edge_ratio, g.params)


def write_grid_csv(g: Grid2D, path) -> None:
    """Row-major long format with a commented metadata header."""
    a1, a2 = np.meshgrid(g.axis1, g.axis2, indexing="ij")
    df = pd.DataFrame({
        "i": np.repeat(np.arange(g.n), len(g.axis2)),
        "j": np.tile(np.arange(len(g.axis2)), g.n),
        "axis1": a1.ravel(),
        "axis2": a2.ravel(),
        "re": g.values.real.ravel(),
        "im": g.values.imag.ravel(),
    })
    with open(path, "w") as f:
        f.write(f"# domain={g.domain} family={g.family} units={g.units}\n")
        f.write(f"# n1={g.n} step1={g.step1!r} span1={g.span1!r}\n")
        f.write(f"# n2={len(g.axis2)} step2={g.step2!r} span2={g.span2!r}\n")
        df.to_csv(f, index=False, float_format="%.17g")
