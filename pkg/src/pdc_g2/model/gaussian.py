"""
Closed forms of the double-Gaussian model: JTA, first- and second-order
correlation functions, widths, global coherence, magnified and heralded
autocorrelation functions, temporal imaging and feasibility bounds.

All time arguments accept scalars or numpy arrays.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import erfc

from ..errors import (
    ImagingConditionViolated,
    InvalidProbability,
    NonPositiveInput,
    ZeroDispersion,
    ZeroMagnification,
)
from .params import PdcParams
from .schmidt import schmidt_number

SPEED_OF_LIGHT = 299792458.0
IMAGING_TOL = 1e-9


@dataclass(frozen=True)
class GaussianBiphoton:
    params: PdcParams
    # M, ps^-2
    m11: float
    m22: float
    m12: float
    # Lambda = M^-1 / 2, ps^2
    lam11: float
    lam22: float
    lam12: float
    delta_t_o: float
    delta_tau_o: float
    coherence_c: float
    # P_b without the (gamma L alpha_0)^2 coupling, ps^-2
    pair_prob_shape: float
    k_number: float

    @property
    def m_matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    @property
    def lam_matrix(self) -> np.ndarray:
        return np.array([[self.lam11, self.lam12], [self.lam12, self.lam22]])

    @property
    def jta_peak(self) -> float:
        """J(0, 0) of the transform of a unit-peak JSA, ps^-2."""
        return 2.0 * self.pair_prob_shape


@dataclass(frozen=True)
class ImagingSystem:
    d_in: float
    d_out: float
    d_f: float
    magnification: float


def build_biphoton(params: PdcParams) -> GaussianBiphoton:
    t_o, t_e, w = params.t_o, params.t_e, params.omega_p
    diff2 = (t_o - t_e) ** 2
    cross = 1.0 + t_o * t_e

    scale_m = w ** 2 / diff2
    scale_lam = 1.0 / (2.0 * w ** 2)

    delta_t_o = math.sqrt(1.0 + t_o ** 2) / (2.0 * w)
    delta_tau_o = abs(t_o - t_e) * math.sqrt(1.0 + t_o ** 2) / (w * abs(cross))

    return GaussianBiphoton(
        params=params,
        m11=scale_m * (1.0 + t_e ** 2),
        m22=scale_m * (1.0 + t_o ** 2),
        m12=-scale_m * cross,
        lam11=scale_lam * (1.0 + t_o ** 2),
        lam22=scale_lam * (1.0 + t_e ** 2),
        lam12=scale_lam * cross,
        delta_t_o=delta_t_o,
        delta_tau_o=delta_tau_o,
        coherence_c=2.0 * abs(t_o - t_e) / abs(cross),
        pair_prob_shape=w ** 2 / (2.0 * math.pi * abs(t_e - t_o)),
        k_number=schmidt_number(params),
    )


def jta(b: GaussianBiphoton, t, t_prime):
    """Zero-centred JTA in relative units, 1 at the origin."""
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    return np.exp(-b.m11 * t ** 2 - b.m22 * t_prime ** 2 - 2.0 * b.m12 * t * t_prime)


def intensity(b: GaussianBiphoton, t):
    """Mean intensity of the ordinary wave as a unit-area density (ps^-1)."""
    t = np.asarray(t, dtype=float)
    s = b.delta_t_o
    return np.exp(-t ** 2 / (2.0 * s ** 2)) / (math.sqrt(2.0 * math.pi) * s)


def intensity_magnified(b: GaussianBiphoton, m: float, t):
    """Arrival-time density after a temporal imaging system of magnification m."""
    if m == 0:
        raise ZeroMagnification("magnification must be nonzero")
    return intensity(b, np.asarray(t, dtype=float) / m) / abs(m)


def g1_normalized(b: GaussianBiphoton, tau):
    tau = np.asarray(tau, dtype=float)
    return np.exp(-tau ** 2 / (2.0 * b.delta_tau_o ** 2))


def g1_unnormalized(b: GaussianBiphoton, t, tau):
    """G1_d(t, tau) / (E_o^2 P_b) = sqrt(I(t) I(t+tau)) g1(tau)."""
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return np.sqrt(intensity(b, t) * intensity(b, t + tau)) * g1_normalized(b, tau)


def g2(b: GaussianBiphoton, tau):
    return 1.0 + g1_normalized(b, tau) ** 2


def g2_magnified(b: GaussianBiphoton, m: float, tau):
    if m == 0:
        raise ZeroMagnification("magnification must be nonzero")
    return g2(b, np.asarray(tau, dtype=float) / m)


def magnified_widths(b: GaussianBiphoton, m: float) -> Tuple[float, float]:
    """(Delta t_M, Delta tau_M): std devs of the arrival times and of g2_im - 1."""
    if m == 0:
        raise ZeroMagnification("magnification must be nonzero")
    return abs(m) * b.delta_t_o, abs(m) * b.delta_tau_o / math.sqrt(2.0)


def _check_probability(p_b):
    if not 0.0 < p_b < 1.0:
        raise InvalidProbability(f"p_b must lie in (0, 1), got {p_b}")


def heralded_g2(b: GaussianBiphoton, p_b: float, tau, in_same_period: bool = True):
    """(g2_sh, g2_dh) at delay tau."""
    _check_probability(p_b)
    if not in_same_period:
        ones = np.ones_like(np.asarray(tau, dtype=float))
        return ones, ones.copy()
    base = g2(b, tau)
    g2_sh = base * (1.0 + 0.5 * p_b) / (1.0 + p_b)
    g2_dh = base * (1.0 + 0.5 * p_b) * p_b / (1.0 + p_b) ** 2
    return g2_sh, g2_dh


def integrated_cross_correlation(p_b: float, in_same_period: bool = True) -> float:
    _check_probability(p_b)
    return 1.0 + 1.0 / p_b if in_same_period else 1.0


def events_outside(c: float, n_events: float) -> float:
    """Expected number of detections outside +-C*Delta t_M of the peak."""
    if not n_events > 0:
        raise NonPositiveInput(f"n_events must be positive, got {n_events}")
    return n_events * float(erfc(c / math.sqrt(2.0)))


def feasibility(b: GaussianBiphoton, n_events: float, m: float) -> Tuple[float, float]:
    """(n_out, max repetition rate in MHz) for fitting g2_im - 1 over its sigma area."""
    if m == 0:
        raise ZeroMagnification("magnification must be nonzero")
    n_out = events_outside(b.coherence_c, n_events)
    # 1/ps -> MHz
    max_rate = 1e6 / (math.sqrt(2.0) * abs(m) * b.coherence_c * b.delta_t_o)
    return n_out, max_rate


def lens_focal_gdd(d_in: float, d_out: float) -> float:
    """Focal GDD of the time lens that images D_in onto D_out."""
    if d_in == 0 or d_out == 0:
        raise ZeroDispersion("input and output GDD must be nonzero")
    inv = 1.0 / d_in + 1.0 / d_out
    if inv == 0:
        raise ZeroDispersion("D_out = -D_in needs an infinite focal GDD")
    return 1.0 / inv


def check_imaging(d_in: float, d_out: float, d_f: float, tol: float = IMAGING_TOL) -> ImagingSystem:
    if d_in == 0 or d_out == 0 or d_f == 0:
        raise ZeroDispersion(f"GDDs must be nonzero, got d_in={d_in}, d_out={d_out}, d_f={d_f}")
    residual = abs(1.0 / d_in + 1.0 / d_out - 1.0 / d_f) * abs(d_f)
    if residual > tol:
        raise ImagingConditionViolated(residual, tol)
    return ImagingSystem(d_in=d_in, d_out=d_out, d_f=d_f, magnification=-d_out / d_in)


def bandwidth(params: PdcParams, wavelength_nm: Optional[float] = None) -> dict:
    """
    Pump spectral scale in the units quoted for lasers: Omega_p/2pi and the
    intensity-spectrum FWHM in GHz, and the FWHM in nm if a wavelength is given.
    """
    omega_ghz = params.omega_p / (2.0 * math.pi) * 1e3
    fwhm_ghz = 2.0 * math.sqrt(2.0 * math.log(2.0)) * omega_ghz
    out = {"omega_p": params.omega_p, "omega_p_ghz": omega_ghz, "fwhm_ghz": fwhm_ghz}
    wavelength_nm = wavelength_nm if wavelength_nm is not None else params.pump_wavelength
    if wavelength_nm is not None:
        lam = wavelength_nm * 1e-9
        out["fwhm_nm"] = lam ** 2 * fwhm_ghz * 1e9 / SPEED_OF_LIGHT * 1e9
    return out
