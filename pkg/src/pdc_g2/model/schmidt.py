"""
Schmidt (Mercer) decomposition of the double-Gaussian JTA.

    J(t, t') / J_1 = sqrt(pi tau1 tau2) * sum_n sqrt(lambda_n) psi_n(t) phi_n(t')

with psi_n, phi_n Hermite-Gauss functions of width tau1, tau2 and
lambda_n = (2/(K+1)) ((K-1)/(K+1))^n. The Mehler parameter q carries the sign
of 1 + t_o t_e; for q < 0 the extraordinary modes pick up a factor (-1)^n.
"""
import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from ..errors import NonPositiveInput, OrderOutOfRange
from .params import PdcParams

DEFAULT_TAIL = 1e-6

Which = Literal["ordinary", "extraordinary"]


@dataclass(frozen=True)
class SchmidtSpectrum:
    k_number: float
    # signed, |q| = sqrt((K-1)/(K+1))
    q: float
    lambdas: Tuple[float, ...]
    tau1: float
    tau2: float
    n_max: int

    @property
    def ratio(self) -> float:
        """lambda_{n+1} / lambda_n = q^2."""
        return self.q ** 2

    @property
    def tail(self) -> float:
        """Weight left out by the truncation, 1 - sum(lambdas)."""
        return self.ratio ** (self.n_max + 1)

    @property
    def k_truncated(self) -> float:
        return 1.0 / float(np.sum(np.square(self.lambdas)))


def schmidt_number(params: PdcParams) -> float:
    t_o, t_e = params.t_o, params.t_e
    return math.sqrt((1.0 + t_o ** 2) * (1.0 + t_e ** 2)) / abs(t_o - t_e)


def k_symmetric(t_o: float) -> float:
    """K for tau_o = -tau_e; minimal (K = 1) at t_o = 1."""
    if not t_o > 0:
        raise NonPositiveInput(f"t_o must be positive, got {t_o}")
    return 0.5 * (1.0 / t_o + t_o)


def inv_coherence_symmetric(t_o: float) -> float:
    """1/C for tau_o = -tau_e; zero at t_o = 1."""
    if not t_o > 0:
        raise NonPositiveInput(f"t_o must be positive, got {t_o}")
    return 0.25 * abs(1.0 / t_o - t_o)


def k_from_c(c: float) -> float:
    """K^2 = 1 + 4/C^2."""
    if not c > 0:
        raise NonPositiveInput(f"coherence degree must be positive, got {c}")
    return math.sqrt(1.0 + 4.0 / c ** 2)


def purity(k: float) -> float:
    return 1.0 / k


def adaptive_n_max(k: float, tail: float = DEFAULT_TAIL) -> int:
    """Smallest n_max with sum_{n > n_max} lambda_n < tail."""
    ratio = (k - 1.0) / (k + 1.0)
    if ratio <= 0.0:
        return 0
    n_max = max(0, math.ceil(math.log(tail) / math.log(ratio)) - 1)
    # guard against rounding at the boundary
    while ratio ** (n_max + 1) >= tail:
        n_max += 1
    return n_max


def schmidt_spectrum(params: PdcParams, n_max: Optional[int] = None, tail: float = DEFAULT_TAIL) -> SchmidtSpectrum:
    k = schmidt_number(params)
    if n_max is None:
        n_max = adaptive_n_max(k, tail)
    if n_max < 0:
        raise OrderOutOfRange(f"n_max must be >= 0, got {n_max}")

    ratio = (k - 1.0) / (k + 1.0)
    lambdas = (2.0 / (k + 1.0)) * ratio ** np.arange(n_max + 1)

    t_o, t_e, w = params.t_o, params.t_e, params.omega_p
    base = math.sqrt(abs(t_o - t_e)) / (math.sqrt(2.0) * w)
    tau1 = base * ((1.0 + t_o ** 2) / (1.0 + t_e ** 2)) ** 0.25
    tau2 = base * ((1.0 + t_e ** 2) / (1.0 + t_o ** 2)) ** 0.25

    return SchmidtSpectrum(
        k_number=k,
        q=math.copysign(math.sqrt(ratio), 1.0 + t_o * t_e),
        lambdas=tuple(float(v) for v in lambdas),
        tau1=tau1,
        tau2=tau2,
        n_max=n_max,
    )


def hermite_gauss_all(n_max: int, x) -> np.ndarray:
    """
    h_0 .. h_{n_max} at x, shape (n_max + 1, *x.shape).

    Uses the recurrence of the normalized functions,
        h_{n+1} = sqrt(2/(n+1)) x h_n - sqrt(n/(n+1)) h_{n-1},
    which stays finite where H_n(x) itself overflows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x ** 2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def _scale(s: SchmidtSpectrum, which: Which) -> float:
    if which == "ordinary":
        return s.tau1
    if which == "extraordinary":
        return s.tau2
    raise ValueError(f"which must be 'ordinary' or 'extraordinary', got {which!r}")


def schmidt_modes(s: SchmidtSpectrum, t, which: Which = "ordinary") -> np.ndarray:
    """All modes 0..n_max at t, in ps^-1/2."""
    tau = _scale(s, which)
    return hermite_gauss_all(s.n_max, np.asarray(t, dtype=float) / tau) / math.sqrt(tau)


def mode_function(s: SchmidtSpectrum, n: int, t, which: Which = "ordinary"):
    if not 0 <= n <= s.n_max:
        raise OrderOutOfRange(f"mode order {n} outside [0, {s.n_max}]")
    tau = _scale(s, which)
    return hermite_gauss_all(n, np.asarray(t, dtype=float) / tau)[n] / math.sqrt(tau)


def mercer_g1(s: SchmidtSpectrum, t, tau):
    """sum_n lambda_n psi_n(t) psi_n(t + tau), truncated at n_max."""
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    t, tau = np.broadcast_arrays(t, tau)
    lam = np.asarray(s.lambdas).reshape((-1,) + (1,) * t.ndim)
    return np.sum(lam * schmidt_modes(s, t) * schmidt_modes(s, t + tau), axis=0)


def mehler_jta(s: SchmidtSpectrum, t, t_prime, n_max: Optional[int] = None):
    """Truncated Schmidt sum for the JTA, in the relative units of gaussian.jta."""
    n_max = s.n_max if n_max is None else n_max
    if not 0 <= n_max <= s.n_max:
        raise OrderOutOfRange(f"n_max {n_max} outside [0, {s.n_max}]")
    t, t_prime = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(t_prime, dtype=float))
    sqrt_lam = np.sqrt(np.asarray(s.lambdas[: n_max + 1])).reshape((-1,) + (1,) * t.ndim)
    psi = hermite_gauss_all(n_max, t / s.tau1) / math.sqrt(s.tau1)
    # h_n(-x) = (-1)^n h_n(x)
    sign = -1.0 if s.q < 0 else 1.0
    phi = hermite_gauss_all(n_max, sign * t_prime / s.tau2) / math.sqrt(s.tau2)
    return math.sqrt(math.pi * s.tau1 * s.tau2) * np.sum(sqrt_lam * psi * phi, axis=0)
