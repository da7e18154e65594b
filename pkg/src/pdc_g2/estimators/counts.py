"""
Count-ratio estimators of g2 from a detection record.

Click times are taken relative to their pulse epoch and binned with width
`window`. For a delay tau, each D2 click is shifted by -tau and assigned to
the nearest pulse epoch (the reference pulse); a coincidence is a D1 click and
a shifted D2 click in the same reference pulse and bin. Sums over bins give

    g2(tau)    = sum N12 * N   / sum N1  * N2
    g2_sh(tau) = sum N12h * N  / sum N1h * N2
    g2_dh(tau) = sum N12h * Nh / sum N1h * N2h

with the herald always taken in the reference pulse.
"""
import logging
import math
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from ..errors import DegenerateEstimate, EmptyRecord, NoHeralds, WindowTooWide
from ..sim.detection import D1, D2, D3, DetectionRecord

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_FRACTION = 1.0 / 200.0
# D2 may be paired with the next or previous pulse, no further
MAX_PULSE_OFFSET = 1
BOOTSTRAP_BLOCKS = 64
# click-rate inversion: curvature floor relative to mu^2, and largest K solved for
MIN_CURVATURE = 1e-9
K_MAX = 1e3


@dataclass(frozen=True)
class Curve:
    tau_ns: np.ndarray
    value: np.ndarray
    stderr: np.ndarray


@dataclass
class CountAccumulator:
    """
    Additive tallies over a set of pulses; `merge` is elementwise addition so
    disjoint pulse ranges can be accumulated apart and combined.
    """
    window: float
    period: float
    tau_grid: np.ndarray
    n_pulses: int
    n_heralds: int
    # binned, shape (n_bins,) or (n_tau, n_bins)
    n1: np.ndarray
    n1h: np.ndarray
    n2: np.ndarray
    n2h: np.ndarray
    n12: np.ndarray
    n12h: np.ndarray
    # whole-pulse tallies
    pulses_d1: int
    pulses_d2: int
    pulses_d1d2: int
    pulses_d1d3: int
    pulses_d2d3: int
    pulses_d1d2d3: int

    @property
    def n_bins(self) -> int:
        return len(self.n1)

    def merge(self, other: "CountAccumulator") -> "CountAccumulator":
        if (self.window, self.period) != (other.window, other.period) or not np.array_equal(
                self.tau_grid, other.tau_grid):
            raise ValueError("cannot merge accumulators with different windows or delay grids")
        merged = {}
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name in ("window", "period", "tau_grid"):
                merged[f.name] = a
            else:
                merged[f.name] = a + b
        return CountAccumulator(**merged)


def default_window(period_ns: float) -> float:
    return period_ns * DEFAULT_WINDOW_FRACTION


def default_tau_grid(period_ns: float, window: float) -> np.ndarray:
    """Delays on [-period/4, period/4] in steps of the window."""
    n = int(math.floor(0.25 * period_ns / window))
    return window * np.arange(-n, n + 1)


def _check_window(window: float, period: float, tau_grid: np.ndarray):
    if not window > 0:
        raise WindowTooWide(f"window must be positive, got {window}")
    if window > period:
        raise WindowTooWide(f"window {window} ns exceeds the repetition period {period} ns")
    reach = (MAX_PULSE_OFFSET + 0.5) * period
    if len(tau_grid) and np.max(np.abs(tau_grid)) > reach:
        raise WindowTooWide(f"|tau| up to {np.max(np.abs(tau_grid)):.4g} ns reaches beyond the neighbouring pulse")


def _bin(times: np.ndarray, period: float, window: float, n_bins: int, tau: float = 0.0):
    """(reference pulse, bin, valid mask) for absolute times shifted by -tau."""
    shifted = times - tau
    ref = np.floor(shifted / period + 0.5).astype(np.int64)
    rel = shifted - ref * period
    b = np.floor((rel + 0.5 * period) / window).astype(np.int64)
    return ref, b, (b >= 0) & (b < n_bins)


def _whole_pulse_tallies(pulse_index: np.ndarray, detector: np.ndarray) -> Dict[str, int]:
    s1 = np.unique(pulse_index[detector == D1])
    s2 = np.unique(pulse_index[detector == D2])
    s3 = np.unique(pulse_index[detector == D3])
    s12 = np.intersect1d(s1, s2, assume_unique=True)
    return {
        "pulses_d1": len(s1),
        "pulses_d2": len(s2),
        "pulses_d1d2": len(s12),
        "pulses_d1d3": len(np.intersect1d(s1, s3, assume_unique=True)),
        "pulses_d2d3": len(np.intersect1d(s2, s3, assume_unique=True)),
        "pulses_d1d2d3": len(np.intersect1d(s12, s3, assume_unique=True)),
    }


def accumulate(rec: DetectionRecord, window: Optional[float] = None, tau_grid=None,
               pulse_range: Optional[Tuple[int, int]] = None) -> CountAccumulator:
    """Tally the clicks of rec, optionally only those in pulses [start, stop)."""
    if not rec.truth:
        raise EmptyRecord("record carries no run metadata")
    period = rec.period_ns
    window = default_window(period) if window is None else float(window)
    tau_grid = default_tau_grid(period, window) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    _check_window(window, period, tau_grid)
    n_bins = int(math.ceil(period / window))

    pulse_index, detector, time_ns = rec.pulse_index, rec.detector, rec.time_ns
    if pulse_range is not None:
        start, stop = pulse_range
        keep = (pulse_index >= start) & (pulse_index < stop)
        pulse_index, detector, time_ns = pulse_index[keep], detector[keep], time_ns[keep]
        n_pulses = stop - start
    else:
        n_pulses = rec.n_pulses

    t1 = time_ns[detector == D1]
    t2 = time_ns[detector == D2]
    p3 = np.unique(pulse_index[detector == D3])

    ref1, b1, ok1 = _bin(t1, period, window, n_bins)
    if not np.all(ok1):
        logger.debug(f"{np.count_nonzero(~ok1)} D1 clicks fall outside the binned period")
    ref1, b1 = ref1[ok1], b1[ok1]
    key1 = ref1 * n_bins + b1
    h1 = np.isin(ref1, p3)

    n_tau = len(tau_grid)
    n2 = np.zeros((n_tau, n_bins), dtype=np.int64)
    n2h = np.zeros_like(n2)
    n12 = np.zeros_like(n2)
    n12h = np.zeros_like(n2)
    for i, tau in enumerate(tau_grid):
        ref2, b2, ok2 = _bin(t2, period, window, n_bins, tau)
        ref2, b2 = ref2[ok2], b2[ok2]
        h2 = np.isin(ref2, p3)
        n2[i] = np.bincount(b2, minlength=n_bins)
        n2h[i] = np.bincount(b2[h2], minlength=n_bins)
        common = np.intersect1d(key1, ref2 * n_bins + b2, assume_unique=True)
        hc = np.isin(common // n_bins, p3)
        n12[i] = np.bincount(common % n_bins, minlength=n_bins)
        n12h[i] = np.bincount(common[hc] % n_bins, minlength=n_bins)

    return CountAccumulator(
        window=window,
        period=period,
        tau_grid=tau_grid,
        n_pulses=int(n_pulses),
        n_heralds=len(p3),
        n1=np.bincount(b1, minlength=n_bins),
        n1h=np.bincount(b1[h1], minlength=n_bins),
        n2=n2,
        n2h=n2h,
        n12=n12,
        n12h=n12h,
        **_whole_pulse_tallies(pulse_index, detector),
    )


def _ratio(num_counts: np.ndarray, scale: float, den: np.ndarray, trials: float):
    """value = num * scale / den with a binomial error on num out of trials."""
    num = num_counts.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = num * scale / den
        rel = np.sqrt(np.clip(1.0 - num / trials, 0.0, None) / num)
        stderr = np.where(num > 0, value * rel, scale / den)
    # NaN where no singles overlap at this delay
    empty = den == 0
    return np.where(empty, np.nan, value), np.where(empty, np.nan, stderr)


def g2_curve(acc: CountAccumulator) -> Curve:
    if acc.n1.sum() == 0 or acc.n2.sum() == 0:
        raise EmptyRecord("no D1 or no D2 clicks to correlate")
    den = np.einsum("k,tk->t", acc.n1.astype(float), acc.n2.astype(float))
    if np.all(den == 0):
        raise EmptyRecord("no delay has overlapping singles")
    value, stderr = _ratio(acc.n12.sum(axis=1), acc.n_pulses, den, acc.n_pulses)
    return Curve(acc.tau_grid, value, stderr)


def heralded_curves(acc: CountAccumulator) -> Tuple[Curve, Curve]:
    if acc.n_heralds == 0:
        raise NoHeralds("record contains no D3 clicks")
    if acc.n1h.sum() == 0 or acc.n2.sum() == 0:
        raise EmptyRecord("no heralded D1 clicks or no D2 clicks")
    n1h = acc.n1h.astype(float)
    num = acc.n12h.sum(axis=1)
    den_sh = np.einsum("k,tk->t", n1h, acc.n2.astype(float))
    den_dh = np.einsum("k,tk->t", n1h, acc.n2h.astype(float))
    if np.all(den_sh == 0) or np.all(den_dh == 0):
        raise EmptyRecord("no delay has overlapping heralded singles")
    sh, sh_err = _ratio(num, acc.n_pulses, den_sh, acc.n_heralds)
    dh, dh_err = _ratio(num, acc.n_heralds, den_dh, acc.n_heralds)
    return Curve(acc.tau_grid, sh, sh_err), Curve(acc.tau_grid, dh, dh_err)


def block_accumulators(rec: DetectionRecord, window, tau_grid, blocks: int) -> List[CountAccumulator]:
    edges = np.linspace(0, rec.n_pulses, blocks + 1).astype(np.int64)
    return [accumulate(rec, window, tau_grid, (a, b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def bootstrap_stderr(rec: DetectionRecord, window=None, tau_grid=None, replicas: int = 200,
                     blocks: int = BOOTSTRAP_BLOCKS, seed: int = 0) -> Dict[str, np.ndarray]:
    """
    Standard errors of the g2 curves from resampling contiguous pulse blocks.
    Coincidences that straddle a block edge at cross-period delays are lost.
    """
    parts = block_accumulators(rec, window, tau_grid, blocks)
    rng = np.random.Generator(np.random.Philox(seed))
    samples = {"g2": [], "g2_sh": [], "g2_dh": []}
    for _ in range(replicas):
        pick = rng.integers(0, len(parts), size=len(parts))
        acc = parts[pick[0]]
        for j in pick[1:]:
            acc = acc.merge(parts[j])
        try:
            samples["g2"].append(g2_curve(acc).value)
            if acc.n_heralds:
                sh, dh = heralded_curves(acc)
                samples["g2_sh"].append(sh.value)
                samples["g2_dh"].append(dh.value)
        except EmptyRecord:
            continue
    return {k: np.nanstd(np.array(v), axis=0, ddof=1) for k, v in samples.items() if len(v) > 1}


def g2_from_counts(rec: DetectionRecord, window: Optional[float] = None, tau_grid=None) -> Curve:
    if len(rec) == 0:
        raise EmptyRecord("record has no clicks")
    return g2_curve(accumulate(rec, window, tau_grid))


def heralded_g2_from_counts(rec: DetectionRecord, window: Optional[float] = None, tau_grid=None) -> Tuple[Curve, Curve]:
    if len(rec) == 0:
        raise EmptyRecord("record has no clicks")
    return heralded_curves(accumulate(rec, window, tau_grid))


def _integrated(n_pulses: int, d1: int, d2: int, d12: int) -> Tuple[float, float]:
    if d1 == 0 or d2 == 0:
        raise EmptyRecord("no D1 or no D2 clicks")
    g2_int = n_pulses * d12 / (d1 * d2)
    if g2_int <= 1.0:
        raise DegenerateEstimate(f"g2_int = {g2_int:.4g} <= 1: mode number unbounded", value=g2_int)
    return g2_int, 1.0 / (g2_int - 1.0)


def g2_integrated(rec: DetectionRecord) -> Tuple[float, float]:
    """Whole-pulse g2_int = N N12 / (N1 N2) and k_est = 1 / (g2_int - 1)."""
    if len(rec) == 0:
        raise EmptyRecord("record has no clicks")
    t = _whole_pulse_tallies(rec.pulse_index, rec.detector)
    return _integrated(rec.n_pulses, t["pulses_d1"], t["pulses_d2"], t["pulses_d1d2"])


def integrated_from_accumulator(acc: CountAccumulator) -> Tuple[float, float]:
    return _integrated(acc.n_pulses, acc.pulses_d1, acc.pulses_d2, acc.pulses_d1d2)


def _log_g_geometric(mu: float, k: float, s: float) -> float:
    """log E[s^m] for a geometric Schmidt spectrum with number K."""
    r = (k - 1.0) / (k + 1.0)
    n_modes = 1 if r <= 0 else int(min(10000, math.ceil(math.log(1e-17) / math.log(r)) + 1))
    lam = (2.0 / (k + 1.0)) * r ** np.arange(n_modes)
    return float(-np.sum(np.log1p(mu * lam * (1.0 - s))))


def _mu_matching(lg_half: float, k: float) -> float:
    """mu with log G(1/2) = lg_half for spectrum K; -mu/2 >= log G(1/2) >= -log(1 + mu/2) brackets it."""
    lo, hi = -2.0 * lg_half, 2.0 * math.expm1(-lg_half)
    return brentq(lambda mu: _log_g_geometric(mu, k, 0.5) - lg_half,
                  lo * (1.0 - 1e-9), hi * (1.0 + 1e-9), xtol=1e-300, rtol=1e-15)


def k_from_click_probabilities(p_none1: float, p_none2: float, p_none12: float) -> Tuple[float, float]:
    """
    (mu, K) from the no-click probabilities of D1, D2 and of both.

    To second order in mu, log G(1/2) = -mu/2 + mu^2/(8K) and
    log G(0) = -mu + mu^2/(2K), so the curvature -4 (2 log G(1/2) - log G(0))
    is mu^2 / K. The full geometric-spectrum generating function is then
    solved in w = 1/K on [1/K_MAX, 1], with mu fixed by the D1/D2 rate for
    each w. Rates that point below K = 1 give K = 1.
    """
    for p in (p_none1, p_none2, p_none12):
        if not 0.0 < p < 1.0:
            raise DegenerateEstimate(f"no-click probability {p} outside (0, 1)", value=p)
    lg_half = 0.5 * (math.log(p_none1) + math.log(p_none2))
    lg_zero = math.log(p_none12)
    mu0 = -(4.0 * lg_half - lg_zero)
    curv = -4.0 * (2.0 * lg_half - lg_zero)
    if not (mu0 > 0 and curv > MIN_CURVATURE * mu0 ** 2):
        raise DegenerateEstimate(f"click rates imply mu={mu0:.3g}, curvature={curv:.3g}", value=curv)

    def mismatch(w):
        k = 1.0 / w
        return _log_g_geometric(_mu_matching(lg_half, k), k, 0.0) - lg_zero

    w_min = 1.0 / K_MAX
    at_one, at_min = mismatch(1.0), mismatch(w_min)
    if at_one * at_min <= 0.0:
        w = brentq(mismatch, w_min, 1.0, xtol=1e-15, rtol=1e-15)
    elif abs(at_one) < abs(at_min):
        w = 1.0
    else:
        raise DegenerateEstimate(f"click rates imply more than {K_MAX:g} modes", value=curv)
    k = 1.0 / w
    return _mu_matching(lg_half, k), k


def k_from_click_rates(rec: DetectionRecord) -> Tuple[float, float]:
    """(mu, K) from the fractions of pulses without D1, without D2 and without either."""
    n = rec.n_pulses
    if n == 0:
        raise EmptyRecord("record has no pulses")
    p1 = np.unique(rec.pulse_index[rec.detector == D1])
    p2 = np.unique(rec.pulse_index[rec.detector == D2])
    either = len(np.union1d(p1, p2))
    return k_from_click_probabilities(1.0 - len(p1) / n, 1.0 - len(p2) / n, 1.0 - either / n)
