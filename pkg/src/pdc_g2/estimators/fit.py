"""
Gaussian fits of the arrival-time histogram and of g2 - 1, and the report
that collects every estimate from one record.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from ..errors import DegenerateEstimate, EmptyRecord, FitDiverged, NoHeralds
from ..model.schmidt import k_from_c
from ..sim.detection import D1, D2, DetectionRecord
from .counts import (
    Curve,
    accumulate,
    block_accumulators,
    bootstrap_stderr,
    default_tau_grid,
    default_window,
    g2_curve,
    heralded_curves,
    integrated_from_accumulator,
    k_from_click_rates,
)

logger = logging.getLogger(__name__)

MIN_COUNTS = 10
FIT_SIGMAS = 3.0
JACKKNIFE_BLOCKS = 16


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    sigma: float
    baseline: float
    # rms residual over the peak height
    residual: float
    n_points: int


def fit_gaussian(x, y, with_baseline: bool = False, max_iter: int = 500) -> GaussianFit:
    """
    Unweighted least squares of y ~ A exp(-x^2 / 2 s^2) (+ B) with LBFGS on
    log A and log s, started from the second moment of y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < (4 if with_baseline else 3):
        raise FitDiverged(f"only {len(x)} points to fit")
    peak = float(np.max(np.abs(y)))
    if not peak > 0:
        raise FitDiverged("nothing to fit: all values are zero")

    base0 = float(np.min(y)) if with_baseline else 0.0
    w = np.clip(y - base0, 0.0, None)
    s0 = math.sqrt(max(np.sum(w * x ** 2) / max(np.sum(w), 1e-300), 1e-12))
    a0 = max(float(np.max(w)), 1e-12 * peak)

    # unit scale in both axes
    xt = torch.tensor(x / s0, dtype=torch.float64)
    yt = torch.tensor(y / peak, dtype=torch.float64)
    log_a = torch.tensor(math.log(a0 / peak), dtype=torch.float64, requires_grad=True)
    log_s = torch.tensor(0.0, dtype=torch.float64, requires_grad=True)
    base = torch.tensor(base0 / peak, dtype=torch.float64, requires_grad=with_baseline)
    params = [log_a, log_s] + ([base] if with_baseline else [])

    opt = torch.optim.LBFGS(params, lr=1.0, max_iter=max_iter, tolerance_grad=1e-12,
                            tolerance_change=1e-15, line_search_fn="strong_wolfe")

    def model():
        return torch.exp(log_a) * torch.exp(-0.5 * (xt / torch.exp(log_s)) ** 2) + base

    def closure():
        opt.zero_grad()
        loss = F.mse_loss(model(), yt)
        loss.backward()
        return loss

    opt.step(closure)
    with torch.no_grad():
        loss = F.mse_loss(model(), yt).item()
    sigma = s0 * math.exp(log_s.item())
    amplitude = peak * math.exp(log_a.item())
    residual = math.sqrt(loss) if math.isfinite(loss) else float("inf")
    span = float(np.max(np.abs(x)))
    if not (math.isfinite(sigma) and math.isfinite(amplitude) and math.isfinite(loss)) or sigma > 10.0 * span:
        raise FitDiverged(f"Gaussian fit diverged (sigma={sigma:.4g}, loss={loss:.3g})", residual=residual)
    return GaussianFit(amplitude, sigma, peak * base.item(), residual, len(x))


def intensity_histogram(rec: DetectionRecord, window: float) -> Tuple[np.ndarray, np.ndarray]:
    """D1 and D2 arrival times relative to the pulse epoch, binned over one period."""
    period = rec.period_ns
    timed = (rec.detector == D1) | (rec.detector == D2)
    rel = rec.time_ns[timed] - rec.pulse_index[timed] * period
    n_bins = int(math.ceil(period / window))
    edges = -0.5 * period + window * np.arange(n_bins + 1)
    counts, _ = np.histogram(rel, bins=edges)
    return 0.5 * (edges[:-1] + edges[1:]), counts


def fit_intensity(centers, counts, min_counts: int = MIN_COUNTS) -> GaussianFit:
    keep = counts >= min_counts
    if keep.sum() == 0:
        raise EmptyRecord(f"no intensity bin has {min_counts} counts")
    return fit_gaussian(centers[keep], counts[keep])


def fit_bunching(curve: Curve, n12: np.ndarray, min_counts: int = MIN_COUNTS) -> GaussianFit:
    """
    Fit g2 - 1 around tau = 0 with a free baseline, over |tau| <= 3 sigma of a
    first fit, then once more over the new domain.
    """
    usable = n12 >= min_counts
    tau, y = curve.tau_ns[usable], curve.value[usable] - 1.0
    first = fit_gaussian(tau, y, with_baseline=True)
    inside = np.abs(tau) <= FIT_SIGMAS * first.sigma
    if inside.sum() < 4:
        return first
    return fit_gaussian(tau[inside], y[inside], with_baseline=True)


def magnified_widths_from_fits(f_int: GaussianFit, f_g2: GaussianFit, window: float, jitter: float):
    """
    (Delta t_M, Delta tau_M) in ns. Jitter adds in quadrature once to arrival
    times and twice to delays; binning adds window^2/12 and window^2/6.
    """
    var_t = f_int.sigma ** 2 - jitter ** 2 - window ** 2 / 12.0
    var_tau = f_g2.sigma ** 2 - 2.0 * jitter ** 2 - window ** 2 / 6.0
    if var_t <= 0 or var_tau <= 0:
        raise FitDiverged(
            f"fitted widths {f_int.sigma:.4g} / {f_g2.sigma:.4g} ns do not exceed jitter and binning",
            residual=max(f_int.residual, f_g2.residual),
        )
    return math.sqrt(var_t), math.sqrt(var_tau)


def _block_histograms(rec: DetectionRecord, window: float, edges: np.ndarray) -> np.ndarray:
    """Arrival-time histograms of the pulse blocks [edges[j], edges[j+1])."""
    timed = (rec.detector == D1) | (rec.detector == D2)
    block = np.searchsorted(edges, rec.pulse_index[timed], side="right") - 1
    period = rec.period_ns
    rel = rec.time_ns[timed] - rec.pulse_index[timed] * period
    n_bins = int(math.ceil(period / window))
    bins = -0.5 * period + window * np.arange(n_bins + 1)
    return np.stack([np.histogram(rel[block == j], bins=bins)[0] for j in range(len(edges) - 1)])


def jackknife_c(rec: DetectionRecord, window: float, tau_grid, min_counts: int = MIN_COUNTS,
                blocks: int = JACKKNIFE_BLOCKS) -> float:
    """
    Delete-one-block jackknife standard error of C over contiguous pulse
    blocks. NaN when a leave-one-out fit fails.
    """
    blocks = min(blocks, rec.n_pulses)
    if blocks < 2:
        return float("nan")
    edges = np.linspace(0, rec.n_pulses, blocks + 1).astype(np.int64)
    parts = block_accumulators(rec, window, tau_grid, blocks)
    hists = _block_histograms(rec, window, edges)
    centers, _ = intensity_histogram(rec, window)
    jitter = rec.truth.get("jitter_sigma", 0.0) * 1e-3
    total_hist = hists.sum(axis=0)

    values = []
    for j in range(len(parts)):
        others = [p for i, p in enumerate(parts) if i != j]
        acc = others[0]
        for p in others[1:]:
            acc = acc.merge(p)
        try:
            f_int = fit_intensity(centers, total_hist - hists[j], min_counts)
            f_g2 = fit_bunching(g2_curve(acc), acc.n12.sum(axis=1), min_counts)
            d_t, d_tau = magnified_widths_from_fits(f_int, f_g2, window, jitter)
        except (EmptyRecord, FitDiverged) as e:
            logger.warning(f"jackknife block {j}: {e}")
            return float("nan")
        values.append(math.sqrt(2.0) * d_tau / d_t)
    values = np.array(values)
    n = len(values)
    return float(math.sqrt((n - 1) / n * np.sum((values - values.mean()) ** 2)))


@dataclass
class EstimateReport:
    window: float
    n_pulses: int
    intensity_hist: Tuple[np.ndarray, np.ndarray]
    g2_curve: Curve
    g2_sh_curve: Optional[Curve]
    g2_dh_curve: Optional[Curve]
    delta_t_m: float
    delta_tau_m: float
    c_est: float
    k_est_from_c: float
    g2_int: float
    k_est_from_g2int: Optional[float]
    mu_est: Optional[float] = None
    k_est_from_clicks: Optional[float] = None
    c_est_stderr: Optional[float] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def scalars(self) -> dict:
        return {
            "window_ns": self.window,
            "n_pulses": self.n_pulses,
            "delta_t_m_ns": self.delta_t_m,
            "delta_tau_m_ns": self.delta_tau_m,
            "c_est": self.c_est,
            "c_est_stderr": self.c_est_stderr,
            "k_est_from_c": self.k_est_from_c,
            "g2_int": self.g2_int,
            "k_est_from_g2int": self.k_est_from_g2int,
            "mu_est": self.mu_est,
            "k_est_from_clicks": self.k_est_from_clicks,
            "diagnostics": self.diagnostics,
        }

    def curves(self) -> Dict[str, pd.DataFrame]:
        out = {}
        for name, c in (("g2", self.g2_curve), ("g2_sh", self.g2_sh_curve), ("g2_dh", self.g2_dh_curve)):
            if c is not None:
                out[name] = pd.DataFrame({"tau_ns": c.tau_ns, "value": c.value, "stderr": c.stderr})
        centers, counts = self.intensity_hist
        out["intensity"] = pd.DataFrame({"time_ns": centers, "counts": counts})
        return out

    def to_json(self, path) -> None:
        doc = self.scalars()
        doc["curves"] = {k: df.to_dict(orient="list") for k, df in self.curves().items()}
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, allow_nan=True)

    def write_csv(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for name, df in self.curves().items():
            df.to_csv(os.path.join(out_dir, f"{name}.csv"), index=False, float_format="%.17g")


def fit_report(rec: DetectionRecord, window: Optional[float] = None, tau_grid=None,
               min_counts: int = MIN_COUNTS, bootstrap: int = 0,
               jackknife: int = JACKKNIFE_BLOCKS) -> EstimateReport:
    if len(rec) == 0:
        raise EmptyRecord("record has no clicks")
    period = rec.period_ns
    window = default_window(period) if window is None else float(window)
    tau_grid = default_tau_grid(period, window) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    acc = accumulate(rec, window, tau_grid)

    curve = g2_curve(acc)
    try:
        sh, dh = heralded_curves(acc)
    except (NoHeralds, EmptyRecord):
        sh = dh = None
    if bootstrap:
        errs = bootstrap_stderr(rec, window, tau_grid, replicas=bootstrap)
        curve = Curve(curve.tau_ns, curve.value, errs.get("g2", curve.stderr))
        if sh is not None:
            sh = Curve(sh.tau_ns, sh.value, errs.get("g2_sh", sh.stderr))
            dh = Curve(dh.tau_ns, dh.value, errs.get("g2_dh", dh.stderr))

    centers, counts = intensity_histogram(rec, window)
    f_int = fit_intensity(centers, counts, min_counts)
    f_g2 = fit_bunching(curve, acc.n12.sum(axis=1), min_counts)

    # jitter_sigma is in ps
    jitter = rec.truth.get("jitter_sigma", 0.0) * 1e-3
    delta_t_m, delta_tau_m = magnified_widths_from_fits(f_int, f_g2, window, jitter)
    c_est = math.sqrt(2.0) * delta_tau_m / delta_t_m
    c_err = jackknife_c(rec, window, tau_grid, min_counts, jackknife) if jackknife >= 2 else None

    try:
        g2_int, k_int = integrated_from_accumulator(acc)
    except DegenerateEstimate as e:
        logger.warning(str(e))
        g2_int, k_int = e.value, None
    try:
        mu_est, k_clicks = k_from_click_rates(rec)
    except DegenerateEstimate as e:
        logger.warning(f"click-rate mode count unavailable: {e}")
        mu_est = k_clicks = None

    report = EstimateReport(
        window=window,
        n_pulses=acc.n_pulses,
        intensity_hist=(centers, counts),
        g2_curve=curve,
        g2_sh_curve=sh,
        g2_dh_curve=dh,
        delta_t_m=delta_t_m,
        delta_tau_m=delta_tau_m,
        c_est=c_est,
        c_est_stderr=c_err,
        k_est_from_c=k_from_c(c_est),
        g2_int=g2_int,
        k_est_from_g2int=k_int,
        mu_est=mu_est,
        k_est_from_clicks=k_clicks,
        diagnostics={
            "intensity_residual": f_int.residual,
            "intensity_points": f_int.n_points,
            "bunching_residual": f_g2.residual,
            "bunching_points": f_g2.n_points,
            "bunching_baseline": f_g2.baseline,
        },
    )
    logger.info(
        f"Delta t_M={delta_t_m:.4g} ns, Delta tau_M={delta_tau_m:.4g} ns, "
        f"C={c_est:.4g}, K(C)={report.k_est_from_c:.4g}, g2_int={g2_int:.4g}"
    )
    return report
