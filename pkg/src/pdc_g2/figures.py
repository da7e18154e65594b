"""
Figure-ready tables: the pump-duration sweep of K and 1/C, magnified g2 and
intensity with their closed forms, and the heralded curves. Data only, no
plotting.
"""
import json
import logging
import math
import os
from typing import Dict, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import RunConfig
from .errors import InvalidSchmidtDomain
from .estimators.counts import accumulate, g2_curve, heralded_curves
from .estimators.fit import intensity_histogram
from .model.gaussian import (
    bandwidth,
    build_biphoton,
    feasibility,
    g2_magnified,
    heralded_g2,
    intensity_magnified,
)
from .model.params import single_mode_pump_duration
from .model.schmidt import schmidt_spectrum
from .sim.detection import D1, D2, DetectionRecord, ExperimentConfig, click_probabilities

logger = logging.getLogger(__name__)

FEASIBILITY_EVENTS = 1e6
# heralded delays reach this many periods either side
HERALDED_SPAN_PERIODS = 1.25


def analyze(cfg: RunConfig) -> dict:
    """Closed-form scalars for the configured crystal and pump."""
    params = cfg.params()
    b = build_biphoton(params)
    s = schmidt_spectrum(params)
    n_out, max_rate = feasibility(b, FEASIBILITY_EVENTS, cfg.experiment.magnification)
    out = {
        "pump_fwhm_ps": params.pump_fwhm,
        "t_o": params.t_o,
        "t_e": params.t_e,
        "delta_t_o_ps": b.delta_t_o,
        "delta_tau_o_ps": b.delta_tau_o,
        "coherence_c": b.coherence_c,
        "k_number": b.k_number,
        "schmidt_n_max": s.n_max,
        "schmidt_tail": s.tail,
        "lambdas_head": list(s.lambdas[:5]),
        "single_mode_pump_fwhm_ps": single_mode_pump_duration(params.tau_o, params.sigma_s),
        "events_outside_1e6": n_out,
        "max_repetition_rate_mhz": max_rate,
    }
    out.update({f"pump_{k}": v for k, v in bandwidth(params).items()})
    return out


def pump_sweep(cfg: RunConfig) -> pd.DataFrame:
    """K and 1/C against pump FWHM; at 1 + t_o t_e = 0 they are 1 and 0."""
    sw = cfg.sweep
    if sw.log_spaced:
        grid = np.geomspace(sw.pump_min, sw.pump_max, sw.count)
    else:
        grid = np.linspace(sw.pump_min, sw.pump_max, sw.count)
    rows = []
    for tau_p in tqdm(grid, desc="sweep", disable=not logger.isEnabledFor(logging.INFO)):
        try:
            b = build_biphoton(cfg.crystal.to_params(float(tau_p)))
            k, inv_c, t_o = b.k_number, 1.0 / b.coherence_c, b.params.t_o
        except InvalidSchmidtDomain:
            k, inv_c, t_o = 1.0, 0.0, float("nan")
        rows.append({"pump_fwhm_ps": float(tau_p), "t_o": t_o, "k_number": k, "inv_coherence": inv_c})
    return pd.DataFrame(rows)


def _truth_biphoton(rec: DetectionRecord):
    return ExperimentConfig.from_truth(rec.truth).biphoton


def fig3_frames(rec: DetectionRecord, window: float, tau_grid) -> Dict[str, pd.DataFrame]:
    """Monte Carlo magnified g2 and arrival-time histogram next to the closed forms."""
    b = _truth_biphoton(rec)
    m = rec.truth["magnification"]
    acc = accumulate(rec, window, tau_grid)
    curve = g2_curve(acc)
    tau_ps = curve.tau_ns * 1e3
    g2 = pd.DataFrame({
        "tau_ns": curve.tau_ns,
        "g2_mc": curve.value,
        "g2_stderr": curve.stderr,
        "g2_analytic": g2_magnified(b, m, tau_ps),
    })

    centers, counts = intensity_histogram(rec, window)
    n_timed = int(np.count_nonzero((rec.detector == D1) | (rec.detector == D2)))
    # density per ps -> expected counts per bin
    expected = n_timed * intensity_magnified(b, m, centers * 1e3) * window * 1e3
    intensity = pd.DataFrame({"time_ns": centers, "counts": counts, "counts_analytic": expected})
    return {"g2": g2, "intensity": intensity}


def heralded_tau_grid(period_ns: float, window: float) -> np.ndarray:
    n = int(math.floor(HERALDED_SPAN_PERIODS * period_ns / window))
    return window * np.arange(-n, n + 1)


def fig5_frames(rec: DetectionRecord, window: float, tau_grid: Optional[np.ndarray] = None) -> Dict[str, pd.DataFrame]:
    """
    Single- and double-heralded g2 next to two references: the moment-based
    closed forms at P_b = mu, and the latching-detector target
    g2_M(tau) * g2_{sh,dh}_int / g2_int built from the exact click
    probabilities. With a unit-efficiency herald the target is exact
    (g2_sh = g2, g2_dh = P(m >= 1) g2); below that it assumes the herald
    rate of coincident pulses does not depend on the delay.
    """
    b = _truth_biphoton(rec)
    m = rec.truth["magnification"]
    mu = rec.truth["mean_pairs"]
    period = rec.period_ns
    tau_grid = heralded_tau_grid(period, window) if tau_grid is None else tau_grid
    sh, dh = heralded_curves(accumulate(rec, window, tau_grid))

    spectrum = schmidt_spectrum(b.params, tail=1e-12)
    exact = click_probabilities(spectrum, mu, rec.truth["herald_efficiency"])

    same = np.abs(sh.tau_ns) < 0.5 * period
    unmagnified_ps = sh.tau_ns * 1e3 / m
    sh_same, dh_same = heralded_g2(b, mu, unmagnified_ps, in_same_period=True)
    g2_same = g2_magnified(b, m, sh.tau_ns * 1e3)
    heralded = pd.DataFrame({
        "tau_ns": sh.tau_ns,
        "g2_sh_mc": sh.value,
        "g2_sh_stderr": sh.stderr,
        "g2_dh_mc": dh.value,
        "g2_dh_stderr": dh.stderr,
        "g2_sh_analytic": np.where(same, sh_same, 1.0),
        "g2_dh_analytic": np.where(same, dh_same, 1.0),
        "g2_sh_exact": np.where(same, g2_same * exact["g2_sh_int"] / exact["g2_int"], 1.0),
        "g2_dh_exact": np.where(same, g2_same * exact["g2_dh_int"] / exact["g2_int"], 1.0),
    })
    return {"heralded": heralded, "click_ratios": pd.DataFrame([exact])}


def write_bundle(frames: Dict[str, pd.DataFrame], out_dir: str, fmt: str = "csv") -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, df in frames.items():
        if fmt == "json":
            with open(os.path.join(out_dir, f"{name}.json"), "w") as f:
                json.dump(df.to_dict(orient="list"), f, indent=2)
        else:
            df.to_csv(os.path.join(out_dir, f"{name}.csv"), index=False, float_format="%.17g")
