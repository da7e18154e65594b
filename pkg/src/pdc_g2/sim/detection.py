"""
Monte Carlo time tags for the HBT + bucket-herald experiment.

Per pulse: the pair number m follows the compound geometric law of the
Schmidt modes; ordinary photons are drawn from the intensity Gaussian (m = 1)
or, for m >= 2, from prod I(t_i) * perm[g1(t_i - t_j)] by rejection. Each
photon goes to D1 or D2 with probability 1/2, is magnified and jittered, and
only the earliest photon per detector and pulse is kept. D3 clicks with
probability 1 - (1 - eta)^m and carries no time.

Records are ordered by pulse, then D1/D2 by time, then D3. Absolute times
increase along the record as long as no photon lands half a period or more
from its own epoch.

Pulses are processed in fixed-size chunks; chunk c draws from
Philox(SeedSequence(seed, spawn_key=(c,))), so the record does not depend on
how chunks are spread over workers.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..errors import ConfigInvalid
from ..model.gaussian import GaussianBiphoton, build_biphoton
from ..model.params import derive_params
from ..model.schmidt import SchmidtSpectrum, schmidt_spectrum

logger = logging.getLogger(__name__)

D1, D2, D3 = 1, 2, 3
DETECTOR_NAMES = {D1: "D1", D2: "D2", D3: "D3"}
DETECTOR_CODES = {v: k for k, v in DETECTOR_NAMES.items()}

MAX_MEAN_PAIRS = 0.3
# repetition period must exceed this many magnified intensity widths
PERIOD_WIDTHS = 6.0
DEFAULT_CHUNK_SIZE = 65536
# weight of the Schmidt modes left out of the pair-number law
MODE_TAIL = 1e-12
PAIR_TAIL = 1e-15
# floats per rejection batch of the m >= 3 sampler
SYMMETRIZE_BUDGET = 1 << 22


@dataclass(frozen=True)
class ExperimentConfig:
    biphoton: GaussianBiphoton
    mean_pairs: float
    magnification: float = 1000.0
    # MHz
    repetition_rate: float = 10.0
    n_pulses: int = 0
    # ps, after magnification
    jitter_sigma: float = 0.0
    herald_efficiency: float = 1.0
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        if not 0.0 < self.mean_pairs <= MAX_MEAN_PAIRS:
            raise ConfigInvalid(f"mean_pairs must lie in (0, {MAX_MEAN_PAIRS}], got {self.mean_pairs}")
        if self.magnification == 0:
            raise ConfigInvalid("magnification must be nonzero")
        if not self.repetition_rate > 0:
            raise ConfigInvalid(f"repetition_rate must be positive, got {self.repetition_rate}")
        if self.n_pulses < 0:
            raise ConfigInvalid(f"n_pulses must be >= 0, got {self.n_pulses}")
        if self.jitter_sigma < 0:
            raise ConfigInvalid(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if not 0.0 <= self.herald_efficiency <= 1.0:
            raise ConfigInvalid(f"herald_efficiency must lie in [0, 1], got {self.herald_efficiency}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.chunk_size <= 0:
            raise ConfigInvalid(f"chunk_size must be positive, got {self.chunk_size}")
        spread = PERIOD_WIDTHS * abs(self.magnification) * self.biphoton.delta_t_o
        if not self.period_ps > spread:
            raise ConfigInvalid(
                f"repetition period {self.period_ps:.4g} ps does not exceed "
                f"{PERIOD_WIDTHS:g}|M|Delta t_o = {spread:.4g} ps"
            )

    @property
    def period_ps(self) -> float:
        return 1e6 / self.repetition_rate

    @property
    def period_ns(self) -> float:
        return 1e3 / self.repetition_rate

    @property
    def n_chunks(self) -> int:
        return -(-self.n_pulses // self.chunk_size)

    def truth(self) -> dict:
        """Flat description of the run, enough to rebuild the config."""
        p = self.biphoton.params
        b = self.biphoton
        return {
            "pump_fwhm": p.pump_fwhm,
            "tau_o": p.tau_o,
            "tau_e": p.tau_e,
            "sigma_s": p.sigma_s,
            "mean_pairs": self.mean_pairs,
            "magnification": self.magnification,
            "repetition_rate": self.repetition_rate,
            "n_pulses": self.n_pulses,
            "jitter_sigma": self.jitter_sigma,
            "herald_efficiency": self.herald_efficiency,
            "seed": self.seed,
            "chunk_size": self.chunk_size,
            "delta_t_o": b.delta_t_o,
            "delta_tau_o": b.delta_tau_o,
            "coherence_c": b.coherence_c,
            "k_number": b.k_number,
        }

    @classmethod
    def from_truth(cls, truth: dict) -> "ExperimentConfig":
        params = derive_params(truth["pump_fwhm"], truth["tau_o"], truth["tau_e"], truth["sigma_s"])
        keys = ("mean_pairs", "magnification", "repetition_rate", "n_pulses",
                "jitter_sigma", "herald_efficiency", "seed", "chunk_size")
        return cls(biphoton=build_biphoton(params), **{k: truth[k] for k in keys})


@dataclass
class DetectionRecord:
    """Columnar click list, sorted by pulse, D1/D2 by time within a pulse, D3 last."""
    pulse_index: np.ndarray
    detector: np.ndarray
    # ns from the start of the run; NaN for D3
    time_ns: np.ndarray
    truth: dict = field(default_factory=dict)
    # pulses with 0, 1, 2 and >= 3 pairs
    counters: Dict[str, int] = field(default_factory=lambda: {"0": 0, "1": 0, "2": 0, "3+": 0})

    def __len__(self) -> int:
        return len(self.pulse_index)

    @property
    def n_pulses(self) -> int:
        return int(self.truth.get("n_pulses", 0))

    @property
    def period_ns(self) -> float:
        return 1e3 / self.truth["repetition_rate"]

    def select(self, det: int):
        mask = self.detector == det
        return self.pulse_index[mask], self.time_ns[mask]

    def to_frame(self) -> pd.DataFrame:
        names = np.array([DETECTOR_NAMES[D1], DETECTOR_NAMES[D2], DETECTOR_NAMES[D3]])
        return pd.DataFrame({
            "pulse_index": self.pulse_index,
            "detector": names[self.detector.astype(np.int64) - 1],
            "time_ns": self.time_ns,
        })


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk_index,))))


def pair_number_distribution(spectrum: SchmidtSpectrum, mu: float, tail: float = PAIR_TAIL) -> np.ndarray:
    """
    P(m) for m = 0..m_max: the convolution of geometric laws with means
    mu * lambda_n, truncated once the remaining mass is below tail.
    """
    means = mu * np.asarray(spectrum.lambdas)
    m_max = 8
    while True:
        k = np.arange(m_max + 1)
        pmf = np.zeros(m_max + 1)
        pmf[0] = 1.0
        for a in means:
            mode = a ** k / (1.0 + a) ** (k + 1)
            pmf = np.convolve(pmf, mode)[: m_max + 1]
        if 1.0 - pmf.sum() < tail or m_max >= 4096:
            return pmf
        m_max *= 2


def generating_function(spectrum: SchmidtSpectrum, mu: float, s: float) -> float:
    """E[s^m] = prod_n 1 / (1 + mu lambda_n (1 - s))."""
    means = mu * np.asarray(spectrum.lambdas)
    return float(np.prod(1.0 / (1.0 + means * (1.0 - s))))


def click_probabilities(spectrum: SchmidtSpectrum, mu: float, eta: float = 1.0) -> dict:
    """
    Exact per-pulse click probabilities of the latching D1, D2 and the bucket
    D3, and the whole-pulse count ratios they imply.
    """
    def g(s):
        return generating_function(spectrum, mu, s)

    # P(no click on D1) = E[(1/2)^m], and so on for the other complements
    p1 = 1.0 - g(0.5)
    p3 = 1.0 - g(1.0 - eta)
    p12 = 1.0 - 2.0 * g(0.5) + g(0.0)
    p13 = 1.0 - g(0.5) - g(1.0 - eta) + g(0.5 * (1.0 - eta))
    p123 = 1.0 - 2.0 * g(0.5) - g(1.0 - eta) + 2.0 * g(0.5 * (1.0 - eta))
    out = {"d1": p1, "d2": p1, "d3": p3, "d1d2": p12, "d1d3": p13, "d2d3": p13, "d1d2d3": p123}
    out["g2_int"] = p12 / (p1 * p1)
    if p3 > 0:
        out["g2_sh_int"] = p123 / (p13 * p1)
        out["g2_dh_int"] = p123 * p3 / (p13 * p13)
    return out


def sample_bunched_pairs(rng: np.random.Generator, n: int, sigma_t: float, delta_tau: float) -> np.ndarray:
    """
    n pairs from I(t1) I(t2) (1 + exp(-(t2 - t1)^2 / delta_tau^2)): independent
    proposals accepted with probability (1 + exp(-(t2 - t1)^2 / delta_tau^2)) / 2.
    """
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        need = n - filled
        prop = rng.normal(0.0, sigma_t, size=(need, 2))
        d = prop[:, 1] - prop[:, 0]
        accept = rng.random(need) < 0.5 * (1.0 + np.exp(-(d ** 2) / delta_tau ** 2))
        got = prop[accept]
        out[filled: filled + len(got)] = got
        filled += len(got)
    return out


def permanent(a: np.ndarray) -> np.ndarray:
    """Permanents of a batch of square matrices (..., m, m) by Ryser's formula."""
    m = a.shape[-1]
    subsets = ((np.arange(1, 2 ** m)[:, None] >> np.arange(m)) & 1).astype(float)
    sign = (-1.0) ** (m - subsets.sum(axis=1))
    row_sums = np.einsum("...ij,sj->...si", a, subsets)
    return np.prod(row_sums, axis=-1) @ sign


def sample_symmetrized(rng: np.random.Generator, n: int, m: int, sigma_t: float, delta_tau: float) -> np.ndarray:
    """
    n sets of m photon times from prod I(t_i) * perm[g_ij] with
    g_ij = exp(-(t_i - t_j)^2 / (2 delta_tau^2)); proposals are accepted with
    probability perm / m!.
    """
    out = np.empty((n, m))
    norm = float(math.factorial(m))
    # proposal rows per draw, capped so the Ryser sums stay small
    cap = max(256, SYMMETRIZE_BUDGET // (m * 2 ** m))
    filled = 0
    while filled < n:
        need = n - filled
        prop = rng.normal(0.0, sigma_t, size=(min(max(4 * need, 256), cap), m))
        d = prop[:, :, None] - prop[:, None, :]
        g = np.exp(-(d ** 2) / (2.0 * delta_tau ** 2))
        accept = rng.random(len(prop)) < permanent(g) / norm
        got = prop[accept][:need]
        out[filled: filled + len(got)] = got
        filled += len(got)
    return out


def sample_pulses(rng: np.random.Generator, cfg: ExperimentConfig, cdf: np.ndarray, n: int):
    """
    Pair numbers, herald flags and ordinary photon times for n pulses.
    Returns (m, herald, photon_pulse, photon_t_ps) with photon_pulse local to
    the batch.
    """
    b = cfg.biphoton
    m = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)
    herald = rng.random(n) < 1.0 - (1.0 - cfg.herald_efficiency) ** m

    idx1 = np.nonzero(m == 1)[0]
    t1 = rng.normal(0.0, b.delta_t_o, size=len(idx1))
    idx2 = np.nonzero(m == 2)[0]
    t2 = sample_bunched_pairs(rng, len(idx2), b.delta_t_o, b.delta_tau_o)
    pulse_parts, time_parts = [idx1, np.repeat(idx2, 2)], [t1, t2.ravel()]
    for k in np.unique(m[m >= 3]):
        idx = np.nonzero(m == k)[0]
        pulse_parts.append(np.repeat(idx, k))
        time_parts.append(sample_symmetrized(rng, len(idx), int(k), b.delta_t_o, b.delta_tau_o).ravel())

    photon_pulse = np.concatenate(pulse_parts)
    photon_t = np.concatenate(time_parts)
    return m, herald, photon_pulse, photon_t


def detect_photons(
        rng: np.random.Generator,
        cfg: ExperimentConfig,
        n: int,
        herald: np.ndarray,
        photon_pulse: np.ndarray,
        photon_t: np.ndarray,
        first_pulse: int = 0,
    ):
    """
    Beam splitter, magnification, jitter and per-pulse latching for a batch
    of n pulses. Returns sorted (pulse_index, detector, time_ns).
    """
    to_d1 = rng.random(len(photon_t)) < 0.5
    recorded = cfg.magnification * photon_t + rng.normal(0.0, cfg.jitter_sigma, size=len(photon_t))

    pulses, detectors, times = [], [], []
    for det, mask in ((D1, to_d1), (D2, ~to_d1)):
        first = np.full(n, np.inf)
        np.minimum.at(first, photon_pulse[mask], recorded[mask])
        hit = np.nonzero(np.isfinite(first))[0]
        pulses.append(hit)
        detectors.append(np.full(len(hit), det, dtype=np.int8))
        times.append(first[hit])
    hit3 = np.nonzero(herald)[0]
    pulses.append(hit3)
    detectors.append(np.full(len(hit3), D3, dtype=np.int8))
    times.append(np.full(len(hit3), np.nan))

    local = np.concatenate(pulses)
    detector = np.concatenate(detectors)
    t_ps = np.concatenate(times)
    # D3 (NaN time) sorts last within its pulse
    order = np.lexsort((detector, np.where(np.isnan(t_ps), np.inf, t_ps), local))
    pulse_index = local[order].astype(np.int64) + first_pulse
    time_ns = pulse_index * cfg.period_ns + t_ps[order] * 1e-3
    return pulse_index, detector[order], time_ns


def sample_pulse(rng: np.random.Generator, cfg: ExperimentConfig, cdf: Optional[np.ndarray] = None):
    """One pulse: (ordinary photon times in ps, herald flag)."""
    cdf = pair_cdf(cfg) if cdf is None else cdf
    _, herald, _, photon_t = sample_pulses(rng, cfg, cdf, 1)
    return photon_t.tolist(), bool(herald[0])


def detect(ordinary_times: Sequence[float], herald: bool, pulse_index: int, rng: np.random.Generator,
           cfg: ExperimentConfig) -> List[Tuple[int, str, float]]:
    """Clicks of one pulse as (pulse_index, detector name, time_ns)."""
    t = np.asarray(ordinary_times, dtype=float)
    p, d, tn = detect_photons(rng, cfg, 1, np.array([herald]), np.zeros(len(t), dtype=np.int64), t, pulse_index)
    return [(int(pi), DETECTOR_NAMES[int(di)], float(ti)) for pi, di, ti in zip(p, d, tn)]


def pair_cdf(cfg: ExperimentConfig) -> np.ndarray:
    spectrum = schmidt_spectrum(cfg.biphoton.params, tail=MODE_TAIL)
    return np.cumsum(pair_number_distribution(spectrum, cfg.mean_pairs))


def simulate_chunk(cfg: ExperimentConfig, cdf: np.ndarray, chunk_index: int) -> dict:
    first = chunk_index * cfg.chunk_size
    n = min(cfg.chunk_size, cfg.n_pulses - first)
    rng = chunk_rng(cfg.seed, chunk_index)
    m, herald, photon_pulse, photon_t = sample_pulses(rng, cfg, cdf, n)
    pulse_index, detector, time_ns = detect_photons(rng, cfg, n, herald, photon_pulse, photon_t, first)
    return {
        "chunk_index": chunk_index,
        "pulse_index": pulse_index,
        "detector": detector,
        "time_ns": time_ns,
        "counts": np.bincount(np.minimum(m, 3), minlength=4),
    }


def assemble_record(cfg: ExperimentConfig, chunks: List[dict]) -> DetectionRecord:
    chunks = sorted(chunks, key=lambda c: c["chunk_index"])
    counts = np.sum([c["counts"] for c in chunks], axis=0) if chunks else np.zeros(4, dtype=np.int64)
    return DetectionRecord(
        pulse_index=np.concatenate([c["pulse_index"] for c in chunks]) if chunks else np.empty(0, dtype=np.int64),
        detector=np.concatenate([c["detector"] for c in chunks]) if chunks else np.empty(0, dtype=np.int8),
        time_ns=np.concatenate([c["time_ns"] for c in chunks]) if chunks else np.empty(0),
        truth=cfg.truth(),
        counters={k: int(v) for k, v in zip(("0", "1", "2", "3+"), counts)},
    )


def run_experiment(cfg: ExperimentConfig, threads: int = 1, work_dir: Optional[str] = None) -> DetectionRecord:
    """Simulate cfg.n_pulses pulses; the result depends on (seed, chunk_size) only."""
    cdf = pair_cdf(cfg)
    if threads > 1 and cfg.n_chunks > 1:
        from .multi_worker import run_chunks
        chunks = run_chunks(cfg, cdf, threads, work_dir)
    else:
        chunks = [
            simulate_chunk(cfg, cdf, c)
            for c in tqdm(range(cfg.n_chunks), desc="pulses", disable=not logger.isEnabledFor(logging.INFO))
        ]
    rec = assemble_record(cfg, chunks)
    logger.info(f"simulated {cfg.n_pulses} pulses: {len(rec)} clicks, pair counts {rec.counters}")
    return rec


def thin_record(rec: DetectionRecord, keep: float, seed: int = 0) -> DetectionRecord:
    """Drop each click independently with probability 1 - keep."""
    if not 0.0 <= keep <= 1.0:
        raise ConfigInvalid(f"keep probability must lie in [0, 1], got {keep}")
    rng = np.random.Generator(np.random.Philox(seed))
    mask = rng.random(len(rec)) < keep
    return replace(rec, pulse_index=rec.pulse_index[mask], detector=rec.detector[mask], time_ns=rec.time_ns[mask])


def write_record_csv(rec: DetectionRecord, path) -> None:
    rec.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")


def write_truth_json(rec: DetectionRecord, path) -> None:
    with open(path, "w") as f:
        json.dump({"truth": rec.truth, "counters": rec.counters}, f, indent=2)


def read_record_csv(path, truth_path=None) -> DetectionRecord:
    df = pd.read_csv(path, dtype={"pulse_index": np.int64, "detector": str, "time_ns": float},
                     float_precision="round_trip")
    unknown = set(df["detector"]) - set(DETECTOR_CODES)
    if unknown:
        raise ConfigInvalid(f"unknown detector labels in {path}: {sorted(unknown)}")
    truth, counters = {}, {"0": 0, "1": 0, "2": 0, "3+": 0}
    if truth_path is not None:
        with open(truth_path) as f:
            sidecar = json.load(f)
        truth, counters = sidecar["truth"], sidecar["counters"]
    return DetectionRecord(
        pulse_index=df["pulse_index"].to_numpy(dtype=np.int64),
        detector=df["detector"].map(DETECTOR_CODES).to_numpy(dtype=np.int8),
        time_ns=df["time_ns"].to_numpy(dtype=float),
        truth=truth,
        counters=counters,
    )
