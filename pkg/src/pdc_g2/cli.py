import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from .config import PRESETS, RunConfig, load_config, preset_dict, write_resolved
from .errors import PdcError
from .estimators.fit import fit_report
from .figures import analyze, fig3_frames, fig5_frames, pump_sweep, write_bundle
from .oracle.checks import run_all
from .sim.detection import read_record_csv, run_experiment, write_record_csv, write_truth_json

logger = logging.getLogger("pdc_g2")

RECORD_NAME = "record.csv"
TRUTH_NAME = "truth.json"
FIG3_PRESETS = ("ppktp-3ps", "ppktp-30ps")
FIG5_PRESET = "ppktp-30ps-heralded"


def _dump(doc: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def cmd_analyze(cfg: RunConfig) -> int:
    out = cfg.out_dir
    scalars = analyze(cfg)
    _dump(scalars, os.path.join(out, "scalars.json"))
    write_bundle({"sweep": pump_sweep(cfg)}, out, cfg.format)
    logger.info(
        f"Delta t_o={scalars['delta_t_o_ps']:.4g} ps, Delta tau_o={scalars['delta_tau_o_ps']:.4g} ps, "
        f"C={scalars['coherence_c']:.4g}, K={scalars['k_number']:.4g}"
    )
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    presets = {name: load_config(preset=name).params() for name in cfg.oracle.presets}
    table = run_all(presets, cfg.oracle.grid_size, cfg.oracle.tolerances())
    write_bundle({"oracle": table}, cfg.out_dir, cfg.format)
    for _, r in table[~table["required"]].iterrows():
        logger.info(f"{r['check']} [{r['preset']}]: K_sinc={r['value']:.4g} vs K={r['reference']:.4g}")
    failed = int((table["required"] & ~table["passed"]).sum())
    return 1 if failed else 0


def cmd_simulate(cfg: RunConfig) -> int:
    rec = run_experiment(cfg.experiment_config(), threads=cfg.threads)
    write_record_csv(rec, os.path.join(cfg.out_dir, RECORD_NAME))
    write_truth_json(rec, os.path.join(cfg.out_dir, TRUTH_NAME))
    return 0


def cmd_estimate(cfg: RunConfig, record: str, truth: Optional[str] = None) -> int:
    if truth is None and os.path.exists(os.path.join(os.path.dirname(record), TRUTH_NAME)):
        truth = os.path.join(os.path.dirname(record), TRUTH_NAME)
    rec = read_record_csv(record, truth)
    if not rec.truth:
        logger.warning(f"no {TRUTH_NAME} next to {record}; taking the run description from the config")
        rec.truth = cfg.experiment_config().truth()
    est = cfg.estimator
    report = fit_report(rec, cfg.window(), cfg.tau_grid(), est.min_counts, est.bootstrap, est.jackknife)
    if cfg.format == "json":
        report.to_json(os.path.join(cfg.out_dir, "estimate.json"))
    else:
        _dump(report.scalars(), os.path.join(cfg.out_dir, "estimate.json"))
        report.write_csv(cfg.out_dir)
    return 0


def cmd_reproduce(cfg: RunConfig) -> int:
    """Sweep, then one simulation per figure preset with the closed forms alongside."""
    out = cfg.out_dir
    write_bundle({"sweep": pump_sweep(cfg)}, os.path.join(out, "fig2"), cfg.format)

    for name in FIG3_PRESETS + (FIG5_PRESET,):
        sub = load_config(overrides=_figure_overrides(cfg, name))
        rec = run_experiment(sub.experiment_config(), threads=cfg.threads)
        if name == FIG5_PRESET:
            frames = fig5_frames(rec, sub.window())
            target = os.path.join(out, "fig5")
        else:
            frames = fig3_frames(rec, sub.window(), sub.tau_grid())
            target = os.path.join(out, "fig3", name)
        write_bundle(frames, target, cfg.format)
        _dump(analyze(sub), os.path.join(target, "scalars.json"))
        logger.info(f"{name}: {len(rec)} clicks -> {target}")
    return 0


def _figure_overrides(cfg: RunConfig, name: str) -> dict:
    """Run settings of cfg applied to the crystal and pairs of preset `name`."""
    doc = cfg.model_dump(mode="json")
    base = preset_dict(name)
    doc["preset"] = name
    doc["crystal"].update(base.get("crystal", {}))
    doc["experiment"].update(base.get("experiment", {}))
    return doc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON run config merged over the preset.")
    common.add_argument("--preset", type=str, default=None, choices=sorted(PRESETS))
    common.add_argument("--out", type=str, default=None, help="Output directory.")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--format", type=str, default=None, choices=["csv", "json"])
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pdc-g2")
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("analyze", parents=[common], help="Closed-form scalars and the pump-duration sweep.")
    sub.add_parser("oracle", parents=[common], help="Numerical checks of the closed forms.")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo detection record.")
    e = sub.add_parser("estimate", parents=[common], help="Estimate g2, C and K from a record.")
    e.add_argument("record", type=str)
    e.add_argument("--truth", type=str, default=None, help=f"Run description; defaults to {TRUTH_NAME} beside the record.")
    sub.add_parser("reproduce", parents=[common], help="Figure data: sweep, magnified g2, heralded g2.")
    return p


def _overrides(args) -> dict:
    doc: dict = {}
    if args.out is not None:
        doc["out_dir"] = args.out
    if args.threads is not None:
        doc["threads"] = args.threads
    if args.format is not None:
        doc["format"] = args.format
    if args.seed is not None:
        doc["experiment"] = {"seed": args.seed}
    return doc


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.preset, args.config, _overrides(args))
        write_resolved(cfg)
        if args.cmd == "analyze":
            return cmd_analyze(cfg)
        if args.cmd == "oracle":
            return cmd_oracle(cfg)
        if args.cmd == "simulate":
            return cmd_simulate(cfg)
        if args.cmd == "estimate":
            return cmd_estimate(cfg, args.record, args.truth)
        return cmd_reproduce(cfg)
    except PdcError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
