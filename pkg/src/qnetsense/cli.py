"""Command-line scenario runner: qfim, precision-sweep, landscape, adaptive, noise-sweep."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .estimation import (
    adaptive_estimate,
    balanced_control,
    default_bounds,
    gain_db,
    gradient_trials,
    matched_qfim,
    readout_mitigation_trials,
    trial_seed,
    truth_parameters,
)
from .fields import EncodingConfig, VectorField, to_spherical
from .fisher import FisherMatrix, closed_form_qfim, invert_info, precision_bound
from .protocols import ProtocolModel, ProtocolRun, Strategy, landscape_scan, peak_curvature
from .tables import ResultTable, real_or_sentinel

log = logging.getLogger("qnetsense")

OUT_ENV = "QNETSENSE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class NumericalFailure(RuntimeError):
    """A scenario point produced no finite result."""

    def __init__(self, where: str, detail: str):
        super().__init__(f"numerical failure at {where}: {detail}")
        self.where = where


def _check_finite(values, where: str) -> None:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(where, "non-finite estimates")


def _model(strategy: Strategy, T: float, N: int, truth=None) -> ProtocolModel:
    guess = np.asarray(truth, dtype=float) if strategy.tag == "LE_opt" else None
    return ProtocolModel(strategy, EncodingConfig(T, N), probe_guess=guess)


def _truth(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.signal is not None:
        return np.array(cfg.signal, dtype=float)
    f1, f2 = cfg.fields()
    return truth_parameters(cfg.strategy_obj, f1, f2)


# ---------------------------------------------------------------------------
# qfim


def _qfim_points(cfg: ScenarioConfig) -> list[tuple[float, float, float, float]]:
    listed = [(p.B, p.theta, p.phi, p.T) for p in cfg.points or []]
    rng = np.random.default_rng(cfg.seed)
    drawn = [
        (rng.uniform(0.2, 2.0), rng.uniform(0.2, math.pi - 0.2), rng.uniform(-math.pi, math.pi), rng.uniform(0.2, 3.0))
        for _ in range(cfg.random_points)
    ]
    return listed + drawn


def cmd_qfim(cfg: ScenarioConfig, jobs: int = 1) -> tuple[ResultTable, dict]:
    s = cfg.strategy_obj
    N = cfg.cycle_counts[0]
    ax = s.axes
    pairs = [(i, j) for i in range(len(ax)) for j in range(i, len(ax))]
    cols = ["point", "B", "theta", "phi", "T", "N"]
    cols += [f"numeric_{ax[i]}_{ax[j]}" for i, j in pairs]
    cols += [f"closed_{ax[i]}_{ax[j]}" for i, j in pairs]
    cols += ["max_abs_diff", "off_block_max", "non_identifiable"]
    table = ResultTable(cols)
    worst, flagged = 0.0, 0
    for k, (B, th, ph, T) in enumerate(_qfim_points(cfg)):
        f = VectorField(B, th if s.components == 3 else math.pi / 2, ph)
        x = truth_parameters(s, f)
        numeric = matched_qfim(_model(s, T, N, x), x).entries
        closed = closed_form_qfim(s.tag, s.components, f, T, N).entries
        _check_finite(numeric, f"point {k}")
        diff = float(np.abs(numeric - closed).max())
        worst = max(worst, diff)
        c = s.components
        off = float(np.abs(numeric[:c, c:]).max()) if s.family == "NLE" else ""
        report = invert_info(FisherMatrix(numeric, ax))
        null = "; ".join(report.describe_null()) if report.singular else ""
        flagged += bool(null)
        table.add(
            k, B, th, ph, T, N,
            *[numeric[i, j] for i, j in pairs],
            *[closed[i, j] for i, j in pairs],
            diff, off, null,
        )
    return table, {"max_abs_diff": worst, "non_identifiable_points": flagged}


# ---------------------------------------------------------------------------
# precision-sweep


def _swept(cfg: ScenarioConfig, value: float) -> tuple[VectorField, float, int]:
    f, _ = cfg.fields()
    T, N = cfg.T, cfg.cycle_counts[0]
    axis = cfg.sweep.parameter
    if axis == "B":
        f = VectorField(value, f.theta, f.phi)
    elif axis == "T":
        T = value
    elif axis == "N":
        N = int(value)
    else:
        v = f.cartesian.copy()
        v[2] = value
        f = to_spherical(v)
    return f, T, N


def cmd_precision_sweep(cfg: ScenarioConfig, jobs: int = 1) -> tuple[ResultTable, dict]:
    tags = list(dict.fromkeys(cfg.strategies))
    c = cfg.components
    simulated = [t for t in tags if t != "LE_opt3"] if cfg.trials >= 2 else []
    le_tag = next((t for t in ("LE_bell", "LE_opt", "LE_opt3") if t in tags), None)
    gains = [("rs", "RS")] if "RS" in tags else []
    if le_tag:
        gains.append(("le", le_tag))
    if "NLE" not in tags:
        gains = []
    cols = [cfg.sweep.parameter] + [f"bound_{t}" for t in tags] + [f"mc_{t}" for t in simulated]
    cols += [f"gain_db_nle_vs_{g}" for g, _ in gains]
    cols += [f"mc_gain_db_nle_vs_{g}" for g, t in gains if t in simulated]
    table = ResultTable(cols)
    achievable = {}
    for value in cfg.sweep.grid():
        f, T, N = _swept(cfg, value)
        bounds = {t: precision_bound(t, c, f, T, N) for t in tags}
        achievable.update({t: b.achievable for t, b in bounds.items()})
        mc = {}
        for t in simulated:
            if bounds[t].divergent:
                mc[t] = math.inf
                continue
            g = gradient_trials(
                Strategy(t, c), f, None, T, N, cfg.shots, cfg.trials, cfg.seed, cfg.starts,
                cfg.offset, cfg.window, cfg.noise.model(), jobs,
            )
            _check_finite(g.gradients, f"{cfg.sweep.parameter}={value}, strategy {t}")
            mc[t] = g.variance_sum

        def gain(a, b):
            return gain_db(a, b) if math.isfinite(a) and math.isfinite(b) and b > 0 else math.inf

        row = [N if cfg.sweep.parameter == "N" else value] + [real_or_sentinel(bounds[t].total) for t in tags]
        row += [real_or_sentinel(mc[t]) for t in simulated]
        row += [real_or_sentinel(gain(bounds[t].total, bounds["NLE"].total)) for _, t in gains]
        row += [real_or_sentinel(gain(mc[t], mc["NLE"])) for _, t in gains if t in simulated]
        table.add(*row)
    return table, {"achievable": achievable}


# ---------------------------------------------------------------------------
# landscape


def _control(cfg: ScenarioConfig, model: ProtocolModel, truth: np.ndarray) -> np.ndarray:
    if isinstance(cfg.control, list):
        return np.array(cfg.control, dtype=float)
    if cfg.control == "matched":
        return truth.copy()
    return balanced_control(model, truth, cfg.offset)


def cmd_landscape(cfg: ScenarioConfig, jobs: int = 1) -> tuple[ResultTable, dict]:
    s = cfg.strategy_obj
    truth = _truth(cfg)
    a0, a1 = cfg.scan.axes
    i0, i1 = s.axes.index(a0), s.axes.index(a1)
    h0, h1 = cfg.scan.half_width
    g0 = truth[i0] + np.linspace(-h0, h0, cfg.scan.points)
    g1 = truth[i1] + np.linspace(-h1, h1, cfg.scan.points)
    table = ResultTable(["N", a0, a1, "log_likelihood", "normalized", "is_argmax"])
    summary = {}
    for N in cfg.cycle_counts:
        model = _model(s, cfg.T, N, truth)
        xc = _control(cfg, model, truth)
        run = ProtocolRun(s, truth, xc, EncodingConfig(cfg.T, N), probe_guess=model.probe_guess)
        scape = landscape_scan(run, (a0, a1), (g0, g1))
        _check_finite(scape.raw, f"N={N}")
        ia, ja = np.unravel_index(np.argmax(scape.raw), scape.raw.shape)
        for i, u in enumerate(g0):
            for j, v in enumerate(g1):
                table.add(N, u, v, scape.raw[i, j], scape.normalized[i, j], int(i == ia and j == ja))
        summary[str(N)] = {
            "argmax": list(scape.argmax),
            f"curvature_{a0}": peak_curvature(scape.raw[:, ja], g0[1] - g0[0]),
            f"curvature_{a1}": peak_curvature(scape.raw[ia, :], g1[1] - g1[0]),
        }
    return table, summary


# ---------------------------------------------------------------------------
# adaptive


def cmd_adaptive(cfg: ScenarioConfig, jobs: int = 1) -> tuple[ResultTable, dict]:
    s = cfg.strategy_obj
    truth = _truth(cfg)
    N = cfg.cycle_counts[0]
    model = _model(s, cfg.T, N, truth)
    bounds = default_bounds(s)
    box = np.array(cfg.adaptive.start_box, dtype=float) if cfg.adaptive.start_box else bounds
    rng = np.random.default_rng(cfg.seed)
    table = ResultTable(["run", "round", "kind", *s.axes, "cost", "log_likelihood", "update_norm"])
    finals, rounds = [], []
    for r in range(cfg.adaptive.runs):
        x0 = np.array(cfg.control, dtype=float) if isinstance(cfg.control, list) else rng.uniform(box[:, 0], box[:, 1])
        est, state = adaptive_estimate(
            model, truth, x0, cfg.shots, cfg.adaptive.rounds, trial_seed(cfg.seed, r), cfg.starts, bounds
        )
        _check_finite(est.x_est, f"run {r}")
        for m, ((xc, _), cost, upd) in enumerate(zip(state.history, state.costs, state.update_norms), start=1):
            table.add(r, m, "control", *xc, cost, "", upd)
        table.add(r, state.round, "final", *est.x_est, "", est.log_likelihood, state.update_norms[-1])
        finals.append(est.x_est)
        rounds.append(state.round)
    finals = np.array(finals)
    return table, {
        "rounds_used": rounds,
        "final_error_norm": np.linalg.norm(finals - truth, axis=1).tolist(),
        "truth": truth.tolist(),
    }


# ---------------------------------------------------------------------------
# noise-sweep


def cmd_noise_sweep(cfg: ScenarioConfig, jobs: int = 1) -> tuple[ResultTable, dict]:
    s = cfg.strategy_obj
    f1, f2 = cfg.fields()
    N = cfg.cycle_counts[0]
    axis = cfg.sweep.parameter
    table = ResultTable(
        [axis, "variance_sum", "mse", "variance_sum_mitigated", "mse_mitigated", "dist_mse_raw", "dist_mse_mitigated"]
    )
    args = (s, f1, f2, cfg.T, N, cfg.shots, cfg.trials, cfg.seed, cfg.starts, cfg.offset, cfg.window)
    for level in cfg.sweep.grid():
        noise = cfg.noise.model(**{axis: level})
        where = f"{axis}={level}"
        if noise.readout_confusion is None:
            g = gradient_trials(*args, noise=noise, jobs=jobs)
            _check_finite(g.gradients, where)
            table.add(level, g.variance_sum, g.squared_errors.mean(), "", "", "", "")
            continue
        # readout error: fit the ideal model to raw and to mitigated frequencies
        raw = gradient_trials(*args, noise=noise, jobs=jobs, noise_aware=False)
        mit = gradient_trials(*args, noise=noise, jobs=jobs, noise_aware=False, mitigate=True)
        _check_finite(raw.gradients, where)
        _check_finite(mit.gradients, where)
        model = _model(s, cfg.T, N)
        truth = truth_parameters(s, f1, f2)
        xc = balanced_control(model, truth, cfg.offset)
        d_raw, d_mit = readout_mitigation_trials(
            model, truth, xc, noise.confusion_for(len(model.labels[0])), cfg.shots, cfg.trials, cfg.seed
        )
        table.add(
            level, raw.variance_sum, raw.squared_errors.mean(), mit.variance_sum, mit.squared_errors.mean(),
            d_raw.mean(), d_mit.mean(),
        )
    return table, {"noise_axis": axis}


COMMANDS = {
    "qfim": cmd_qfim,
    "precision-sweep": cmd_precision_sweep,
    "landscape": cmd_landscape,
    "adaptive": cmd_adaptive,
    "noise-sweep": cmd_noise_sweep,
}


# ---------------------------------------------------------------------------
# Entry point


def run_scenario(cfg: ScenarioConfig, out_dir: Path, jobs: int = 1) -> tuple[Path, Path]:
    """Run one scenario and write ``<name>.csv`` plus ``<name>.json`` to ``out_dir``."""
    table, summary = COMMANDS[cfg.scenario](cfg, jobs)
    digest = cfg.digest()
    table.provenance = {
        "scenario": cfg.scenario,
        "name": cfg.name,
        "config_sha256": digest,
        "seed": str(cfg.seed),
        "version": __version__,
    }
    csv_path = table.write(out_dir / f"{cfg.name}.csv")
    doc = {
        "scenario": cfg.scenario,
        "name": cfg.name,
        "config_sha256": digest,
        "seed": cfg.seed,
        "version": __version__,
        "csv": csv_path.name,
        "columns": table.columns,
        "rows": len(table.rows),
        "summary": summary,
    }
    json_path = out_dir / f"{cfg.name}.json"
    json_path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return csv_path, json_path


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _out_dir(arg: str | None, cfg: ScenarioConfig) -> Path:
    return Path(arg or cfg.output or os.environ.get(OUT_ENV) or "results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnetsense", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument("--config", required=True, help="YAML scenario file")
        p.add_argument("--out", help=f"output directory (default: config 'output', ${OUT_ENV}, ./results)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for Monte-Carlo trials")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.jobs < 1:
        log.error("config error: --jobs: must be at least 1")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed)
        if cfg.scenario != args.command:
            raise ConfigError("scenario", f"config is a {cfg.scenario!r} scenario, not {args.command!r}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            csv_path, json_path = run_scenario(cfg, _out_dir(args.out, cfg), args.jobs)
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.error("numerical failure in %s/%s: %s", cfg.scenario, cfg.name, exc)
        return EXIT_NUMERICAL
    log.info("wrote %s and %s", csv_path, json_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
