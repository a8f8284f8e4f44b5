"""Named experiment runners behind the command-line front-end.

Each runner takes a ``RunConfig`` and returns a ``RunResult``: the JSON
summary plus the text of every file to write.  Nothing here touches the
disk except ``analyze`` reading its inputs, so runs are easy to compare
byte for byte.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import eventio
from .analysis import (
    BasisRuns,
    CorrelationTable,
    classical_bound_check,
    conditional_probabilities,
    entanglement_fidelity_bound,
    fidelity_with_error,
    fringe_fit,
    max_correlation_settings,
    rates,
    reconstruct_density,
    time_binned_fidelity,
)
from .config import RunConfig
from .errors import ConfigError, PhysicsError
from .optics import AnalyzerSetting
from .presets import window_delay_distribution, window_tables
from .simkernel import EventStream, ImperfectionModel, PulseSchedule, born_conditional, run_experiment, split_seed
from .tia import CoincidenceList, CoincidenceWindow, gate, histogram, match_coincidences, split_into_quarters

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RUN_NAMES = ("H", "V", "plus", "minus")


@dataclass
class RunResult:
    experiment: str
    summary: dict[str, Any]
    files: dict[str, str | bytes] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def sub_seed(master: int, k: int) -> int:
    return int(split_seed(master, [k])[0])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else repr(float(x))
    return str(x)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _envelope(cfg: RunConfig, results: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": _config_record(cfg),
        "results": results,
    }


def _config_record(cfg: RunConfig) -> dict:
    # the output directory does not affect results, so reruns elsewhere stay byte-identical
    rec = {k: v for k, v in cfg.as_dict().items() if k != "out"}
    for k, v in rec.items():
        if isinstance(v, float) and not np.isfinite(v):
            rec[k] = repr(v)
    return rec


def _opt(x) -> Optional[float]:
    return None if x is None or not np.isfinite(x) else float(x)


def _window_list(w: CoincidenceWindow) -> list[float]:
    return [float(w.lo), float(w.hi)]


# --- shared pieces -------------------------------------------------------------

def simulate_basis_runs(m: ImperfectionModel, sched: PulseSchedule, n_trials: int, seed: int) -> dict[str, EventStream]:
    """Raw click streams of the four maximum-correlation runs (H, V, +, -)."""
    settings = [*max_correlation_settings("0", m.eta).values(), *max_correlation_settings("45", m.eta).values()]
    return {
        name: run_experiment(m, sched, s, n_trials, sub_seed(seed, k))
        for k, (name, s) in enumerate(zip(RUN_NAMES, settings))
    }


def coincidences(events: EventStream, sched: PulseSchedule, window: CoincidenceWindow) -> CoincidenceList:
    return match_coincidences(gate(events, sched), window)


def table_rows(tables) -> list[dict]:
    rows = []
    for t in tables:
        labels = t.labels
        counts = t.counts
        for s in range(2):
            for i in range(2):
                rows.append({
                    "basis": t.basis_label,
                    "signal": labels[s],
                    "idler": labels[i],
                    "probability": _opt(t.probs[s, i]),
                    "error": _opt(t.errors[s, i]),
                    "count": None if counts is None else int(counts[s, i]),
                })
    return rows


TABLE_COLUMNS = ("basis", "signal", "idler", "probability", "error", "count")


def _state_fidelity(table: CorrelationTable) -> Optional[dict]:
    if table.empty_rows:
        return None
    p = np.array(table.p_same())
    k = int(np.argmin(p))
    return {"value": float(p[k]), "error": float(table.errors[k, k])}


def fidelity_report(t0: Optional[CorrelationTable], t45: Optional[CorrelationTable], cfg: RunConfig) -> dict:
    """F_0, F_45, F_si with errors and bound verdicts; ``None`` where undefined."""
    out: dict[str, Any] = {"F_0": None, "F_45": None, "F_si": None}
    verdicts: dict[str, Any] = {"F_0": None, "F_45": None, "F_si": None}
    for key, t in (("F_0", t0), ("F_45", t45)):
        if t is not None:
            out[key] = _state_fidelity(t)
            if out[key] is not None:
                verdicts[key] = _verdict(out[key]["value"], "state_transfer")
    if t0 is not None and t45 is not None and not (t0.empty_rows or t45.empty_rows):
        optimistic = cfg.get("experiment.reconstruction") == "optimistic"
        method = cfg.get("experiment.error_method")
        try:
            f, err = fidelity_with_error(t0, t45, optimistic=optimistic, method=method, seed=cfg.seed)
        except PhysicsError as exc:
            log.warning("F_si undefined: %s", exc)
        else:
            out["F_si"] = {"value": f, "error": err, "method": method}
            verdicts["F_si"] = _verdict(f, "entanglement")
    out["verdicts"] = verdicts
    return out


def _verdict(f: float, kind: str) -> dict:
    v = classical_bound_check(float(np.clip(f, 0.0, 1.0)), kind)
    return {"kind": kind, "limit": v.limit, "exceeds": v.exceeds, "margin": v.margin}


def model_prediction(m: ImperfectionModel, sched: PulseSchedule, window: CoincidenceWindow, optimistic: bool) -> dict:
    """Exact pipeline values for the model, averaged over the window's delays."""
    t0, t45 = window_tables(m, sched, window)
    f_si = entanglement_fidelity_bound(reconstruct_density(t0, t45, optimistic=optimistic))
    return {"F_0": min(t0.p_same()), "F_45": min(t45.p_same()), "F_si": f_si}


# --- runners ---------------------------------------------------------------------

def run_fringe_scan(cfg: RunConfig) -> RunResult:
    sched = cfg.schedule()
    m = cfg.model()
    window = cfg.window(sched.delta_t)
    n_trials = cfg.get("experiment.n_trials")
    basis = cfg.get("experiment.idler_basis_deg")
    grid_deg = cfg.get("experiment.theta_s_deg")
    if grid_deg is None:
        n = cfg.get("experiment.n_angles")
        theta = np.arange(n) * np.pi / n
    else:
        theta = np.deg2rad(np.asarray(grid_deg, dtype=float))
    if basis == "45":
        idler, phi_s, offset = AnalyzerSetting(np.pi / 4, 0.0), -m.eta, np.pi / 4
    else:
        idler, phi_s, offset = AnalyzerSetting(0.0, 0.0), 0.0, 0.0

    rows = []
    for k, th in enumerate(theta):
        settings = (AnalyzerSetting(float(th), phi_s), idler)
        coinc = coincidences(run_experiment(m, sched, settings, n_trials, sub_seed(cfg.seed, k)), sched, window)
        n_pass, n_fail = coinc.count(2), coinc.count(3)
        n = n_pass + n_fail
        p = n_pass / n if n else float("nan")
        err = float(np.sqrt(p * (1 - p) / n)) if n else float("nan")
        d, w = window_delay_distribution(sched, window)
        p_model = float(np.sum(w * born_conditional(m, settings, d)))
        rows.append({
            "theta_s_deg": float(np.rad2deg(th)),
            "theta_s_rad": float(th),
            "p_idler_pass": p,
            "p_idler_fail": 1 - p if n else float("nan"),
            "error": err,
            "n_coincidences": n,
            "p_model": p_model,
        })
    ok = [r for r in rows if r["n_coincidences"] > 0]
    fit = None
    if len(ok) >= 3:
        th = np.array([r["theta_s_rad"] for r in ok])
        p = np.array([r["p_idler_pass"] for r in ok])
        nn = np.array([r["n_coincidences"] for r in ok])
        try:
            f = fringe_fit(th, p, weights=nn / nn.mean(), offset=offset, n_heralds=nn)
            fit = {"visibility": f.visibility, "stderr": f.stderr, "residual": f.residual,
                   "raw_visibility": f.raw_visibility, "offset_rad": offset}
        except ValueError as exc:
            log.warning("fringe fit skipped: %s", exc)
    peak = max(ok, key=lambda r: r["p_idler_pass"]) if ok else None
    results = {
        "idler_basis_deg": int(basis),
        "delta_t_ns": sched.delta_t,
        "window_ns": _window_list(window),
        "n_trials_per_angle": n_trials,
        "n_points": len(rows),
        "fit": fit,
        "peak": None if peak is None else {"theta_s_deg": peak["theta_s_deg"], "p": peak["p_idler_pass"],
                                           "error": peak["error"]},
    }
    columns = ("theta_s_deg", "theta_s_rad", "p_idler_pass", "p_idler_fail", "error", "n_coincidences", "p_model")
    return RunResult(cfg.experiment, _envelope(cfg, results),
                     {"fringe.csv": to_csv(columns, rows), "summary.json": to_json(_envelope(cfg, results))})


def analyze_runs(runs: dict[str, CoincidenceList], cfg: RunConfig, window: CoincidenceWindow) -> tuple[dict, list]:
    t0 = conditional_probabilities([runs["H"], runs["V"]], "0", window)
    t45 = None
    if "plus" in runs:
        t45 = conditional_probabilities([runs["plus"], runs["minus"]], "45", window)
    tables = [t for t in (t0, t45) if t is not None]
    report = {
        "tables": {t.basis_label: t.as_dict() for t in tables},
        "n_coincidences": {k: len(v.in_window(window)) for k, v in runs.items()},
    }
    report.update(fidelity_report(t0, t45, cfg))
    return report, tables


def run_basis_correlation(cfg: RunConfig) -> RunResult:
    sched = cfg.schedule()
    m = cfg.model()
    window = cfg.window(sched.delta_t)
    n_trials = cfg.get("experiment.n_trials")
    streams = simulate_basis_runs(m, sched, n_trials, cfg.seed)
    runs = {k: coincidences(v, sched, window) for k, v in streams.items()}
    report, tables = analyze_runs(runs, cfg, window)
    optimistic = cfg.get("experiment.reconstruction") == "optimistic"
    report.update({
        "delta_t_ns": sched.delta_t,
        "window_ns": _window_list(window),
        "n_trials_per_setting": n_trials,
        "model_prediction": model_prediction(m, sched, window, optimistic),
    })
    env = _envelope(cfg, report)
    return RunResult(cfg.experiment, env,
                     {"tables.csv": to_csv(TABLE_COLUMNS, table_rows(tables)), "summary.json": to_json(env)})


DELAY_COLUMNS = (
    "delta_t_ns", "bin", "bin_lo_ns", "bin_hi_ns", "mean_delay_ns", "f_si", "f_si_error",
    "n_pairs", "empty", "below_threshold", "f_model",
)


def run_delay_scan(cfg: RunConfig) -> RunResult:
    n_trials = cfg.get("experiment.n_trials")
    optimistic = cfg.get("experiment.reconstruction") == "optimistic"
    method = cfg.get("experiment.error_method")
    rows, series = [], []
    for j, dt in enumerate(cfg.get("experiment.delta_t_list_ns")):
        sched = cfg.schedule(dt)
        m = cfg.model(dt)
        window = cfg.window(dt)
        seed = sub_seed(cfg.seed, j)
        streams = simulate_basis_runs(m, sched, n_trials, seed)
        runs = {k: coincidences(v, sched, window) for k, v in streams.items()}
        br = BasisRuns(runs["H"], runs["V"], runs["plus"], runs["minus"])
        bins = time_binned_fidelity(br, window, optimistic=optimistic, method=method, seed=seed)
        quarters = split_into_quarters(window)
        f_model = []
        for q in quarters:
            t0, t45 = window_tables(m, sched, q)
            f_model.append(entanglement_fidelity_bound(reconstruct_density(t0, t45, optimistic=optimistic)))
        for k, (b, fm) in enumerate(zip(bins, f_model)):
            rows.append({
                "delta_t_ns": float(dt), "bin": k, "bin_lo_ns": float(b.window.lo), "bin_hi_ns": float(b.window.hi),
                "mean_delay_ns": b.mean_delay, "f_si": b.f_si, "f_si_error": b.error, "n_pairs": b.n_pairs,
                "empty": b.empty, "below_threshold": b.below_threshold, "f_model": fm,
            })
        fs = [b.f_si for b in bins]
        monotone = None if any(f is None for f in fs) else bool(all(a >= b for a, b in zip(fs, fs[1:])))
        series.append({"delta_t_ns": float(dt), "window_ns": _window_list(window), "monotone_non_increasing": monotone})
    results = {"n_trials_per_setting": n_trials, "series": series, "bins": [
        {k: (_opt(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows
    ]}
    env = _envelope(cfg, results)
    return RunResult(cfg.experiment, env, {"delay_scan.csv": to_csv(DELAY_COLUMNS, rows), "summary.json": to_json(env)})


RATE_UNITS = {"r_s": "1/s", "r_si": "1/s", "zeta": "", "n_s_inferred": "", "r_2": "1/s"}


def run_rates(cfg: RunConfig) -> RunResult:
    r = rates(cfg.model(), cfg.schedule()).as_dict()
    rows = [{"quantity": k, "value": v, "unit": RATE_UNITS[k]} for k, v in r.items()]
    env = _envelope(cfg, r)
    return RunResult(cfg.experiment, env,
                     {"rates.csv": to_csv(("quantity", "value", "unit"), rows), "summary.json": to_json(env)})


def run_simulate(cfg: RunConfig) -> RunResult:
    sched = cfg.schedule()
    m = cfg.model()
    n_trials = cfg.get("experiment.n_trials")
    ext = ".bin" if cfg.get("experiment.format") == "bin" else ".csv"
    theta = cfg.get("experiment.theta_s_deg")
    if theta is not None:
        if len(theta) != 1:
            raise ConfigError("simulate takes a single experiment.theta_s_deg value")
        settings = (
            AnalyzerSetting.degrees(theta[0], cfg.get("experiment.phi_s_deg", 0.0)),
            AnalyzerSetting.degrees(cfg.get("experiment.theta_i_deg", 0.0), cfg.get("experiment.phi_i_deg", 0.0)),
        )
        streams = {"events": run_experiment(m, sched, settings, n_trials, cfg.seed)}
    else:
        streams = {f"events_{k}": v for k, v in simulate_basis_runs(m, sched, n_trials, cfg.seed).items()}
    files: dict[str, str | bytes] = {}
    counts = {}
    for name, ev in streams.items():
        fname = name + ext
        files[fname] = eventio.events_to_bytes(ev) if ext == ".bin" else eventio.events_to_csv(ev)
        counts[fname] = {c.name: n for c, n in ev.counts().items()}
    results = {"n_trials": n_trials, "delta_t_ns": sched.delta_t, "format": ext[1:], "files": counts}
    env = _envelope(cfg, results)
    files["summary.json"] = to_json(env)
    return RunResult(cfg.experiment, env, files)


def run_analyze(cfg: RunConfig) -> RunResult:
    sched = cfg.schedule()
    window = cfg.window(sched.delta_t)
    inputs = cfg.get("experiment.inputs")
    names = RUN_NAMES[: len(inputs)]
    warnings = []
    runs, files = {}, {}
    hist = {}
    for name, path in zip(names, inputs):
        ev = eventio.read_events(path)
        if len(ev) == 0:
            msg = f"{path}: no events"
            log.warning(msg)
            warnings.append(msg)
        runs[name] = coincidences(ev, sched, window)
        files[f"coincidences_{name}.csv"] = eventio.coincidences_to_csv(runs[name])
        hist[name] = histogram(runs[name], cfg.get("experiment.bin_ns"))
    report, tables = analyze_runs(runs, cfg, window)
    report.update({"delta_t_ns": sched.delta_t, "window_ns": _window_list(window),
                   "inputs": [str(Path(p).name) for p in inputs], "warnings": warnings})
    hist_rows = [{"run": r, "bin_lo_ns": lo, "count": c} for r in names for lo, c in sorted(hist[r].items())]
    files["histogram.csv"] = to_csv(("run", "bin_lo_ns", "count"), hist_rows)
    files["tables.csv"] = to_csv(TABLE_COLUMNS, table_rows(tables))
    env = _envelope(cfg, report)
    files["summary.json"] = to_json(env)
    return RunResult(cfg.experiment, env, files, warnings)


RUNNERS = {
    "fringe-scan": run_fringe_scan,
    "basis-correlation": run_basis_correlation,
    "delay-scan": run_delay_scan,
    "rates": run_rates,
    "simulate": run_simulate,
    "analyze": run_analyze,
}


def write_result(result: RunResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in sorted(result.files.items()):
        p = out / name
        if isinstance(content, bytes):
            p.write_bytes(content)
        else:
            with open(p, "w", newline="") as fh:
                fh.write(content)
        written.append(p)
    return written
