"""Flat ``key = value`` run configuration.

Example::

    # basis correlation at the 100 ns delay
    model.preset = fitted
    model.efficiencies = unit
    schedule.delta_t_ns = 100
    experiment.n_trials = 250000
    seed = 7

Every key can also be given on the command line as ``--key value`` or
``--key=value``; command-line values win.  Lists are comma separated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError, PhysicsError
from .memory import DecayShape, DecoherenceModel
from .presets import MEASURED_EFFICIENCIES, UNIT_EFFICIENCIES, default_decoherence, fitted_model, reference_schedule
from .simkernel import ImperfectionModel, PulseSchedule
from .tia import CoincidenceWindow, reference_window

EXPERIMENTS = ("fringe-scan", "basis-correlation", "delay-scan", "rates", "simulate", "analyze")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


KEYS: dict[str, tuple[Callable[[str], Any], str]] = {
    "seed": (_seed, "master seed (u64)"),
    "out": (str, "output directory"),
    "model.preset": (_choice("fitted", "noiseless"), "starting point: model fitted to the data at schedule.delta_t_ns, or noiseless"),
    "model.efficiencies": (
        _choice("measured", "unit"),
        "alpha/beta/xi/n_s of the experiment, or unit efficiencies (default: measured for rates, unit otherwise)",
    ),
    "model.v_pop": (float, "population visibility V_p"),
    "model.v_coh": (float, "coherence visibility V_c"),
    "model.background": (float, "white-noise fraction b"),
    "model.alpha": (float, "signal-arm efficiency (unpolarized reference, <= 0.5)"),
    "model.beta": (float, "idler-arm efficiency"),
    "model.xi": (float, "read-out transfer efficiency"),
    "model.n_s": (float, "forward-scattered photons per pulse"),
    "model.eta": (float, "path phase eta_s + eta_i (rad)"),
    "model.dark_prob": (float, "dark-count probability per detector per gate"),
    "model.tau_ns": (float, "memory coherence time (ns); 'inf' disables decay"),
    "model.decoherence_shape": (_choice("gaussian", "exponential"), "decay law"),
    "schedule.rep_rate": (float, "repetition rate (1/s)"),
    "schedule.write_len_ns": (float, "write pulse length"),
    "schedule.read_len_ns": (float, "read pulse length"),
    "schedule.delta_t_ns": (float, "write-to-read delay"),
    "schedule.signal_gate_ns": (float, "signal gate width"),
    "schedule.idler_gate_ns": (float, "idler gate width"),
    "experiment.kind": (_choice(*EXPERIMENTS), "experiment to run"),
    "experiment.n_trials": (_positive_int, "trials per analyzer setting"),
    "experiment.n_angles": (_positive_int, "fringe-scan points over [0, pi)"),
    "experiment.theta_s_deg": (_float_list, "explicit signal angles (deg)"),
    "experiment.phi_s_deg": (float, "signal phase (deg) for a single simulate run"),
    "experiment.theta_i_deg": (float, "idler angle (deg) for a single simulate run"),
    "experiment.phi_i_deg": (float, "idler phase (deg) for a single simulate run"),
    "experiment.idler_basis_deg": (_choice("0", "45"), "idler basis of a fringe scan"),
    "experiment.delta_t_list_ns": (_float_list, "delays for the delay scan"),
    "experiment.window_ns": (_float_list, "coincidence window lo,hi (ns)"),
    "experiment.bin_ns": (_positive_int, "histogram bin width"),
    "experiment.inputs": (_str_list, "event files for analyze: 2 (H,V) or 4 (H,V,+,-)"),
    "experiment.format": (_choice("csv", "bin"), "event file format written by simulate"),
    "experiment.reconstruction": (_choice("conservative", "optimistic"), "coherence split"),
    "experiment.error_method": (_choice("linear", "bootstrap"), "error propagation"),
}

DEFAULTS: dict[str, Any] = {
    "seed": 1,
    "out": "out",
    "model.preset": "fitted",
    "experiment.n_trials": 100_000,
    "experiment.n_angles": 12,
    "experiment.idler_basis_deg": "0",
    "experiment.delta_t_list_ns": [100.0, 200.0],
    "experiment.bin_ns": 2,
    "experiment.format": "csv",
    "experiment.reconstruction": "conservative",
    "experiment.error_method": "linear",
}


def parse_value(key: str, text: str, where: str) -> Any:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    parser, _ = KEYS[key]
    try:
        return parser(text.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {text.strip()!r} for {key}: {exc}") from None


def read_config_file(path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value, f"{path}:{lineno}")
    return values


def parse_overrides(args: list[str]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}")
        if "=" in arg:
            key, value = arg[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"{arg}: missing value")
            key, value = arg[2:], args[i + 1]
            i += 2
        values[key] = parse_value(key, value, f"--{key}")
    return values


@dataclass
class RunConfig:
    experiment: str
    values: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        if key in self.values:
            return self.values[key]
        if key == "model.efficiencies":
            # at the experiment's efficiencies a pair needs ~1e5 trials
            return "measured" if self.experiment == "rates" else "unit"
        return DEFAULTS.get(key, default)

    @property
    def seed(self) -> int:
        return self.get("seed")

    @property
    def out(self) -> Path:
        return Path(self.get("out"))

    def schedule(self, delta_t: Optional[float] = None) -> PulseSchedule:
        sched = reference_schedule(self.get("schedule.delta_t_ns", 100.0))
        mapping = {
            "schedule.rep_rate": "rep_rate",
            "schedule.write_len_ns": "write_len",
            "schedule.read_len_ns": "read_len",
            "schedule.delta_t_ns": "delta_t",
            "schedule.signal_gate_ns": "signal_gate",
            "schedule.idler_gate_ns": "idler_gate",
        }
        changes = {attr: self.values[k] for k, attr in mapping.items() if k in self.values}
        if delta_t is not None:
            changes["delta_t"] = float(delta_t)
        try:
            return sched.replace(**changes)
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from None

    def model(self, delta_t: Optional[float] = None) -> ImperfectionModel:
        if delta_t is None:
            delta_t = self.schedule().delta_t
        eff = UNIT_EFFICIENCIES if self.get("model.efficiencies") == "unit" else MEASURED_EFFICIENCIES
        if self.get("model.preset") == "fitted":
            try:
                m = fitted_model(delta_t, eff)
            except ValueError as exc:
                raise ConfigError(f"model.preset = fitted: {exc}") from None
        else:
            m = ImperfectionModel(
                v_pop=1.0, v_coh=1.0, alpha=eff.alpha, beta=eff.beta, xi=eff.xi, n_s=eff.n_s,
                decoherence=DecoherenceModel.none(),
            )
        changes = {
            k.split(".", 1)[1]: self.values[k]
            for k in ("model.v_pop", "model.v_coh", "model.background", "model.alpha", "model.beta",
                      "model.xi", "model.n_s", "model.eta", "model.dark_prob")
            if k in self.values
        }
        if "model.tau_ns" in self.values or "model.decoherence_shape" in self.values:
            base = m.decoherence if m.decoherence.tau != float("inf") else default_decoherence()
            tau = self.values.get("model.tau_ns", base.tau)
            shape = self.values.get("model.decoherence_shape", base.shape)
            try:
                changes["decoherence"] = DecoherenceModel(tau, DecayShape(shape))
            except ValueError as exc:
                raise ConfigError(f"model.tau_ns: {exc}") from None
        try:
            return m.replace(**changes)
        except PhysicsError:
            raise
        except ValueError as exc:
            raise PhysicsError(str(exc)) from None

    def window(self, delta_t: float) -> CoincidenceWindow:
        w = self.get("experiment.window_ns")
        try:
            if w is not None:
                if len(w) != 2:
                    raise ValueError("experiment.window_ns needs exactly two values lo,hi")
                return CoincidenceWindow(w[0], w[1])
            return reference_window(delta_t)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def as_dict(self) -> dict[str, Any]:
        merged = dict(DEFAULTS)
        merged["model.efficiencies"] = self.get("model.efficiencies")
        merged.update(self.values)
        return {k: merged[k] for k in sorted(merged)}


def load_config(experiment: str, path=None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
    values.update(overrides or {})
    kind = values.pop("experiment.kind", experiment)
    if kind != experiment:
        raise ConfigError(f"config is for experiment {kind!r}, but {experiment!r} was requested")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = RunConfig(experiment, values)
    if experiment == "analyze":
        inputs = cfg.get("experiment.inputs")
        if not inputs or len(inputs) not in (2, 4):
            raise ConfigError("analyze needs experiment.inputs with 2 (H,V) or 4 (H,V,+,-) event files")
        for p in inputs:
            if not Path(p).is_file():
                raise ConfigError(f"experiment.inputs: no such file {p}")
    if experiment == "fringe-scan":
        grid = cfg.get("experiment.theta_s_deg")
        if grid is not None and not grid:
            raise ConfigError("experiment.theta_s_deg is empty")
    if experiment == "delay-scan" and not cfg.get("experiment.delta_t_list_ns"):
        raise ConfigError("experiment.delta_t_list_ns is empty")
    return cfg
