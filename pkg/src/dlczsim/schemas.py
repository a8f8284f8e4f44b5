"""JSON Schemas (draft 2020-12) of the ``summary.json`` files.

Every summary shares an envelope; ``results`` depends on the experiment.
The package itself does not validate against these; the test suite does.
"""

from __future__ import annotations

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_window = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_value_err = {
    "type": ["object", "null"],
    "required": ["value", "error"],
    "properties": {"value": _num, "error": _num, "method": {"enum": ["linear", "bootstrap"]}},
}

_verdict = {
    "type": ["object", "null"],
    "required": ["kind", "limit", "exceeds", "margin"],
    "properties": {
        "kind": {"enum": ["state_transfer", "entanglement"]},
        "limit": _num,
        "exceeds": {"type": "boolean"},
        "margin": {"type": "number", "minimum": 0},
    },
}

_table = {
    "type": "object",
    "required": ["basis", "probabilities", "errors", "counts", "empty_rows"],
    "properties": {
        "basis": {"enum": ["0", "45"]},
        "probabilities": {"type": "object", "additionalProperties": _opt_num},
        "errors": {"type": "object", "additionalProperties": _opt_num},
        "counts": {
            "type": ["array", "null"],
            "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        },
        "empty_rows": {"type": "array", "items": {"enum": [0, 1]}},
    },
}

_fidelities = {
    "F_0": _value_err,
    "F_45": _value_err,
    "F_si": _value_err,
    "verdicts": {
        "type": "object",
        "required": ["F_0", "F_45", "F_si"],
        "properties": {"F_0": _verdict, "F_45": _verdict, "F_si": _verdict},
    },
    "tables": {"type": "object", "additionalProperties": _table},
    "n_coincidences": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
}

RESULTS = {
    "fringe-scan": {
        "type": "object",
        "required": ["idler_basis_deg", "delta_t_ns", "window_ns", "n_trials_per_angle", "n_points", "fit", "peak"],
        "properties": {
            "idler_basis_deg": {"enum": [0, 45]},
            "delta_t_ns": _num,
            "window_ns": _window,
            "n_trials_per_angle": {"type": "integer", "minimum": 1},
            "n_points": {"type": "integer", "minimum": 1},
            "fit": {
                "type": ["object", "null"],
                "required": ["visibility", "stderr", "residual", "raw_visibility", "offset_rad"],
                "properties": {"visibility": {"type": "number", "minimum": 0, "maximum": 1}},
            },
            "peak": {"type": ["object", "null"], "required": ["theta_s_deg", "p", "error"]},
        },
    },
    "basis-correlation": {
        "type": "object",
        "required": ["F_0", "F_45", "F_si", "verdicts", "tables", "n_coincidences", "delta_t_ns", "window_ns",
                     "n_trials_per_setting", "model_prediction"],
        "properties": {
            **_fidelities,
            "delta_t_ns": _num,
            "window_ns": _window,
            "n_trials_per_setting": {"type": "integer", "minimum": 1},
            "model_prediction": {
                "type": "object",
                "required": ["F_0", "F_45", "F_si"],
                "additionalProperties": _num,
            },
        },
    },
    "delay-scan": {
        "type": "object",
        "required": ["n_trials_per_setting", "series", "bins"],
        "properties": {
            "n_trials_per_setting": {"type": "integer", "minimum": 1},
            "series": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["delta_t_ns", "window_ns", "monotone_non_increasing"],
                    "properties": {"window_ns": _window, "monotone_non_increasing": {"type": ["boolean", "null"]}},
                },
            },
            "bins": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["delta_t_ns", "bin", "bin_lo_ns", "bin_hi_ns", "mean_delay_ns", "f_si",
                                 "f_si_error", "n_pairs", "empty", "below_threshold", "f_model"],
                    "properties": {
                        "bin": {"enum": [0, 1, 2, 3]},
                        "f_si": _opt_num,
                        "f_si_error": _opt_num,
                        "mean_delay_ns": _opt_num,
                        "n_pairs": {"type": "integer", "minimum": 0},
                        "empty": {"type": "boolean"},
                        "below_threshold": {"type": "boolean"},
                        "f_model": _num,
                    },
                },
            },
        },
    },
    "rates": {
        "type": "object",
        "required": ["r_s", "r_si", "zeta", "n_s_inferred", "r_2"],
        "additionalProperties": {"type": "number", "minimum": 0},
    },
    "simulate": {
        "type": "object",
        "required": ["n_trials", "delta_t_ns", "format", "files"],
        "properties": {
            "n_trials": {"type": "integer", "minimum": 1},
            "format": {"enum": ["csv", "bin"]},
            "files": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "required": ["D1", "D2", "D3"],
                    "additionalProperties": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
    "analyze": {
        "type": "object",
        "required": ["F_0", "F_45", "F_si", "verdicts", "tables", "n_coincidences", "delta_t_ns", "window_ns",
                     "inputs", "warnings"],
        "properties": {
            **_fidelities,
            "window_ns": _window,
            "inputs": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 4},
            "warnings": {"type": "array", "items": {"type": "string"}},
        },
    },
}


def summary_schema(experiment: str) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["schema_version", "experiment", "seed", "config", "results"],
        "properties": {
            "schema_version": {"const": 1},
            "experiment": {"const": experiment},
            "seed": {"type": "integer", "minimum": 0},
            "config": {"type": "object"},
            "results": RESULTS[experiment],
        },
    }
