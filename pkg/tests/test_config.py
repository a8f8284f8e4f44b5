import pytest

from dlczsim.config import KEYS, load_config, parse_overrides, read_config_file
from dlczsim.errors import ConfigError, PhysicsError
from dlczsim.memory import DecayShape


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_parse_file_and_types(tmp_path):
    p = write(tmp_path, "# comment\n\nmodel.alpha = 0.04  # inline\nexperiment.delta_t_list_ns = 100, 200\nseed = 0x10\n")
    v = read_config_file(p)
    assert v == {"model.alpha": 0.04, "experiment.delta_t_list_ns": [100.0, 200.0], "seed": 16}


@pytest.mark.parametrize(
    "text, match",
    [
        ("seed = 1\nmodel.alfa = 0.1\n", r"run.cfg:2: unknown key 'model.alfa'"),
        ("seed = 1\n\nmodel.alpha 0.1\n", r"run.cfg:3: expected 'key = value'"),
        ("experiment.n_trials = -4\n", r"run.cfg:1: bad value '-4'"),
        ("model.preset = best\n", r"run.cfg:1: bad value 'best'"),
        ("seed = -1\n", r"run.cfg:1:"),
    ],
)
def test_errors_are_line_precise(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        read_config_file(write(tmp_path, text))


def test_missing_file():
    with pytest.raises(ConfigError):
        read_config_file("/nonexistent/run.cfg")


def test_overrides_win(tmp_path):
    p = write(tmp_path, "model.v_pop = 0.5\nschedule.delta_t_ns = 200\n")
    cfg = load_config("basis-correlation", p, parse_overrides(["--model.v_pop", "0.6", "--seed=9"]))
    assert cfg.model().v_pop == 0.6
    assert cfg.schedule().delta_t == 200
    assert cfg.seed == 9
    with pytest.raises(ConfigError, match="--model.nope"):
        parse_overrides(["--model.nope", "1"])
    with pytest.raises(ConfigError, match="missing value"):
        parse_overrides(["--seed"])


def test_default_efficiencies_depend_on_experiment():
    assert load_config("rates").model().alpha == 0.05
    assert load_config("basis-correlation").model().alpha == 0.5
    assert load_config("basis-correlation", overrides={"model.efficiencies": "measured"}).model().alpha == 0.05


def test_model_building():
    cfg = load_config("fringe-scan", overrides={"model.preset": "noiseless"})
    m = cfg.model()
    assert (m.v_pop, m.v_coh, m.background) == (1.0, 1.0, 0.0)
    cfg = load_config("fringe-scan", overrides={"model.tau_ns": 90.0, "model.decoherence_shape": "exponential"})
    assert cfg.model().decoherence.tau == 90.0 and cfg.model().decoherence.shape is DecayShape.EXPONENTIAL
    with pytest.raises(ConfigError):
        load_config("fringe-scan", overrides={"schedule.delta_t_ns": 150.0}).model()
    with pytest.raises(PhysicsError):
        load_config("fringe-scan", overrides={"model.v_pop": 1.5}).model()


def test_runconfig_invariants(tmp_path):
    with pytest.raises(ConfigError, match="2 .H,V. or 4"):
        load_config("analyze")
    with pytest.raises(ConfigError, match="no such file"):
        load_config("analyze", overrides={"experiment.inputs": ["a.csv", "b.csv"]})
    with pytest.raises(ConfigError, match="empty"):
        load_config("fringe-scan", overrides={"experiment.theta_s_deg": []})
    with pytest.raises(ConfigError):
        load_config("rates", overrides={"experiment.kind": "delay-scan"})
    with pytest.raises(ConfigError):
        load_config("fringe-scan", overrides={"experiment.window_ns": [0.0, 20.0, 40.0]}).window(100)


def test_every_key_documented():
    assert all(doc for _, doc in KEYS.values())
