import json
import subprocess
import sys

import pytest

from distilled.harness import cli
from distilled.harness.config import ConfigError, load_config, preset

TINY = {
    "medical": """
[run]
seeds = 0, 1
[medical]
n_vars = 4
n_obs = 60
n_test = 60
partitions = 2
ipcs = 6
iterations = 3
m_perturbations = 2
batch_rows = 20
em_iters = 1
trace_every = 1
""",
    "pinn": """
[run]
seeds = 0
[pinn]
n_bcs = 2
n_test_bcs = 2
n_interior = 20
n_boundary = 8
widths = 2, 4, 1
epochs = 5
ipcs = 4
budgets = 2, 3
gaussian_init_ipcs = 4
ood_ipc = 4
a_sweep = 0.4, 0.3
""",
    "mixar": """
[run]
seeds = 0
[mixar]
n_sequences = 3
length = 30
ipcs = 1, 2
window_length = 3
max_sweeps = 2
""",
    "baselines": """
[run]
seeds = 0
[medical]
n_vars = 4
n_obs = 60
n_test = 60
partitions = 2
ipcs = 6
iterations = 3
""",
}


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_desk_defaults():
    cfg = load_config(experiment="pinn")
    assert cfg.preset == "desk" and cfg.experiment == "pinn"
    assert cfg.pinn.ipcs == (10, 20, 40)
    assert cfg.seeds == (0, 1, 2)


def test_paper_preset_scale():
    cfg = preset("paper", "medical")
    assert cfg.medical.n_vars == 20 and cfg.medical.ipcs == (10, 20, 50, 100)
    assert cfg.medical.iterations == (160, 1000, 4000, 5500)
    assert cfg.pinn.n_interior == 2540 and cfg.pinn.n_boundary == 80


def test_file_overrides_and_precedence(tmp_path):
    p = _write(tmp_path, "[run]\nroot_seed = 7\n[medical]\nipcs = 4, 8\niterations = 1, 2\nsigma = 0.2\n")
    cfg = load_config(p, experiment="medical")
    assert cfg.root_seed == 7 and cfg.medical.ipcs == (4, 8) and cfg.medical.sigma == 0.2
    assert load_config(p, experiment="medical", seed=3).root_seed == 3


@pytest.mark.parametrize("text, field", [
    ("[medical]\nbogus = 1\n", "medical.bogus"),
    ("[nope]\nx = 1\n", "nope"),
    ("[medical]\nsigma = abc\n", "medical.sigma"),
    ("[medical]\nipcs = 10, 20, 30\n", "medical.iterations"),
    ("[pinn]\nipcs = 2\n", "pinn.ipcs"),
    ("[mixar]\ntrue_weights = 0.5, 0.2, 0.2\n", "mixar.true_weights"),
    ("[medical]\nschedule = cosine\n", "medical.schedule"),
])
def test_bad_config_names_field(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(_write(tmp_path, text), experiment="medical")


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.ini")


def test_cli_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["medical", "--config", str(_write(tmp_path, "[medical]\nbogus = 1\n")),
                     "--out", str(tmp_path / "o"), "-q"])
    assert code == 2
    assert "medical.bogus" in capsys.readouterr().err


def test_cli_divergence_exit_code(tmp_path, capsys):
    p = _write(tmp_path, TINY["medical"] + "step = 1e300\n")
    assert cli.main(["medical", "--config", str(p), "--out", str(tmp_path / "o"), "-q"]) == 3
    assert "divergence" in capsys.readouterr().err


def test_cli_success_and_unknown_experiment(tmp_path):
    p = _write(tmp_path, TINY["mixar"])
    assert cli.main(["mixar", "--config", str(p), "--out", str(tmp_path / "o"), "-q"]) == 0
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])


def test_console_script_module_entry(tmp_path):
    p = _write(tmp_path, TINY["mixar"])
    r = subprocess.run([sys.executable, "-m", "distilled.harness.cli", "mixar", "--config", str(p),
                        "--out", str(tmp_path / "o"), "-q"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "mixar_manifest.json" in r.stdout


def _run_twice(tmp_path, experiment):
    p = _write(tmp_path, TINY[experiment])
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main([experiment, "--config", str(p), "--out", str(out), "-q"]) == 0
        outs.append(out)
    return outs


@pytest.mark.parametrize("experiment", ["medical", "pinn", "mixar", "baselines"])
def test_byte_identical_outputs(tmp_path, experiment):
    a, b = _run_twice(tmp_path, experiment)
    files = sorted(f.name for f in a.iterdir() if f.name != "run.log")
    assert files == sorted(f.name for f in b.iterdir() if f.name != "run.log")
    assert any(f.endswith("_manifest.json") for f in files)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_seed_changes_results(tmp_path):
    p = _write(tmp_path, TINY["mixar"])
    cli.main(["mixar", "--config", str(p), "--out", str(tmp_path / "a"), "-q", "--seed", "0"])
    cli.main(["mixar", "--config", str(p), "--out", str(tmp_path / "b"), "-q", "--seed", "1"])
    assert (tmp_path / "a/mixar_results.csv").read_bytes() != (tmp_path / "b/mixar_results.csv").read_bytes()


def test_manifest_contents(tmp_path):
    p = _write(tmp_path, TINY["medical"])
    cli.main(["medical", "--config", str(p), "--out", str(tmp_path / "o"), "-q", "--seed", "5"])
    man = json.loads((tmp_path / "o/medical_manifest.json").read_text())
    assert man["root_seed"] == 5
    assert man["config"]["medical"]["n_vars"] == 4
    for f in man["files"]:
        assert (tmp_path / "o" / f).exists()
    header = (tmp_path / "o/medical_results.csv").read_text().splitlines()[0]
    assert header == "n_slices,ipc,seed,method,test_ll"


def test_inline_comments(tmp_path):
    p = _write(tmp_path, "[medical]\nschedule = inverse-sqrt   # comment\nipcs = 10, 20  ; other\n")
    cfg = load_config(p)
    assert cfg.medical.schedule == "inverse-sqrt" and cfg.medical.ipcs == (10, 20)
