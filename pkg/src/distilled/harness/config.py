"""Experiment configuration: presets plus an INI override file.

File grammar (``configparser``): a ``[run]`` section and one section per
module (``[medical]``, ``[pinn]``, ``[mixar]``). Each line is
``key = value`` with ``key`` a field name below. Lists are comma
separated; booleans use ``true``/``false``; ``#`` or ``;`` starts a
comment. Unknown sections or keys are errors. Values not given keep the
preset's value.

    [run]
    experiment = medical
    preset = desk
    root_seed = 7

    [medical]
    ipcs = 10, 20
    iterations = 100, 400
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

EXPERIMENTS = ("medical", "pinn", "mixar", "baselines")
PRESETS = ("desk", "paper")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MedicalConfig:
    n_vars: int = 10
    n_slices: tuple[int, ...] = (2,)
    n_obs: int = 500
    n_test: int = 500
    partitions: int = 3
    hide_frac: float = 0.2
    noise_std: float = 0.1
    edge_prob: float = 0.15
    max_parents: int = 3
    ipcs: tuple[int, ...] = (10, 20)
    iterations: tuple[int, ...] = (100, 400)
    m_perturbations: int = 10
    sigma: float = 0.05
    schedule: str = "constant"  # constant | inverse-sqrt | step-decay
    step: float = 1e-3
    decay_factor: float = 0.5
    decay_every: int = 100
    batch_rows: int = 100
    em_iters: int = 3
    trace_every: int = 10


@dataclass(frozen=True)
class PinnConfig:
    n_bcs: int = 20
    n_test_bcs: int = 20
    n_interior: int = 380
    n_boundary: int = 20
    noise_std: float = 0.05
    tail_a: float = 0.4
    a_sweep: tuple[float, ...] = (0.5, 0.4, 0.3, 0.2)
    widths: tuple[int, ...] = (2, 16, 16, 16, 1)
    epochs: int = 1000
    lr: float = 1e-3
    residual_weight: float = 1.0
    outer_residual_weight: float = 0.0  # PDE term in the DFO objective; 0 = reconstruction only
    ipcs: tuple[int, ...] = (10, 20, 40)
    budgets: tuple[int, ...] = (5, 20, 100)
    mutation_scale: float = 0.3
    scale_adapt: float = 1.5
    risk: str = "cvar"  # cvar | mean
    tail_fraction: float = 0.2
    gaussian_init_ipcs: tuple[int, ...] = ()
    ood_ipc: int = 40


@dataclass(frozen=True)
class MixarConfig:
    n_features: int = 2
    n_components: int = 3
    true_weights: tuple[float, ...] = (1.0, 0.0, 0.0)
    concentration: float = 0.2
    n_sequences: int = 20
    length: int = 501
    ipcs: tuple[int, ...] = (1, 2, 5)
    window_length: int = 3
    max_sweeps: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "medical"
    preset: str = "desk"
    root_seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    output_dir: str = "results"
    medical: MedicalConfig = field(default_factory=MedicalConfig)
    pinn: PinnConfig = field(default_factory=PinnConfig)
    mixar: MixarConfig = field(default_factory=MixarConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def preset(name: str, experiment: str = "medical") -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown value {name!r} (choose from {', '.join(PRESETS)})")
    if name == "desk":
        return validate(ExperimentConfig(experiment=experiment))
    return validate(ExperimentConfig(
        experiment=experiment,
        preset="paper",
        medical=MedicalConfig(
            n_vars=20, n_slices=(2, 10), n_obs=1000, n_test=1000, partitions=5,
            ipcs=(10, 20, 50, 100), iterations=(160, 1000, 4000, 5500),
            sigma=0.05, step=4e-5,
        ),
        pinn=PinnConfig(
            n_bcs=100, n_test_bcs=100, n_interior=2540, n_boundary=80,
            widths=(2, 32, 32, 32, 1), epochs=1000, lr=1e-3,
            ipcs=(10, 20, 40, 80), budgets=(5, 10, 20, 40, 100, 200), ood_ipc=80,
            gaussian_init_ipcs=(10,),
        ),
        mixar=MixarConfig(n_features=3, n_sequences=100, length=1001, ipcs=(1, 5, 20),
                          window_length=5),
    ))


def _positive(section: str, name: str, value) -> None:
    vals = value if isinstance(value, tuple) else (value,)
    if any(v <= 0 for v in vals):
        raise ConfigError(f"{section}.{name}: must be positive, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"run.experiment: unknown value {cfg.experiment!r}")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"run.preset: unknown value {cfg.preset!r}")
    if not cfg.seeds or len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("run.seeds: must be a non-empty list of distinct integers")
    med = cfg.medical
    for name in ("n_vars", "n_obs", "n_test", "partitions", "m_perturbations", "sigma",
                 "step", "batch_rows", "em_iters", "trace_every", "ipcs", "iterations",
                 "n_slices", "max_parents"):
        _positive("medical", name, getattr(med, name))
    if len(med.ipcs) != len(med.iterations):
        raise ConfigError("medical.iterations: need one iteration count per entry of medical.ipcs")
    if not 0.0 <= med.hide_frac < 1.0:
        raise ConfigError("medical.hide_frac: must lie in [0, 1)")
    if med.schedule not in ("constant", "inverse-sqrt", "step-decay"):
        raise ConfigError(f"medical.schedule: unknown value {med.schedule!r}")
    if any(i < 2 for i in med.ipcs) or max(med.ipcs) > med.n_obs:
        raise ConfigError("medical.ipcs: each must lie in [2, n_obs]")
    p = cfg.pinn
    for name in ("n_bcs", "n_test_bcs", "n_interior", "n_boundary", "epochs", "lr",
                 "budgets", "mutation_scale", "tail_fraction", "widths"):
        _positive("pinn", name, getattr(p, name))
    if any(i < 4 for i in p.ipcs):
        raise ConfigError("pinn.ipcs: each must be >= 4")
    if p.ood_ipc < 4:
        raise ConfigError("pinn.ood_ipc: must be >= 4")
    if p.widths[0] != 2 or p.widths[-1] != 1:
        raise ConfigError("pinn.widths: input width must be 2 and output width 1")
    if any(not 0.0 < a <= 0.5 for a in (p.tail_a, *p.a_sweep)):
        raise ConfigError("pinn.tail_a / pinn.a_sweep: must lie in (0, 0.5]")
    if p.risk not in ("cvar", "mean"):
        raise ConfigError(f"pinn.risk: unknown value {p.risk!r}")
    if p.tail_fraction > 1.0:
        raise ConfigError("pinn.tail_fraction: must lie in (0, 1]")
    if p.residual_weight < 0 or p.outer_residual_weight < 0:
        raise ConfigError("pinn.residual_weight / pinn.outer_residual_weight: must be >= 0")
    if p.scale_adapt <= 1.0:
        raise ConfigError("pinn.scale_adapt: must be > 1")
    m = cfg.mixar
    for name in ("n_features", "n_components", "n_sequences", "ipcs", "max_sweeps",
                 "concentration"):
        _positive("mixar", name, getattr(m, name))
    if len(m.true_weights) != m.n_components or abs(sum(m.true_weights) - 1.0) > 1e-9 \
            or any(w < 0 for w in m.true_weights):
        raise ConfigError("mixar.true_weights: need n_components nonnegative weights summing to 1")
    if not 2 <= m.window_length <= m.length:
        raise ConfigError("mixar.window_length: must lie in [2, length]")
    return cfg


def _parse_value(section: str, name: str, raw: str, typ):
    origin = typing.get_origin(typ)
    try:
        if origin is tuple:
            (inner, _) = typing.get_args(typ)
            return tuple(_parse_value(section, name, x.strip(), inner)
                         for x in raw.split(",") if x.strip())
        if typ is bool:
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{section}.{name}: cannot parse {raw!r}") from None


def _apply(section: str, obj, items: dict[str, str]):
    hints = typing.get_type_hints(type(obj))
    known = {f.name for f in fields(obj) if not dataclasses.is_dataclass(hints[f.name])}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
        updates[key] = _parse_value(section, key, raw, hints[key])
    return replace(obj, **updates)


def load_config(
    path: str | Path | None = None,
    *,
    experiment: str | None = None,
    preset_name: str | None = None,
    seed: int | None = None,
    output_dir: str | None = None,
) -> ExperimentConfig:
    """Resolve a config: preset, then file overrides, then explicit arguments."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
    for sec in parser.sections():
        if sec not in ("run", "medical", "pinn", "mixar"):
            raise ConfigError(f"unknown section [{sec}]")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    name = preset_name or run.pop("preset", None) or "desk"
    run.pop("preset", None)
    exp = experiment or run.get("experiment") or "medical"
    cfg = preset(name, exp)
    cfg = _apply("run", cfg, run)
    for sec in ("medical", "pinn", "mixar"):
        if parser.has_section(sec):
            cfg = replace(cfg, **{sec: _apply(sec, getattr(cfg, sec), dict(parser[sec]))})
    if experiment is not None:
        cfg = replace(cfg, experiment=experiment)
    if seed is not None:
        cfg = replace(cfg, root_seed=int(seed))
    if output_dir is not None:
        cfg = replace(cfg, output_dir=str(output_dir))
    return validate(cfg)
