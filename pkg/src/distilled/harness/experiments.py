"""Experiment drivers. Each writes CSV tables plus a JSON manifest carrying
the resolved config and root seed; wall-clock timings go to ``run.log``
only, so result files are byte-reproducible."""

from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from pathlib import Path

import numpy as np

from distilled.core import RiskMeasure, distribution_match_objective, sample_subset_baseline
from distilled.dfo import DfoConfig
from distilled.gdbn import (
    corrupt_partitions,
    distill_medical,
    initial_synthetic,
    mean_test_ll,
    random_gdbn,
    sample_gdbn,
)
from distilled.harness.config import ExperimentConfig, MedicalConfig
from distilled.mixar import (
    MixtureArModel,
    greedy_distill_categorical,
    pipeline_loss,
    posterior_mixture_weights,
    random_components,
    sample_series,
    subsample_windows,
    transition_counts,
)
from distilled.pinn import BoundaryPrior, TRAIN_LOWER, TEST_UPPER, TrainConfig, generate_pinn_data, train_with
from distilled.pinn.distill import (
    GAUSSIAN_NOISE,
    SUBSAMPLE_TRAIN,
    distill_pinn,
    l2_test_error,
    subsample_dataset,
    to_pinn_dataset,
)
from distilled.seeding import derive_seed, seed_plan
from distilled.zo import Constant, DivergenceError, InverseSqrt, StepDecay, ZoConfig

log = logging.getLogger("distilled")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _write_manifest(out: Path, name: str, cfg: ExperimentConfig, files: list[str], summary: dict) -> Path:
    path = out / f"{name}_manifest.json"
    config = cfg.to_dict()
    # where the files land does not affect them
    config.pop("output_dir")
    doc = {"experiment": name, "root_seed": cfg.root_seed, "config": config,
           "files": files, "summary": summary}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _prepare(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_timing(out: Path, label: str, seconds: float) -> None:
    # timings are kept out of the result files
    with open(out / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {label} {seconds:.1f}s\n")
    log.info("%s finished in %.1fs", label, seconds)


def _median(xs) -> float:
    return float(statistics.median(xs))


# medical -------------------------------------------------------------------

def _schedule(med: MedicalConfig):
    if med.schedule == "constant":
        return Constant(med.step)
    if med.schedule == "inverse-sqrt":
        return InverseSqrt(med.step)
    return StepDecay(med.step, med.decay_factor, med.decay_every)


def _medical_world(cfg: ExperimentConfig, n_slices: int, seed: int):
    med = cfg.medical
    pre = f"medical/T{n_slices}/seed{seed}"
    s = seed_plan(cfg.root_seed, [f"{pre}/{k}" for k in
                                  ("gdbn", "train", "test", "corrupt", "distill", "subset")])
    s = {k.rsplit("/", 1)[1]: v for k, v in s.items()}
    dbn = random_gdbn(med.n_vars, n_slices, med.edge_prob, s["gdbn"], med.max_parents)
    clean = sample_gdbn(dbn, med.n_obs, s["train"])
    test = sample_gdbn(dbn, med.n_test, s["test"])
    train = corrupt_partitions(clean, med.partitions, med.hide_frac, med.noise_std, s["corrupt"])
    return clean, test, train, s


def _checked_test_ll(data, test, n_vars, n_slices, max_parents, k) -> float:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            ll = mean_test_ll(data, test, n_vars, n_slices, max_parents)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise DivergenceError(f"divergence at iteration {k}: {exc}", []) from exc
    if not np.isfinite(ll):
        raise DivergenceError(f"divergence at iteration {k}: test log-likelihood {ll}", [])
    return ll


def run_medical(cfg: ExperimentConfig) -> list[Path]:
    """Distilled vs clean subset vs full clean train, per IPC and seed."""
    out = _prepare(cfg)
    med = cfg.medical
    rows, trace_rows = [], []
    for n_slices in med.n_slices:
        for seed in cfg.seeds:
            clean, test, train, s = _medical_world(cfg, n_slices, seed)
            full_ll = mean_test_ll(clean, test, med.n_vars, n_slices, med.max_parents)
            for ipc, iters in zip(med.ipcs, med.iterations):
                t0 = time.perf_counter()
                zo_cfg = ZoConfig(med.m_perturbations, med.sigma, iters, _schedule(med))
                cell_trace = []

                def record(k, d, _t=cell_trace, _T=n_slices):
                    if k % med.trace_every == 0 or k == iters:
                        _t.append((k, _checked_test_ll(d.values, test, med.n_vars, _T, med.max_parents, k)))

                d_hat, zo_trace = distill_medical(
                    train, ipc, zo_cfg, derive_seed(s["distill"], ipc), n_vars=med.n_vars, n_slices=n_slices,
                    batch_rows=med.batch_rows, max_parents=med.max_parents,
                    em_iters=med.em_iters, callback=record,
                )
                dd_loss = dict(zo_trace)
                for k, ll in cell_trace:
                    trace_rows.append([n_slices, ipc, seed, k, ll, dd_loss.get(k, float("nan"))])
                sub = sample_subset_baseline(clean, ipc, derive_seed(s["subset"], ipc))
                rows.append([n_slices, ipc, seed, "distilled", cell_trace[-1][1]])
                rows.append([n_slices, ipc, seed, "subset",
                             mean_test_ll(sub.values, test, med.n_vars, n_slices, med.max_parents)])
                rows.append([n_slices, ipc, seed, "full", full_ll])
                _log_timing(out, f"medical T={n_slices} ipc={ipc} seed={seed}",
                            time.perf_counter() - t0)
    res = out / "medical_results.csv"
    tr = out / "medical_trace.csv"
    _write_csv(res, ["n_slices", "ipc", "seed", "method", "test_ll"], rows)
    _write_csv(tr, ["n_slices", "ipc", "seed", "iteration", "test_ll", "dd_loss"], trace_rows)
    summary = _median_summary(rows, key_cols=(0, 1), method_col=3, value_col=4)
    man = _write_manifest(out, "medical", cfg, [res.name, tr.name], {"median_test_ll": summary})
    return [res, tr, man]


def _median_summary(rows, key_cols, method_col, value_col) -> dict:
    groups: dict[str, list[float]] = {}
    for r in rows:
        key = "/".join(str(r[c]) for c in key_cols) + f"/{r[method_col]}"
        groups.setdefault(key, []).append(float(r[value_col]))
    return {k: _median(v) for k, v in sorted(groups.items())}


# baselines -----------------------------------------------------------------

def distribution_matching(d_init, train_matrix: np.ndarray, steps: int = 50):
    """Gradient descent on the mean-matching objective (identity encoder)."""
    d = d_init
    lr = d.ipc / 4.0  # halves the mean gap every step
    for _ in range(steps):
        _, grad = distribution_match_objective(d, train_matrix)
        d = d.with_values(d.values - lr * grad)
    return d


def run_baselines(cfg: ExperimentConfig) -> list[Path]:
    """Clean subset, distribution matching and full clean train on the medical task."""
    out = _prepare(cfg)
    med = cfg.medical
    rows = []
    for n_slices in med.n_slices:
        for seed in cfg.seeds:
            clean, test, train, s = _medical_world(cfg, n_slices, seed)
            stacked, _ = train.stacked()
            # column means over visible entries only; a column hidden everywhere gets 0
            seen = ~np.isnan(stacked)
            col_mean = np.where(seen, stacked, 0.0).sum(axis=0) / np.maximum(seen.sum(axis=0), 1)
            filled = np.where(np.isnan(stacked), col_mean, stacked)
            full_ll = mean_test_ll(clean, test, med.n_vars, n_slices, med.max_parents)
            for ipc in med.ipcs:
                d0 = initial_synthetic(train, ipc, med.n_vars, n_slices, derive_seed(s["distill"], ipc))
                dm = distribution_matching(d0, filled)
                sub = sample_subset_baseline(clean, ipc, derive_seed(s["subset"], ipc))
                for method, data in (("subset", sub.values), ("distribution-matching", dm.values)):
                    rows.append([n_slices, ipc, seed, method,
                                 mean_test_ll(data, test, med.n_vars, n_slices, med.max_parents)])
                rows.append([n_slices, ipc, seed, "full", full_ll])
    res = out / "baselines_results.csv"
    _write_csv(res, ["n_slices", "ipc", "seed", "method", "test_ll"], rows)
    summary = _median_summary(rows, key_cols=(0, 1), method_col=3, value_col=4)
    man = _write_manifest(out, "baselines", cfg, [res.name], {"median_test_ll": summary})
    return [res, man]


# pinn ----------------------------------------------------------------------

def _pinn_world(cfg: ExperimentConfig, a: float, seed: int):
    p = cfg.pinn
    pre = f"pinn/a{a:g}/seed{seed}"
    s = seed_plan(cfg.root_seed, [f"{pre}/{k}" for k in ("train", "test", "net", "distill", "subset")])
    s = {k.rsplit("/", 1)[1]: v for k, v in s.items()}
    train_prior = BoundaryPrior(a, TRAIN_LOWER)
    train = generate_pinn_data(train_prior, p.n_bcs, p.n_interior, p.n_boundary, p.noise_std, s["train"])
    # same seed, no noise: identical offsets with clean labels
    clean = generate_pinn_data(train_prior, p.n_bcs, p.n_interior, p.n_boundary, 0.0, s["train"])
    test = generate_pinn_data(BoundaryPrior(a, TEST_UPPER), p.n_test_bcs, p.n_interior,
                              p.n_boundary, 0.0, s["test"])
    tcfg = TrainConfig(tuple(p.widths), p.epochs, p.lr, p.residual_weight, s["net"])
    return train, clean, test, tcfg, s


def _pinn_cell(cfg: ExperimentConfig, a: float, seed: int, ipc: int) -> dict:
    p = cfg.pinn
    train, clean, test, tcfg, s = _pinn_world(cfg, a, seed)
    risk = RiskMeasure.cvar(p.tail_fraction) if p.risk == "cvar" else RiskMeasure.mean()
    budgets = sorted(p.budgets)
    dfo = DfoConfig(budgets[-1], p.mutation_scale, p.scale_adapt)
    mode = GAUSSIAN_NOISE if ipc in p.gaussian_init_ipcs else SUBSAMPLE_TRAIN
    _, rep = distill_pinn(train, ipc, dfo, mode, derive_seed(s["distill"], ipc), train_cfg=tcfg, risk=risk,
                          test_bcs=test, checkpoints=budgets,
                          outer_residual_weight=p.outer_residual_weight)
    sub = subsample_dataset(clean, ipc, derive_seed(s["subset"], ipc))
    baseline = l2_test_error(train_with(to_pinn_dataset(sub), tcfg), test)
    return {"test_l2": rep["test_l2"], "best_loss": rep["best_loss"], "subset": baseline,
            "init_mode": mode}


def run_pinn(cfg: ExperimentConfig) -> list[Path]:
    """Budget x IPC table against the clean subset, plus the tail-distance sweep."""
    out = _prepare(cfg)
    p = cfg.pinn
    budgets = sorted(p.budgets)
    rows, cells = [], {}
    for ipc in p.ipcs:
        for seed in cfg.seeds:
            t0 = time.perf_counter()
            cell = _pinn_cell(cfg, p.tail_a, seed, ipc)
            cells[(ipc, seed)] = cell
            for b in budgets:
                rows.append([ipc, seed, b, "distilled", cell["test_l2"][b], cell["best_loss"][b]])
            rows.append([ipc, seed, "", "subset", cell["subset"], ""])
            _log_timing(out, f"pinn ipc={ipc} seed={seed}", time.perf_counter() - t0)
    res = out / "pinn_results.csv"
    _write_csv(res, ["ipc", "seed", "budget", "method", "test_l2", "outer_loss"], rows)

    # table: median over seeds, rows = budgets + best + subset, columns = IPC
    table = {}
    for b in budgets:
        table[f"budget={b}"] = {ipc: _median([cells[(ipc, s)]["test_l2"][b] for s in cfg.seeds])
                                for ipc in p.ipcs}
    table["best"] = {ipc: _median([min(cells[(ipc, s)]["test_l2"].values()) for s in cfg.seeds])
                     for ipc in p.ipcs}
    table["subset"] = {ipc: _median([cells[(ipc, s)]["subset"] for s in cfg.seeds]) for ipc in p.ipcs}
    tab_csv = out / "pinn_table.csv"
    _write_csv(tab_csv, ["row", *(f"ipc={i}" for i in p.ipcs)],
               [[name, *(vals[i] for i in p.ipcs)] for name, vals in table.items()])
    wins = {ipc: sum(min(cells[(ipc, s)]["test_l2"].values()) < cells[(ipc, s)]["subset"]
                     for s in cfg.seeds) for ipc in p.ipcs}

    ood_rows = []
    for a in p.a_sweep:
        for seed in cfg.seeds:
            if a == p.tail_a and (p.ood_ipc, seed) in cells:
                cell = cells[(p.ood_ipc, seed)]
            else:
                t0 = time.perf_counter()
                cell = _pinn_cell(cfg, a, seed, p.ood_ipc)
                _log_timing(out, f"pinn ood a={a} seed={seed}", time.perf_counter() - t0)
            ood_rows.append([a, seed, p.ood_ipc, cell["test_l2"][budgets[-1]],
                             min(cell["test_l2"].values()), cell["subset"]])
    ood = out / "pinn_ood.csv"
    _write_csv(ood, ["a", "seed", "ipc", "final_test_l2", "best_test_l2", "subset_test_l2"], ood_rows)
    ood_median = {a: _median([r[3] for r in ood_rows if r[0] == a]) for a in p.a_sweep}
    tab_json = out / "pinn_table.json"
    tab_json.write_text(json.dumps(_jsonable({"columns": list(p.ipcs), "rows": table}),
                                   indent=2, sort_keys=True) + "\n", encoding="utf-8")
    man = _write_manifest(out, "pinn", cfg, [res.name, tab_csv.name, tab_json.name, ood.name],
                          {"table": table, "wins_vs_subset": wins, "ood_median_final_l2": ood_median})
    return [res, tab_csv, tab_json, ood, man]


# mixar ---------------------------------------------------------------------

def run_mixar(cfg: ExperimentConfig) -> list[Path]:
    """Greedy categorical distillation against window subsampling."""
    out = _prepare(cfg)
    m = cfg.mixar
    rows, trace_rows, rec_rows = [], [], []
    for seed in cfg.seeds:
        pre = f"mixar/seed{seed}"
        s = seed_plan(cfg.root_seed, [f"{pre}/{k}" for k in ("components", "series", "init")])
        s = {k.rsplit("/", 1)[1]: v for k, v in s.items()}
        comps = random_components(m.n_features, m.n_components, s["components"], m.concentration)
        truth = MixtureArModel(comps, np.array(m.true_weights))
        train = sample_series(truth, m.n_sequences, m.length, s["series"])
        counts = transition_counts(train)
        w_hat = posterior_mixture_weights(comps, counts)
        rec_rows.append([seed, int(counts.sum()), float(np.max(np.abs(w_hat - truth.mixture_weights))),
                         *w_hat.tolist()])
        full = pipeline_loss(comps, train, counts)
        for ipc in m.ipcs:
            init = subsample_windows(train, ipc, m.window_length, derive_seed(s["init"], ipc))
            d_hat, trace = greedy_distill_categorical(train, ipc, m.window_length, comps,
                                                      m.max_sweeps, seed, init=init)
            rows.append([seed, ipc, "subset", pipeline_loss(comps, init, counts)])
            rows.append([seed, ipc, "distilled", trace[-1][1]])
            rows.append([seed, ipc, "full", full])
            trace_rows.extend([seed, ipc, sweep, loss] for sweep, loss in trace)
    res = out / "mixar_results.csv"
    tr = out / "mixar_trace.csv"
    rec = out / "mixar_recovery.csv"
    _write_csv(res, ["seed", "ipc", "method", "reconstruction_loss"], rows)
    _write_csv(tr, ["seed", "ipc", "sweep", "reconstruction_loss"], trace_rows)
    _write_csv(rec, ["seed", "transitions", "max_abs_weight_error",
                     *(f"w{q}" for q in range(m.n_components))], rec_rows)
    summary = _median_summary(rows, key_cols=(1,), method_col=2, value_col=3)
    man = _write_manifest(out, "mixar", cfg, [res.name, tr.name, rec.name],
                          {"median_loss": summary,
                           "max_recovery_error": max(r[2] for r in rec_rows)})
    return [res, tr, rec, man]


RUNNERS = {"medical": run_medical, "pinn": run_pinn, "mixar": run_mixar, "baselines": run_baselines}


def run(cfg: ExperimentConfig) -> list[Path]:
    return RUNNERS[cfg.experiment](cfg)
