"""Batch experiments: SCA sweeps, neuroevolution training and baseline comparisons.

An experiment is a pure function of ``(config document, seed)``. Monte-Carlo
runs use seeds derived from the master seed and the run index only, so every
mode and sweep point sees the same channel realizations.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__, metrics, sca
from .scenario import ConfigError, NarrowbandConfig, build_scenario, parse_scenario_config, rng_stream

EXPERIMENT_KINDS = {
    "sca-sweep": "distributed SCA sum rate across a sweep axis, one CSV per mode",
    "ne-train": "train the HDF controllers by neuroevolution; checkpoint and fitness curve",
    "baselines": "NE-HDF versus NE-FF, random policy and block exhaustive search on held-out channels",
}
SWEEP_AXES = ("p_max_dbm", "n_ris", "n_tx")
MODES = {
    "coop-bd": {"cooperative": True, "diagonal": False},
    "noncoop-bd": {"cooperative": False, "diagonal": False},
    "coop-diag": {"cooperative": True, "diagonal": True},
    "noncoop-diag": {"cooperative": False, "diagonal": True},
}
WORKERS_ENV = "BDRIS_WORKERS"


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    axis: str = "p_max_dbm"
    values: tuple = (30.0,)
    modes: tuple[str, ...] = tuple(MODES)
    mc_runs: int = 1

    def validate(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError("experiment.kind", f"unknown kind {self.kind!r}; expected one of {sorted(EXPERIMENT_KINDS)}")
        if self.kind == "sca-sweep":
            if self.axis not in SWEEP_AXES:
                raise ConfigError("experiment.axis", f"unknown axis {self.axis!r}; expected one of {list(SWEEP_AXES)}")
            if not self.values:
                raise ConfigError("experiment.values", "sweep axis needs at least one value")
            for m in self.modes:
                if m not in MODES:
                    raise ConfigError("experiment.modes", f"unknown mode {m!r}")
            if not self.modes:
                raise ConfigError("experiment.modes", "need at least one mode")
        if self.mc_runs < 1:
            raise ConfigError("experiment.mc_runs", "need at least one Monte-Carlo run")


def parse_plan(doc: Mapping[str, Any]) -> ExperimentPlan:
    ex = doc.get("experiment")
    if not isinstance(ex, Mapping):
        raise ConfigError("experiment", "missing required section")
    if "kind" not in ex:
        raise ConfigError("experiment.kind", "missing required field")
    values = ex.get("values", [30.0])
    if not isinstance(values, list):
        raise ConfigError("experiment.values", "expected a list")
    mc = ex.get("mc_runs", 1)
    if isinstance(mc, bool) or not isinstance(mc, int):
        raise ConfigError("experiment.mc_runs", "expected an integer")
    plan = ExperimentPlan(
        kind=ex["kind"],
        axis=ex.get("axis", "p_max_dbm"),
        values=tuple(values),
        modes=tuple(ex.get("modes", list(MODES))),
        mc_runs=mc,
    )
    plan.validate()
    return plan


def _typed_fields(cls, section: Mapping[str, Any], path: str, skip=()) -> dict:
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, value in section.items():
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        out[key] = value
    return out


def parse_solver_options(doc: Mapping[str, Any]) -> sca.SolverOptions:
    section = doc.get("solver", {})
    kw = _typed_fields(sca.SolverOptions, section, "solver", skip=("cooperative", "diagonal"))
    try:
        return sca.SolverOptions(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from exc


def parse_narrowband(doc: Mapping[str, Any]) -> NarrowbandConfig:
    section = doc.get("narrowband")
    if not isinstance(section, Mapping):
        raise ConfigError("narrowband", "missing required section")
    cfg = NarrowbandConfig(**_typed_fields(NarrowbandConfig, section, "narrowband"))
    cfg.validate()
    return cfg


def validate_document(doc: Mapping[str, Any]) -> list[str]:
    """Check every section present in ``doc``; returns a summary of what was validated."""
    report = []
    plan = parse_plan(doc) if "experiment" in doc else None
    if "geometry" in doc or plan is None or plan.kind == "sca-sweep":
        cfg = parse_scenario_config(doc)
        report.append(f"scenario: {cfg.n_cells} cells, {sum(cfg.geometry.ue_counts_per_cell)} UEs")
    parse_solver_options(doc)
    if "narrowband" in doc:
        parse_narrowband(doc)
        _ne_settings(doc)
        report.append("narrowband and neuroevolution sections")
    if plan is not None:
        report.append(f"experiment: {plan.kind}")
    return report


# ---------------------------------------------------------------------------
# SCA sweeps
# ---------------------------------------------------------------------------


def ris_shape_for(n_ris: int) -> list[int]:
    """Most square ``[n_x, n_z]`` factorisation with ``n_x >= n_z``."""
    if n_ris < 1:
        raise ConfigError("experiment.values", "N_ris must be >= 1")
    nz = int(np.floor(np.sqrt(n_ris)))
    while n_ris % nz:
        nz -= 1
    return [n_ris // nz, nz]


def apply_axis(doc: Mapping[str, Any], axis: str, value) -> dict:
    out = copy.deepcopy(dict(doc))
    if axis == "p_max_dbm":
        out["power"]["p_max_dbm"] = float(value)
    elif axis == "n_ris":
        out["arrays"]["ris_shape"] = ris_shape_for(int(value))
    elif axis == "n_tx":
        out["arrays"]["n_tx"] = int(value)
    else:
        raise ConfigError("experiment.axis", f"unknown axis {axis!r}")
    return out


def _sca_task(task):
    doc, run_seed, options = task
    scenario = build_scenario(doc, run_seed)
    result = sca.run_algorithm1(scenario, options)
    return result.objective, result.converged, result.initial_objective


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    mean: float
    stderr: float
    n_runs: int
    converged_fraction: float


def sca_sweep(doc: Mapping[str, Any], plan: ExperimentPlan, seed: int, workers: int = 1) -> dict[str, list[SweepRow]]:
    base = parse_solver_options(doc)
    seeds = metrics.run_seeds(seed, plan.mc_runs)
    tasks, keys = [], []
    for mode in plan.modes:
        options = sca.SolverOptions(**{**base.__dict__, **MODES[mode]})
        for a, value in enumerate(plan.values):
            point = apply_axis(doc, plan.axis, value)
            parse_scenario_config(point)
            for r, s in enumerate(seeds):
                tasks.append((point, s, options))
                keys.append((mode, a))
    results = _map(_sca_task, tasks, workers)
    out: dict[str, list[SweepRow]] = {}
    for mode in plan.modes:
        rows = []
        for a, value in enumerate(plan.values):
            vals = [res for key, res in zip(keys, results) if key == (mode, a)]
            summ = metrics.summarize([v[0] for v in vals])
            conv = float(np.mean([v[1] for v in vals]))
            rows.append(SweepRow(float(value), summ.mean, summ.stderr, summ.n_runs, conv))
        out[mode] = rows
    return out


def write_sweep_csv(path, axis: str, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{axis},mean_sum_rate,stderr,n_runs,converged_fraction\n")
        for r in rows:
            fh.write(f"{r.axis_value!r},{r.mean!r},{r.stderr!r},{r.n_runs},{r.converged_fraction!r}\n")


# ---------------------------------------------------------------------------
# Neuroevolution experiments
# ---------------------------------------------------------------------------

NE_DEFAULTS = {
    "l_pop": 100,
    "n_gen": 25,
    "n_ep": 100,
    "horizon": 50,
    "mutation_prob": 0.3,
    "mutation_variance": 0.2,
    "elite_fraction": 0.25,
    "eval_blocks": 200,
    "random_actions": 200,
    "bes_blocks": 4,
    "architecture": {},
}


def _ne_settings(doc: Mapping[str, Any]) -> dict:
    section = doc.get("neuroevo", {})
    if not isinstance(section, Mapping):
        raise ConfigError("neuroevo", "expected an object")
    for key in section:
        if key not in NE_DEFAULTS:
            raise ConfigError(f"neuroevo.{key}", "unknown field")
    return {**NE_DEFAULTS, **section}


def _architecture(nb: NarrowbandConfig, settings: dict, backbone: str = "mbacnn", n_blocks=None):
    from .neuroevo import ArchitectureSpec

    extra = dict(settings["architecture"])
    if "conv_kernels" in extra:
        extra["conv_kernels"] = tuple(extra["conv_kernels"])
    return ArchitectureSpec(
        n_tx=nb.n_tx,
        n_ue=nb.n_ue,
        n_ris=nb.n_ris,
        n_panels=nb.n_ris_panels,
        n_b=nb.n_b,
        phase_bits=nb.phase_bits,
        direct_branch=not nb.direct_blocked,
        backbone=backbone,
        n_blocks=n_blocks,
        **extra,
    )


def _train_config(doc, seed, backbone="mbacnn", n_blocks=None):
    from .neuroevo import CosyneParams, TrainConfig

    nb = parse_narrowband(doc)
    s = _ne_settings(doc)
    return TrainConfig(
        arch=_architecture(nb, s, backbone, n_blocks),
        scenario=nb,
        l_pop=s["l_pop"],
        n_gen=s["n_gen"],
        n_ep=s["n_ep"],
        horizon=s["horizon"],
        cosyne=CosyneParams(s["mutation_prob"], s["mutation_variance"], s["elite_fraction"]),
        seed=seed,
    )


def held_out_blocks(nb: NarrowbandConfig, n: int, seed: int):
    from .channel import sample_narrowband

    return [sample_narrowband(nb, rng_stream(seed, "ne/held-out", i)) for i in range(n)]


def ne_train(doc: Mapping[str, Any], seed: int, out: Path) -> list[str]:
    from .neuroevo import save_genome, train, write_fitness_csv

    tc = _train_config(doc, seed)
    result = train(tc)
    save_genome(out / "genome.json", result.best, tc.arch, extra={"best_fitness": repr(result.best_fitness)})
    write_fitness_csv(out / "fitness.csv", result)
    return ["genome.json", "fitness.csv"]


def baselines(doc: Mapping[str, Any], seed: int, out: Path) -> list[str]:
    from .neuroevo import PolicyContext, bes_baseline, genome_rates, random_policy_rates, train

    nb = parse_narrowband(doc)
    s = _ne_settings(doc)
    blocks = held_out_blocks(nb, s["eval_blocks"], seed)
    rows = []
    for label, backbone in (("ne-hdf", "mbacnn"), ("ne-ff", "ff")):
        tc = _train_config(doc, seed, backbone)
        res = train(tc)
        ctx = PolicyContext.from_config(tc.arch, nb)
        rows.append((label, metrics.summarize(genome_rates(res.best, ctx, blocks))))
    ctx = PolicyContext.from_config(_architecture(nb, s), nb)
    rand = random_policy_rates(
        ctx.arch, blocks, ctx.codebook, ctx.phases, ctx.sigma2, ctx.p, s["random_actions"], rng_stream(seed, "ne/random")
    )
    rows.append(("random", metrics.summarize(rand.mean(axis=0))))
    if nb.n_ris_panels == 1 and nb.n_b == 0 and nb.phase_bits == 1:
        bes = [bes_baseline(b, s["bes_blocks"], ctx.codebook, ctx.sigma2, ctx.p).rate for b in blocks]
        rows.append(("bes", metrics.summarize(bes)))
    with open(out / "baselines.csv", "w", newline="") as fh:
        fh.write("method,mean_sum_rate,stderr,n_blocks\n")
        for label, summ in rows:
            fh.write(f"{label},{summ.mean!r},{summ.stderr!r},{summ.n_runs}\n")
    return ["baselines.csv"]


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(WORKERS_ENV, "must be >= 1")
    return n


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(doc: Mapping[str, Any], seed: int, out_dir, workers: int | None = None) -> list[str]:
    """Run the experiment described by ``doc`` and write results into ``out_dir``.

    Returns the names of the files written (manifest last).
    """
    plan = parse_plan(doc)
    validate_document(doc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    workers = worker_count() if workers is None else workers
    if plan.kind == "sca-sweep":
        files = []
        for mode, rows in sca_sweep(doc, plan, seed, workers).items():
            name = f"sca_{mode}.csv"
            write_sweep_csv(out / name, plan.axis, rows)
            files.append(name)
    elif plan.kind == "ne-train":
        files = ne_train(doc, seed, out)
    else:
        files = baselines(doc, seed, out)
    manifest = {
        "code_version": __version__,
        "seed": seed,
        "experiment": plan.kind,
        "config": doc,
        "files": {name: _sha256(out / name) for name in files},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files + ["manifest.json"]
