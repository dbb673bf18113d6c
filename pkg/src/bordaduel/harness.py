"""Seeded repetition runner: builds an environment, plays every configured
agent for ``repetitions`` seeds, and writes thinned regret traces plus
pointwise mean/std curves."""

from __future__ import annotations

import csv
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import AGENT_NAMES, make_agent, run_agent
from .instances import (
    EmpiricalCounts,
    HardInstanceSpec,
    fit_env_from_counts,
    make_hard_instance,
    make_random_glm,
)
from .model import FeatureSet, LinkFunction, StochasticEnv

log = logging.getLogger(__name__)

INSTANCE_FORMAT = "bordaduel-instance"


class ConfigError(ValueError):
    """Malformed experiment or environment specification."""


# --------------------------------------------------------------------------
# instance files
# --------------------------------------------------------------------------


def instance_to_json(env: StochasticEnv) -> dict:
    return {
        "format": INSTANCE_FORMAT,
        "version": 1,
        "K": env.K,
        "d": env.d,
        "link": env.link.kind.value,
        "theta": env.theta_star.tolist(),
        "features": env.features.phi.tolist(),
        "meta": env.meta,
    }


def instance_from_json(payload: dict) -> StochasticEnv:
    if payload.get("format") != INSTANCE_FORMAT:
        raise ConfigError(f"not a {INSTANCE_FORMAT} document")
    link = LinkFunction.from_name(payload.get("link", "linear"))
    return StochasticEnv(FeatureSet(payload["features"]), link, payload["theta"], meta=payload.get("meta"))


def save_instance(env: StochasticEnv, path) -> None:
    Path(path).write_text(json.dumps(instance_to_json(env)) + "\n")


def load_instance(path) -> StochasticEnv:
    return instance_from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# environment specs
# --------------------------------------------------------------------------


def build_env(spec: dict, base_dir: Path | None = None) -> StochasticEnv:
    """Construct the environment described by an ``env`` block.

    Kinds: ``hard-instance`` (d_core, delta, theta_signs or seed),
    ``random-glm`` (K, d, link, seed), ``from-counts`` (path, d_ctx, seed)
    and ``instance-file`` (path). Relative paths resolve against ``base_dir``.
    """
    base_dir = Path(base_dir or ".")
    if "format" in spec:
        return instance_from_json(spec)
    kind = spec.get("kind")
    seed = int(spec.get("seed", 0))
    rng = np.random.default_rng(seed)
    try:
        if kind == "hard-instance":
            d_core = int(spec["d_core"])
            delta = spec.get("delta")
            signs = spec.get("theta_signs")
            if signs is None:
                hs = HardInstanceSpec.random(d_core, rng, delta)
            else:
                hs = HardInstanceSpec(d_core, 1.0 / (4 * d_core) if delta is None else float(delta), tuple(signs))
            return make_hard_instance(hs)
        if kind == "random-glm":
            link = LinkFunction.from_name(spec.get("link", "linear"))
            return make_random_glm(int(spec["K"]), int(spec["d"]), link, rng)
        if kind == "from-counts":
            counts = EmpiricalCounts.from_csv(base_dir / spec["path"])
            env, report = fit_env_from_counts(counts, int(spec.get("d_ctx", 5)), rng)
            env.meta["fit"] = report.to_json()
            return env
        if kind == "instance-file":
            return load_instance(base_dir / spec["path"])
    except KeyError as exc:
        raise ConfigError(f"env spec of kind {kind!r} is missing field {exc}") from exc
    raise ConfigError(f"unknown env kind {kind!r}")


def parse_env_arg(text: str) -> tuple[dict, Path]:
    """``--env`` value: inline JSON or a path to an env spec, instance file or
    experiment config (whose ``env`` block is used)."""
    if text.lstrip().startswith("{"):
        spec, base = json.loads(text), Path(".")
    else:
        path = Path(text)
        spec, base = json.loads(path.read_text()), path.parent
    if isinstance(spec, dict) and "env" in spec and "format" not in spec:
        spec = spec["env"]
    return spec, base


# --------------------------------------------------------------------------
# experiment config
# --------------------------------------------------------------------------


@dataclass
class AgentSpec:
    name: str
    label: str
    options: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    env: dict
    agents: list
    T: int
    repetitions: int = 1
    base_seed: int = 0
    output: str = "results"
    stride: int | None = None
    seeds: list | None = None
    workers: int | None = None
    base_dir: Path = field(default=Path("."), repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.stride is None:
            self.stride = max(1, self.T // 1000)
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.seeds is not None:
            self.seeds = [int(s) for s in self.seeds]
            if len(self.seeds) != self.repetitions:
                raise ConfigError("seeds must list one seed per repetition")
        specs = []
        for entry in self.agents:
            if isinstance(entry, AgentSpec):
                specs.append(entry)
                continue
            if isinstance(entry, str):
                entry = {"name": entry}
            name = entry.get("name")
            if name not in AGENT_NAMES:
                raise ConfigError(f"unknown agent {name!r}; choose from {', '.join(AGENT_NAMES)}")
            specs.append(AgentSpec(name, entry.get("label", name), dict(entry.get("options", {}))))
        if not specs:
            raise ConfigError("no agents configured")
        labels = [s.label for s in specs]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"agent labels must be unique, got {labels}")
        self.agents = specs

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        known = {"env", "agents", "T", "repetitions", "base_seed", "output", "stride", "seeds", "workers"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        for key in ("env", "agents", "T"):
            if key not in data:
                raise ConfigError(f"config is missing {key!r}")
        return cls(base_dir=Path(base_dir), **data)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data, base_dir=path.parent)

    def run_seeds(self) -> list:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + k for k in range(self.repetitions)]

    def recorded_rounds(self) -> np.ndarray:
        rounds = np.arange(self.stride, self.T + 1, self.stride)
        if rounds.size == 0 or rounds[-1] != self.T:
            rounds = np.append(rounds, self.T)
        return rounds


def run_seed_sequence(seed: int, label: str) -> np.random.SeedSequence:
    """Stream for one (agent, repetition); mixes the run seed with a stable hash of the label."""
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


@dataclass
class RunRecord:
    label: str
    seed: int
    cumulative: np.ndarray
    summary: dict


@dataclass
class AgentAggregate:
    mean: np.ndarray
    std: np.ndarray

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_std(self) -> float:
        return float(self.std[-1])


@dataclass
class ExperimentResult:
    rounds: np.ndarray
    runs: list
    aggregates: dict
    env_meta: dict = field(default_factory=dict)

    def runs_for(self, label: str) -> list:
        return [r for r in self.runs if r.label == label]


def _run_one(env, spec: AgentSpec, T: int, seed: int, rounds: np.ndarray) -> RunRecord:
    agent_ss, env_ss = run_seed_sequence(seed, spec.label).spawn(2)
    agent = make_agent(spec.name, env, T, np.random.default_rng(agent_ss), **spec.options)
    trace = run_agent(env, agent, T, np.random.default_rng(env_ss), seed=seed)
    summary = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in agent.summary().items()}
    return RunRecord(spec.label, seed, trace.cumulative[rounds - 1], summary)


def _run_job(job):
    return _run_one(*job)


def worker_count(config: ExperimentConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env_cap = os.environ.get("BORDA_THREADS")
    if env_cap:
        return max(1, int(env_cap))
    return os.cpu_count() or 1


def aggregate(rounds: np.ndarray, runs: list, labels: list) -> dict:
    out = {}
    for label in labels:
        curves = np.array([r.cumulative for r in runs if r.label == label])
        if curves.size == 0:
            continue
        out[label] = AgentAggregate(curves.mean(axis=0), curves.std(axis=0))
    return out


def run_experiment(config: ExperimentConfig, env=None, workers: int | None = None) -> ExperimentResult:
    """Run every agent for every seed; repetitions may fan out to processes.

    Results are ordered by (agent, seed) regardless of the worker count.
    """
    if env is None:
        env = build_env(config.env, config.base_dir)
    rounds = config.recorded_rounds()
    jobs = [(env, spec, config.T, seed, rounds) for spec in config.agents for seed in config.run_seeds()]
    n_workers = min(workers if workers is not None else worker_count(config), len(jobs))
    log.info("running %d jobs on %d worker(s)", len(jobs), n_workers)
    if n_workers <= 1:
        runs = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            runs = list(pool.map(_run_job, jobs))
    labels = [s.label for s in config.agents]
    return ExperimentResult(rounds, runs, aggregate(rounds, runs, labels), dict(env.meta))


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def fmt(x: float) -> str:
    """Locale-independent repr with 17 significant digits."""
    return format(float(x), ".17g")


def write_traces_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["algorithm", "seed", "round", "cum_regret"])
        for run in result.runs:
            for t, c in zip(result.rounds, run.cumulative):
                out.writerow([run.label, run.seed, int(t), fmt(c)])


def write_aggregate_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["algorithm", "round", "mean", "std"])
        for label, agg in result.aggregates.items():
            for t, m, s in zip(result.rounds, agg.mean, agg.std):
                out.writerow([label, int(t), fmt(m), fmt(s)])


def emit_csv(result: ExperimentResult, out_dir) -> dict:
    """Write ``traces.csv`` and ``aggregate.csv`` into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"traces": out_dir / "traces.csv", "aggregate": out_dir / "aggregate.csv"}
    write_traces_csv(result, paths["traces"])
    write_aggregate_csv(result, paths["aggregate"])
    return paths


def summary_json(result: ExperimentResult, config: ExperimentConfig) -> dict:
    return {
        "T": config.T,
        "repetitions": config.repetitions,
        "seeds": config.run_seeds(),
        "stride": config.stride,
        "env": result.env_meta,
        "agents": {
            label: {
                "final_mean": agg.final_mean,
                "final_std": agg.final_std,
                "runs": [{"seed": r.seed, **r.summary} for r in result.runs_for(label)],
            }
            for label, agg in result.aggregates.items()
        },
    }


def write_outputs(result: ExperimentResult, config: ExperimentConfig, out_dir=None) -> dict:
    out_dir = Path(out_dir or config.output)
    paths = emit_csv(result, out_dir)
    paths["summary"] = out_dir / "summary.json"
    paths["summary"].write_text(json.dumps(summary_json(result, config), indent=2, sort_keys=True) + "\n")
    return paths


def read_traces_csv(path) -> dict:
    """``{label: {seed: (rounds, cum_regret)}}`` from a traces file."""
    data: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            runs = data.setdefault(row["algorithm"], {})
            rounds, values = runs.setdefault(int(row["seed"]), ([], []))
            rounds.append(int(row["round"]))
            values.append(float(row["cum_regret"]))
    return data
