"""CoSyNE-style neuroevolution of the shared controller weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import ris
from ..channel import NarrowbandChannelSet, sample_narrowband
from ..scenario import ConfigError, NarrowbandConfig, rng_stream
from .networks import ArchitectureSpec, Genome, action_sum_rate, build_layout, hdf_act


@dataclass(frozen=True)
class CosyneParams:
    mutation_prob: float = 0.3
    mutation_variance: float = 0.2
    elite_fraction: float = 0.25

    def __post_init__(self):
        if not 0 <= self.mutation_prob <= 1:
            raise ConfigError("neuroevo.mutation_prob", "must lie in [0, 1]")
        if self.mutation_variance < 0:
            raise ConfigError("neuroevo.mutation_variance", "must be >= 0")
        if not 0 < self.elite_fraction <= 1:
            raise ConfigError("neuroevo.elite_fraction", "must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Population:
    genomes: np.ndarray  # (L_pop, n_params)
    fitness: np.ndarray  # (L_pop,), NaN where not yet evaluated
    generation: int = 0

    @property
    def size(self) -> int:
        return self.genomes.shape[0]

    def best(self) -> tuple[int, float]:
        i = int(np.nanargmax(self.fitness))
        return i, float(self.fitness[i])


# ---------------------------------------------------------------------------
# Episodes and fitness
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EpisodeSet:
    """``N_EP`` episodes of ``T`` i.i.d. coherence blocks."""

    blocks: tuple[tuple[NarrowbandChannelSet, ...], ...]

    @property
    def n_episodes(self) -> int:
        return len(self.blocks)

    @property
    def horizon(self) -> int:
        return len(self.blocks[0]) if self.blocks else 0

    def flat(self):
        return [b for ep in self.blocks for b in ep]


def sample_episodes(cfg: NarrowbandConfig, n_ep: int, horizon: int, seed: int, stream: str = "ne/train") -> EpisodeSet:
    return EpisodeSet(
        tuple(
            tuple(sample_narrowband(cfg, rng_stream(seed, stream, p, t)) for t in range(horizon)) for p in range(n_ep)
        )
    )


@dataclass(frozen=True)
class PolicyContext:
    arch: ArchitectureSpec
    codebook: ris.PrecoderCodebook
    phases: np.ndarray
    sigma2: float
    p: float

    @classmethod
    def from_config(cls, arch: ArchitectureSpec, cfg: NarrowbandConfig) -> "PolicyContext":
        return cls(arch, ris.dft_codebook(cfg.n_tx), ris.phase_set(cfg.phase_bits), cfg.noise_watt, cfg.p_watt)


def genome_rates(genome: Genome, ctx: PolicyContext, blocks: Sequence[NarrowbandChannelSet]) -> np.ndarray:
    """Sum rate achieved by the HDF policy on each block."""
    params = genome.params()
    out = np.empty(len(blocks))
    for i, chset in enumerate(blocks):
        act = hdf_act(genome, ctx.arch, chset, ctx.codebook, ctx.phases, params=params)
        out[i] = action_sum_rate(chset, act.phis, act.V, ctx.sigma2, ctx.p)
    return out


def evaluate_genome(genome: Genome, ctx: PolicyContext, episodes: EpisodeSet) -> float:
    """Accumulated sum rate over every block of every episode."""
    return float(np.sum(genome_rates(genome, ctx, episodes.flat())))


# ---------------------------------------------------------------------------
# Evolution step
# ---------------------------------------------------------------------------


def rank(pop: Population) -> np.ndarray:
    """Indices by decreasing fitness; ties keep population order."""
    return np.argsort(-pop.fitness, kind="stable")


def cosyne_step(pop: Population, params: CosyneParams, rng: np.random.Generator) -> Population:
    """Next generation: elites kept verbatim, offspring bred from elites.

    Offspring come from one-point crossover of two elite parents followed
    by per-gene Gaussian mutation; then every gene column is independently
    permuted across the offspring (the cooperative-synapse shuffle).
    """
    if pop.size < 2:
        raise ConfigError("neuroevo.l_pop", "population needs at least two genomes")
    if np.any(np.isnan(pop.fitness)):
        raise ValueError("population must be evaluated before stepping")
    order = rank(pop)
    n_elite = min(pop.size - 1, max(1, int(round(params.elite_fraction * pop.size))))
    elites = pop.genomes[order[:n_elite]]
    n_off = pop.size - n_elite
    n_genes = pop.genomes.shape[1]
    offspring = np.empty((n_off, n_genes))
    for i in range(n_off):
        if n_elite >= 2:
            a, b = rng.choice(n_elite, size=2, replace=False)
        else:
            a = b = 0
        cut = int(rng.integers(1, n_genes)) if n_genes > 1 else n_genes
        offspring[i, :cut] = elites[a, :cut]
        offspring[i, cut:] = elites[b, cut:]
    mutate = rng.random(offspring.shape) < params.mutation_prob
    offspring += mutate * rng.normal(0.0, np.sqrt(params.mutation_variance), offspring.shape)
    if n_off > 1:
        perms = np.argsort(rng.random(offspring.shape), axis=0)
        offspring = np.take_along_axis(offspring, perms, axis=0)
    genomes = np.vstack([elites, offspring])
    fitness = np.concatenate([pop.fitness[order[:n_elite]], np.full(n_off, np.nan)])
    return Population(genomes, fitness, pop.generation + 1)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchitectureSpec
    scenario: NarrowbandConfig
    l_pop: int = 100
    n_gen: int = 25
    n_ep: int = 100
    horizon: int = 50
    cosyne: CosyneParams = field(default_factory=CosyneParams)
    seed: int = 0

    def validate(self) -> None:
        if self.l_pop < 2:
            raise ConfigError("neuroevo.l_pop", "population needs at least two genomes")
        if self.n_gen < 1:
            raise ConfigError("neuroevo.n_gen", "must be >= 1")
        if self.n_ep < 1 or self.horizon < 1:
            raise ConfigError("neuroevo.n_ep", "episodes and horizon must be >= 1")


@dataclass(frozen=True, eq=False)
class TrainResult:
    best: Genome
    best_fitness: float
    best_curve: np.ndarray  # per generation
    mean_curve: np.ndarray
    population: Population
    episodes: EpisodeSet


def initial_population(arch: ArchitectureSpec, l_pop: int, seed: int) -> np.ndarray:
    layout = build_layout(arch)
    rng = rng_stream(seed, "ne/init")
    return rng.standard_normal((l_pop, layout.size)) * layout.init_scales()


def _evaluate_missing(pop: Population, layout, ctx: PolicyContext, episodes: EpisodeSet) -> Population:
    fit = pop.fitness.copy()
    for i in np.flatnonzero(np.isnan(fit)):
        fit[i] = evaluate_genome(Genome(pop.genomes[i], layout), ctx, episodes)
    return replace(pop, fitness=fit)


def train(config: TrainConfig, episodes: EpisodeSet | None = None) -> TrainResult:
    """Evaluate, rank and step for ``n_gen`` generations on a fixed episode set.

    Keeping the training episodes fixed makes fitness a deterministic
    function of the genome, so carried-over elites keep their scores and the
    best fitness can never decrease.
    """
    config.validate()
    arch, cfg = config.arch, config.scenario
    ctx = PolicyContext.from_config(arch, cfg)
    layout = build_layout(arch)
    if episodes is None:
        episodes = sample_episodes(cfg, config.n_ep, config.horizon, config.seed)
    pop = Population(initial_population(arch, config.l_pop, config.seed), np.full(config.l_pop, np.nan))
    pop = _evaluate_missing(pop, layout, ctx, episodes)
    rng = rng_stream(config.seed, "ne/evolution")
    best_curve, mean_curve = [], []
    for gen in range(config.n_gen):
        best_curve.append(pop.best()[1])
        mean_curve.append(float(np.mean(pop.fitness)))
        if gen < config.n_gen - 1:
            pop = _evaluate_missing(cosyne_step(pop, config.cosyne, rng), layout, ctx, episodes)
    i, f = pop.best()
    return TrainResult(
        best=Genome(pop.genomes[i].copy(), layout),
        best_fitness=f,
        best_curve=np.array(best_curve),
        mean_curve=np.array(mean_curve),
        population=pop,
        episodes=episodes,
    )


def write_fitness_csv(path, result: TrainResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "best_fitness", "mean_fitness"])
        for g, (b, m) in enumerate(zip(result.best_curve, result.mean_curve)):
            w.writerow([g, repr(float(b)), repr(float(m))])
