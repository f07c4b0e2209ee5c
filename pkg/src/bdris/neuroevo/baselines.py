"""Reference policies for the single-BS broadcast system."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .. import channel, metrics, ris
from ..channel import NarrowbandChannelSet
from .networks import ArchitectureSpec, block_partition, random_feasible_action


class SearchSpaceTooLarge(ValueError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"block exhaustive search needs {size} evaluations, cap is {cap}")


@dataclass(frozen=True, eq=False)
class BesResult:
    config: ris.BandedRisConfig
    indices: np.ndarray
    rate: float
    n_candidates: int


def bes_search_size(n_blk: int, card: int, n_ue: int) -> int:
    return 2**n_blk * card**n_ue


def bes_baseline(
    chset: NarrowbandChannelSet,
    n_blk: int,
    codebook: ris.PrecoderCodebook,
    sigma2: float,
    p: float,
    cap: int = 1 << 20,
) -> BesResult:
    """Exhaustive search over 1-bit block-tied diagonal configurations and codebook indices.

    Elements are split into ``n_blk`` contiguous blocks that share one state.
    Ties resolve to the lowest block pattern (bit ``b`` of the pattern is the
    state of block ``b``), then to the lexicographically smallest index tuple.
    """
    if chset.n_ris_panels != 1:
        raise ValueError("block exhaustive search covers a single surface")
    n_ris = chset.h_bs_ris[0].shape[1]
    size = bes_search_size(n_blk, codebook.size, chset.n_ue)
    if size > cap:
        raise SearchSpaceTooLarge(size, cap)
    phases = ris.phase_set(1)
    blocks = block_partition(n_ris, n_blk)
    combos = np.array(list(itertools.product(range(codebook.size), repeat=chset.n_ue)), dtype=int)
    best = (-np.inf, None, None)
    for pattern in range(2**n_blk):
        states = np.empty(n_ris, dtype=int)
        for b, blk in enumerate(blocks):
            states[blk] = (pattern >> b) & 1
        cfg = ris.BandedRisConfig.diagonal(states)
        M = channel.effective_channels(chset, [ris.banded_phi(cfg, phases)])
        gains = np.abs(M @ codebook.matrix) ** 2  # [n, j] = |m_n v_j|^2
        # gains[n, combos[c, j]]: power at UE n from the stream of UE j under combination c
        g = gains[np.arange(chset.n_ue)[None, :, None], combos[:, None, :]]  # (C, n, j)
        signal = np.einsum("cnn->cn", g)
        interference = g.sum(axis=2) - signal
        rates = np.log2(1 + signal / (interference + sigma2 / p)).sum(axis=1)
        c = int(np.argmax(rates))
        if rates[c] > best[0]:
            best = (float(rates[c]), cfg, combos[c].copy())
    return BesResult(config=best[1], indices=best[2], rate=best[0], n_candidates=size)


def random_policy_rates(
    arch: ArchitectureSpec,
    blocks,
    codebook: ris.PrecoderCodebook,
    phases: np.ndarray,
    sigma2: float,
    p: float,
    n_actions: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Rates of ``n_actions`` random feasible actions on every block, shape (n_actions, n_blocks)."""
    actions = [random_feasible_action(arch, phases, codebook, rng) for _ in range(n_actions)]
    out = np.empty((n_actions, len(blocks)))
    for j, chset in enumerate(blocks):
        for i, (phis, V) in enumerate(actions):
            M = channel.effective_channels(chset, phis)
            out[i, j] = metrics.narrowband_sum_rate(M, V, sigma2, p)
    return out
