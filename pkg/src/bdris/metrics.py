"""SINR and achievable-rate evaluation plus Monte-Carlo aggregation."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import channel, ris
from .scenario import ConfigError, WidebandScenario, rng_stream


@dataclass(frozen=True)
class RateReport:
    rates: np.ndarray  # bits/s/Hz per UE
    index: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rates))


# ---------------------------------------------------------------------------
# Narrowband broadcast
# ---------------------------------------------------------------------------


def sinr_narrowband(m_n: np.ndarray, V: np.ndarray, n: int, sigma2: float, p: float) -> float:
    gains = np.abs(np.asarray(m_n) @ V) ** 2
    interference = gains.sum() - gains[n]
    return float(gains[n] / (interference + sigma2 / p))


def narrowband_rates(M: np.ndarray, V: np.ndarray, sigma2: float, p: float) -> np.ndarray:
    """Per-UE rates for effective channel rows ``M`` (N_ue, N_tx)."""
    gains = np.abs(M @ V) ** 2  # [n, j] = |m_n v_j|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return np.log2(1 + signal / (interference + sigma2 / p))


def narrowband_sum_rate(M: np.ndarray, V: np.ndarray, sigma2: float, p: float) -> float:
    return float(np.sum(narrowband_rates(M, V, sigma2, p)))


# ---------------------------------------------------------------------------
# Wideband multi-cell
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkStats:
    """Received amplitudes and powers at one iterate.

    ``amp[i, u, n] = f^H_{cell(i), u, n} w_{i, n}``: amplitude at UE ``u`` of
    the stream precoded for UE ``i``.
    """

    amp: np.ndarray
    signal: np.ndarray  # (U, N)
    total: np.ndarray  # (U, N), includes noise
    mui: np.ndarray  # (U, N)

    @property
    def snr(self) -> np.ndarray:
        return self.signal / self.mui


def link_stats(f_rows: np.ndarray, w: np.ndarray, ue_cell: np.ndarray, sigma2: float) -> LinkStats:
    """``f_rows`` (K, U, N, T) composite rows, ``w`` (U, N, T) precoders."""
    amp = np.einsum("iunt,int->iun", f_rows[ue_cell], w)
    power = np.abs(amp) ** 2
    idx = np.arange(len(ue_cell))
    signal = power[idx, idx]
    total = sigma2 + power.sum(axis=0)
    return LinkStats(amp=amp, signal=signal, total=total, mui=total - signal)


def rate_wideband(f_rows: np.ndarray, w: np.ndarray, ue_cell: np.ndarray, sigma2: float, u: int) -> float:
    """Rate of UE ``u`` averaged over subcarriers, bits/s/Hz."""
    st = link_stats(f_rows, w, ue_cell, sigma2)
    return float(np.mean(np.log2(1 + st.signal[u] / st.mui[u])))


def per_ue_rates(f_rows: np.ndarray, w: np.ndarray, ue_cell: np.ndarray, sigma2: float) -> np.ndarray:
    st = link_stats(f_rows, w, ue_cell, sigma2)
    return np.mean(np.log2(1 + st.signal / st.mui), axis=1)


def scenario_composite_rows(scenario: WidebandScenario, c: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Composite rows for capacitances ``c`` (K, M) and switch matrices ``S`` (K, M, M)."""
    phi = ris.phase_vectors(c, scenario.frequencies, scenario.circuit)
    return channel.composite_rows(scenario.h, scenario.g, np.asarray(S, dtype=float), phi, scenario.H)


def total_rate(scenario: WidebandScenario, w: np.ndarray, c: np.ndarray, S: np.ndarray) -> float:
    """Network sum rate over all cells and UEs."""
    f_rows = scenario_composite_rows(scenario, c, S)
    return float(np.sum(per_ue_rates(f_rows, w, scenario.ue_cell, scenario.noise_variance)))


def decomposed_total_rate(scenario: WidebandScenario, w, c, S, k: int) -> tuple[float, float]:
    """(own-cell rate of cell ``k``, rate of every other cell)."""
    f_rows = scenario_composite_rows(scenario, c, S)
    rates = per_ue_rates(f_rows, w, scenario.ue_cell, scenario.noise_variance)
    own = scenario.ue_cell == k
    return float(rates[own].sum()), float(rates[~own].sum())


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloSummary:
    mean: float
    stderr: float
    n_runs: int
    values: np.ndarray


def run_seeds(seed: int, n_runs: int, stream: str = "monte-carlo") -> list[int]:
    return [int(rng_stream(seed, stream, i).integers(2**63)) for i in range(n_runs)]


def summarize(values: Sequence[float]) -> MonteCarloSummary:
    v = np.asarray(values, dtype=float)
    stderr = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return MonteCarloSummary(mean=float(np.mean(v)), stderr=stderr, n_runs=len(v), values=v)


def monte_carlo(evaluator: Callable[[int], float], n_runs: int, seed: int, workers: int = 1) -> MonteCarloSummary:
    """Evaluate ``evaluator(run_seed)`` over ``n_runs`` derived seeds.

    Results are reduced in run-index order, so the summary does not depend
    on ``workers``.
    """
    if n_runs < 1:
        raise ConfigError("monte_carlo.n_runs", "need at least one run")
    seeds = run_seeds(seed, n_runs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(evaluator, seeds))
    else:
        values = [evaluator(s) for s in seeds]
    return summarize(values)


def write_summary_csv(path, rows: Iterable[tuple]) -> None:
    """Rows of ``(sweep_point, metric, mean, stderr, n_runs)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_point", "metric", "mean", "stderr", "n_runs"])
        for point, metric, mean, stderr, n in rows:
            w.writerow([point, metric, repr(float(mean)), repr(float(stderr)), int(n)])
