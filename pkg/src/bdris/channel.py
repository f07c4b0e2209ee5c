"""Stochastic channel generation and effective-channel composition.

Two families are produced: narrowband Ricean channels for the single-BS
broadcast system, and wideband tap-domain Rayleigh channels converted to
per-subcarrier responses for the multi-cell system.

DFT convention: the response at subcarrier ``n`` (0-based) of a tap sequence
is ``sum_d tap_d * exp(-2j*pi*d*n/N_sub)``, without 1/sqrt(N) scaling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import SPEED_OF_LIGHT, ConfigError, NarrowbandConfig, ula_positions, upa_positions

REFERENCE_DISTANCE = 1.0


class ChannelShapeError(ValueError):
    pass


def pathloss(distance, exponent: float, f_c: float):
    """Free-space reference loss at 1 m times ``distance**-exponent``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < REFERENCE_DISTANCE):
        raise ValueError("distance inside the 1 m reference sphere")
    lam = SPEED_OF_LIGHT / f_c
    pl0 = (lam / (4 * np.pi)) ** 2
    out = pl0 * (d / REFERENCE_DISTANCE) ** (-exponent)
    return float(out) if np.ndim(out) == 0 else out


def crandn(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian, unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def steering_vector(positions: np.ndarray, direction: np.ndarray, wavelength: float) -> np.ndarray:
    """Plane-wave array response for elements at ``positions``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return np.exp(-2j * np.pi / wavelength * (positions @ u))


def los_matrix(tx_pos: np.ndarray, rx_pos: np.ndarray, wavelength: float) -> np.ndarray:
    """Unit-modulus LoS component of shape (n_tx_elements, n_rx_elements)."""
    tx_c, rx_c = tx_pos.mean(axis=0), rx_pos.mean(axis=0)
    a_tx = steering_vector(tx_pos, rx_c - tx_c, wavelength)
    a_rx = steering_vector(rx_pos, tx_c - rx_c, wavelength)
    return np.outer(a_tx, a_rx)


def gen_ricean(dims, kappa_db: float, gain, steering: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if steering.shape != tuple(dims):
        raise ChannelShapeError(f"steering shape {steering.shape} != {tuple(dims)}")
    kappa = 10.0 ** (kappa_db / 10.0)
    los_w = np.sqrt(kappa / (1 + kappa))
    nlos_w = np.sqrt(1 / (1 + kappa))
    return np.sqrt(gain) * (los_w * steering + nlos_w * crandn(dims, rng))


@dataclass(frozen=True)
class TapChannel:
    taps: np.ndarray  # (D, *dims)
    pdp: np.ndarray  # (D,) power-delay profile, sums to one
    gain: np.ndarray | float

    @property
    def n_taps(self) -> int:
        return self.taps.shape[0]


def gen_wideband_taps(dims, n_taps: int, gain, rng: np.random.Generator) -> TapChannel:
    """i.i.d. Gaussian taps under a uniform power-delay profile."""
    if n_taps < 1:
        raise ValueError("need at least one tap")
    dims = tuple(np.atleast_1d(dims)) if not isinstance(dims, tuple) else dims
    pdp = np.full(n_taps, 1.0 / n_taps)
    amp = np.sqrt(np.asarray(gain, dtype=float) * pdp.reshape((-1,) + (1,) * len(dims)))
    return TapChannel(taps=amp * crandn((n_taps, *dims), rng), pdp=pdp, gain=gain)


def taps_array_to_frequency(taps: np.ndarray, n_sub: int, axis: int = 0) -> np.ndarray:
    if taps.shape[axis] > n_sub:
        raise ConfigError("ofdm.n_taps", f"{taps.shape[axis]} taps exceed {n_sub} subcarriers")
    return np.fft.fft(taps, n=n_sub, axis=axis)


def taps_to_frequency(tc: TapChannel, n_sub: int) -> np.ndarray:
    """Per-subcarrier responses, shape (N_sub, *dims)."""
    return taps_array_to_frequency(tc.taps, n_sub, axis=0)


def frequency_to_taps(resp: np.ndarray, n_taps: int, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`taps_to_frequency`, truncated to ``n_taps``."""
    taps = np.fft.ifft(resp, axis=axis)
    return np.take(taps, np.arange(n_taps), axis=axis)


# ---------------------------------------------------------------------------
# Effective channels
# ---------------------------------------------------------------------------


def effective_channel_narrowband(h_n: np.ndarray, contributions) -> np.ndarray:
    """Row vector ``h_n^H + sum_k h2_k^H Phi_k H1_k^H``.

    ``contributions`` is an iterable of ``(h2 (N_ris,), Phi (N_ris, N_ris),
    H1 (N_tx, N_ris))`` triples.
    """
    m = np.conj(np.asarray(h_n, dtype=complex))
    for h2, phi, h1 in contributions:
        if phi.shape != (h2.shape[0], h2.shape[0]) or h1.shape != (m.shape[0], h2.shape[0]):
            raise ChannelShapeError(
                f"incompatible shapes h2={h2.shape}, Phi={phi.shape}, H1={h1.shape}, N_tx={m.shape[0]}"
            )
        m = m + np.conj(h2) @ phi @ np.conj(h1).T
    return m


def composite_channel_wideband(h, g, S, Phi, H) -> np.ndarray:
    """Row vector ``f^H = h^H + g^H S Phi H`` for one link and subcarrier.

    ``Phi`` may be the diagonal matrix or its diagonal vector.
    """
    h = np.asarray(h)
    g = np.asarray(g)
    S = np.asarray(S)
    phi = np.diag(Phi) if np.ndim(Phi) == 2 else np.asarray(Phi)
    n_ris, n_tx = H.shape
    if h.shape != (n_tx,) or g.shape != (n_ris,) or S.shape != (n_ris, n_ris) or phi.shape != (n_ris,):
        raise ChannelShapeError(
            f"incompatible shapes h={h.shape}, g={g.shape}, S={S.shape}, Phi={np.shape(Phi)}, H={H.shape}"
        )
    return np.conj(h) + ((np.conj(g) @ S) * phi) @ H


def composite_rows(h: np.ndarray, g: np.ndarray, S: np.ndarray, phi: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Batched composite rows for every BS/UE/subcarrier.

    Shapes: ``h`` (K, U, N, T), ``g`` (K, U, N, M), ``S`` (K, M, M),
    ``phi`` (K, N, M), ``H`` (K, N, M, T). Returns ``f^H`` rows (K, U, N, T).
    """
    gs = np.einsum("kunp,kpq->kunq", np.conj(g), S)
    return np.conj(h) + np.einsum("kunq,knqt->kunt", gs * phi[:, None, :, :], H)


# ---------------------------------------------------------------------------
# Narrowband channel sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NarrowbandChannelSet:
    h_direct: np.ndarray  # (N_tx, N_ue), columns h_n
    h_bs_ris: tuple[np.ndarray, ...]  # K x (N_tx, N_ris)
    h_ris_ue: tuple[np.ndarray, ...]  # K x (N_ris, N_ue)
    direct_blocked: bool = False

    @property
    def n_tx(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_ue(self) -> int:
        return self.h_direct.shape[1]

    @property
    def n_ris_panels(self) -> int:
        return len(self.h_bs_ris)


def effective_channels(chset: NarrowbandChannelSet, phis) -> np.ndarray:
    """Rows ``m_n`` stacked into an (N_ue, N_tx) matrix."""
    m = np.conj(chset.h_direct).T.copy()
    for h1, h2, phi in zip(chset.h_bs_ris, chset.h_ris_ue, phis):
        m = m + np.conj(h2).T @ phi @ np.conj(h1).T
    return m


def sample_narrowband(cfg: NarrowbandConfig, rng: np.random.Generator) -> NarrowbandChannelSet:
    """One coherence block of the broadcast SWE."""
    lam = SPEED_OF_LIGHT / cfg.f_c
    a_bu, a_br, a_ru = cfg.pathloss_exponents
    bs = np.asarray(cfg.bs_position, dtype=float)
    bs_ant = ula_positions(bs, cfg.n_tx, lam / 2)
    ue = np.asarray(cfg.ue_mean, dtype=float) + cfg.ue_std * rng.standard_normal((cfg.n_ue, 3))

    def ue_dist(a, b):
        return max(float(np.linalg.norm(a - b)), REFERENCE_DISTANCE)

    if cfg.direct_blocked:
        h_d = np.zeros((cfg.n_tx, cfg.n_ue), dtype=complex)
    else:
        cols = []
        att = 10.0 ** (-cfg.direct_attenuation_db / 10.0)
        for n in range(cfg.n_ue):
            gain = att * pathloss(ue_dist(bs, ue[n]), a_bu, cfg.f_c)
            steer = steering_vector(bs_ant, ue[n] - bs, lam)
            cols.append(gen_ricean((cfg.n_tx,), cfg.kappa_db, gain, steer, rng))
        h_d = np.column_stack(cols)

    h1s, h2s = [], []
    for pos in cfg.ris_positions:
        ris = np.asarray(pos, dtype=float)
        ris_el = upa_positions(ris, cfg.ris_shape, lam / 2)
        gain = pathloss(ue_dist(bs, ris), a_br, cfg.f_c)
        h1s.append(gen_ricean((cfg.n_tx, cfg.n_ris), cfg.kappa_db, gain, los_matrix(bs_ant, ris_el, lam), rng))
        cols = []
        for n in range(cfg.n_ue):
            gain = pathloss(ue_dist(ris, ue[n]), a_ru, cfg.f_c)
            steer = steering_vector(ris_el, ue[n] - ris, lam)
            cols.append(gen_ricean((cfg.n_ris,), cfg.kappa_db, gain, steer, rng))
        h2s.append(np.column_stack(cols))
    return NarrowbandChannelSet(h_d, tuple(h1s), tuple(h2s), direct_blocked=cfg.direct_blocked)


# ---------------------------------------------------------------------------
# Channel dump
# ---------------------------------------------------------------------------

DUMP_ARRAYS = ("h", "H", "g")


def write_channel_dump(scenario, path) -> None:
    """CSV of every frequency response: ``array,shape,flat_index,real,imag``.

    ``flat_index`` is the row-major (C order) index into the array whose
    axis layout is documented on :class:`~bdris.scenario.WidebandScenario`.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["array", "shape", "flat_index", "real", "imag"])
        for name in DUMP_ARRAYS:
            arr = getattr(scenario, name)
            shape = "x".join(str(s) for s in arr.shape)
            for idx, z in enumerate(arr.ravel()):
                w.writerow([name, shape, idx, repr(float(z.real)), repr(float(z.imag))])


def read_channel_dump(path) -> dict[str, np.ndarray]:
    data: dict[str, tuple[tuple[int, ...], list]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            shape = tuple(int(s) for s in row["shape"].split("x"))
            entry = data.setdefault(row["array"], (shape, []))
            entry[1].append(complex(float(row["real"]), float(row["imag"])))
    return {k: np.asarray(v, dtype=complex).reshape(shape) for k, (shape, v) in data.items()}
