"""Experiment configuration and scenario construction.

A scenario is the fully instantiated input of every other module: node
placement, power and noise budgets, varactor circuit constants, the OFDM
grid and all per-subcarrier channel responses. Construction is a pure
function of ``(config, seed)``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def rng_stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, name, index...)``.

    The key is hashed, so adding a new stream name never shifts the draws of
    an existing one.
    """
    digest = hashlib.sha256(name.encode()).digest()
    name_words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *name_words, *(int(i) for i in index)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    bs_positions: np.ndarray  # (K, 3)
    ris_positions: np.ndarray  # (K, 3)
    ue_cluster_centers: np.ndarray  # (K, 2)
    cluster_radius: float
    ue_counts_per_cell: tuple[int, ...]
    ue_height: float = 1.5
    # unit vector normal to the xz-plane arrays; sign selects the facing side
    boresight: tuple[float, float, float] = (0.0, 1.0, 0.0)

    @property
    def n_cells(self) -> int:
        return len(self.ue_counts_per_cell)

    def validate(self) -> None:
        k = len(self.ue_counts_per_cell)
        for name in ("bs_positions", "ris_positions"):
            arr = getattr(self, name)
            if arr.shape != (k, 3):
                raise ConfigError(f"geometry.{name}", f"expected shape ({k}, 3), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"geometry.{name}", "non-finite coordinate")
        if self.ue_cluster_centers.shape != (k, 2):
            raise ConfigError(
                "geometry.ue_cluster_centers",
                f"expected shape ({k}, 2), got {self.ue_cluster_centers.shape}",
            )
        if not np.all(np.isfinite(self.ue_cluster_centers)):
            raise ConfigError("geometry.ue_cluster_centers", "non-finite coordinate")
        if not np.isfinite(self.cluster_radius) or self.cluster_radius < 0:
            raise ConfigError("geometry.cluster_radius", "must be finite and >= 0")
        for i, count in enumerate(self.ue_counts_per_cell):
            if count < 1:
                raise ConfigError(f"geometry.ue_counts_per_cell[{i}]", "every cell needs at least one UE")
        nodes = np.vstack([self.bs_positions, self.ris_positions])
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if np.allclose(nodes[i], nodes[j]):
                    kind = lambda idx: ("bs_positions", idx) if idx < k else ("ris_positions", idx - k)
                    fname, fidx = kind(j)
                    raise ConfigError(f"geometry.{fname}[{fidx}]", "duplicate node position")
        b = np.asarray(self.boresight, dtype=float)
        if b.shape != (3,) or not np.isclose(np.linalg.norm(b), 1.0):
            raise ConfigError("geometry.boresight", "must be a unit 3-vector")


@dataclass(frozen=True)
class OfdmParams:
    f_c: float = 2.4e9
    bandwidth: float = 100e6
    n_sub: int = 16
    n_taps: int = 16
    cyclic_prefix: int = 16

    def validate(self) -> None:
        if not self.f_c > 0:
            raise ConfigError("ofdm.f_c", "must be > 0")
        if not self.bandwidth > 0:
            raise ConfigError("ofdm.bandwidth", "must be > 0")
        if self.n_sub < 1:
            raise ConfigError("ofdm.n_sub", "must be >= 1")
        if self.n_taps < 1:
            raise ConfigError("ofdm.n_taps", "must be >= 1")
        if self.cyclic_prefix < 0:
            raise ConfigError("ofdm.cyclic_prefix", "must be >= 0")
        if self.cyclic_prefix > 0 and self.n_taps > self.cyclic_prefix + 1:
            raise ConfigError("ofdm.n_taps", "delay spread exceeds cyclic prefix + 1")
        if self.n_taps > self.n_sub:
            raise ConfigError("ofdm.n_taps", "more taps than subcarriers")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c


@dataclass(frozen=True)
class RisCircuitParams:
    l1: float = 2.5e-9
    l2: float = 0.7e-9
    r: float = 1.0
    z0: float = 50.0
    c_min: float = 0.2e-12
    c_max: float = 3.0e-12

    def validate(self) -> None:
        if not self.l1 > 0:
            raise ConfigError("circuit.l1", "must be > 0")
        if not self.l2 > 0:
            raise ConfigError("circuit.l2", "must be > 0")
        if not self.r >= 0:
            raise ConfigError("circuit.r", "must be >= 0")
        if not self.z0 > 0:
            raise ConfigError("circuit.z0", "must be > 0")
        if not 0 < self.c_min < self.c_max:
            raise ConfigError("circuit.c_min", "requires 0 < c_min < c_max")


@dataclass(frozen=True)
class PowerNoiseConfig:
    p_max_per_bs: tuple[float, ...]  # watts
    noise_variance: float  # watts, per UE and subcarrier
    pathloss_exponents: tuple[float, float, float] = (3.7, 2.6, 2.2)  # (bs-ue, bs-ris, ris-ue)

    def validate(self, n_cells: int) -> None:
        if len(self.p_max_per_bs) != n_cells:
            raise ConfigError("power.p_max_dbm", f"expected {n_cells} entries")
        if not all(p > 0 for p in self.p_max_per_bs):
            raise ConfigError("power.p_max_dbm", "powers must be > 0")
        if not self.noise_variance > 0:
            raise ConfigError("power.noise_dbm", "noise variance must be > 0")
        for name, a in zip(("bs_ue", "bs_ris", "ris_ue"), self.pathloss_exponents):
            if not a >= 2:
                raise ConfigError(f"power.pathloss_exponents.{name}", "exponent must be >= 2")


@dataclass(frozen=True)
class ArrayConfig:
    n_tx: int = 8
    ris_shape: tuple[int, int] = (12, 12)  # (columns along x, rows along z)

    @property
    def n_ris(self) -> int:
        return self.ris_shape[0] * self.ris_shape[1]

    def validate(self) -> None:
        if self.n_tx < 1:
            raise ConfigError("arrays.n_tx", "must be >= 1")
        if len(self.ris_shape) != 2 or min(self.ris_shape) < 1:
            raise ConfigError("arrays.ris_shape", "must be two positive integers")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: Geometry
    arrays: ArrayConfig
    ofdm: OfdmParams
    circuit: RisCircuitParams
    power: PowerNoiseConfig

    @property
    def n_cells(self) -> int:
        return self.geometry.n_cells

    def validate(self) -> None:
        self.geometry.validate()
        self.arrays.validate()
        self.ofdm.validate()
        self.circuit.validate()
        self.power.validate(self.n_cells)


@dataclass(frozen=True, eq=False)
class WidebandScenario:
    """Fully instantiated wideband multi-cell scenario.

    Channel arrays index BSs/RISs by ``j`` and UEs globally by ``u``
    (cell of UE ``u`` is ``ue_cell[u]``):

    * ``h[j, u, n]``  direct BS j -> UE u response, shape (K, U, N_sub, N_tx)
    * ``H[j, n]``     BS j -> RIS j response, shape (K, N_sub, N_ris, N_tx)
    * ``g[j, u, n]``  RIS j -> UE u response, shape (K, U, N_sub, N_ris)

    The ``*_taps`` arrays hold the time-domain impulse responses with the
    delay axis in place of the subcarrier axis.
    """

    config: ScenarioConfig
    seed: int
    ue_positions: np.ndarray  # (U, 3)
    ue_cell: np.ndarray  # (U,)
    frequencies: np.ndarray  # (N_sub,)
    h: np.ndarray
    H: np.ndarray
    g: np.ndarray
    h_taps: np.ndarray
    H_taps: np.ndarray
    g_taps: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.config.n_cells

    @property
    def n_ue(self) -> int:
        return len(self.ue_cell)

    @property
    def n_sub(self) -> int:
        return len(self.frequencies)

    @property
    def n_tx(self) -> int:
        return self.h.shape[-1]

    @property
    def n_ris(self) -> int:
        return self.g.shape[-1]

    @property
    def p_max(self) -> np.ndarray:
        return np.asarray(self.config.power.p_max_per_bs, dtype=float)

    @property
    def noise_variance(self) -> float:
        return self.config.power.noise_variance

    @property
    def circuit(self) -> RisCircuitParams:
        return self.config.circuit

    def cell_ues(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.ue_cell == k)


# ---------------------------------------------------------------------------
# OFDM grid and geometry helpers
# ---------------------------------------------------------------------------


def subcarrier_frequencies(ofdm: OfdmParams) -> np.ndarray:
    if ofdm.n_sub < 1:
        raise ConfigError("ofdm.n_sub", "must be >= 1")
    n = np.arange(1, ofdm.n_sub + 1)
    return ofdm.f_c + ofdm.bandwidth / ofdm.n_sub * (n - (ofdm.n_sub + 1) / 2)


def sample_disc(center: np.ndarray, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniform over a disc of the xy-plane."""
    r = radius * np.sqrt(rng.random(count))
    theta = 2 * np.pi * rng.random(count)
    return np.asarray(center, dtype=float) + np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def ula_positions(center: np.ndarray, n: int, spacing: float) -> np.ndarray:
    """ULA along x on the xz-plane, centred at ``center``."""
    offsets = (np.arange(n) - (n - 1) / 2) * spacing
    pos = np.tile(np.asarray(center, dtype=float), (n, 1))
    pos[:, 0] += offsets
    return pos


def upa_positions(center: np.ndarray, shape: tuple[int, int], spacing: float) -> np.ndarray:
    """UPA on the xz-plane, row-major over (z, x), centred at ``center``."""
    nx, nz = shape
    ox = (np.arange(nx) - (nx - 1) / 2) * spacing
    oz = (np.arange(nz) - (nz - 1) / 2) * spacing
    zz, xx = np.meshgrid(oz, ox, indexing="ij")
    pos = np.tile(np.asarray(center, dtype=float), (nx * nz, 1))
    pos[:, 0] += xx.ravel()
    pos[:, 2] += zz.ravel()
    return pos


# ---------------------------------------------------------------------------
# Config (de)serialisation
# ---------------------------------------------------------------------------

REFERENCE_DEFAULT: dict[str, Any] = {
    "geometry": {
        "bs_positions": [[0.0, 0.0, 5.0], [60.0, 0.0, 5.0], [0.0, 120.0, 5.0], [60.0, 120.0, 5.0]],
        "ris_positions": [[22.5, 63.75, 3.0], [37.5, 63.75, 3.0], [22.5, 56.25, 3.0], [37.5, 56.25, 3.0]],
        "ue_cluster_centers": [[20.0, 60.0], [40.0, 60.0], [25.0, 60.0], [35.0, 60.0]],
        "cluster_radius": 3.0,
        "ue_counts_per_cell": [2, 3, 4, 5],
        "ue_height": 1.5,
        "boresight": [0.0, 1.0, 0.0],
    },
    "arrays": {"n_tx": 8, "ris_shape": [10, 10]},
    "ofdm": {"f_c": 2.4e9, "bandwidth": 100e6, "n_sub": 16, "n_taps": 16, "cyclic_prefix": 16},
    "circuit": {"l1": 2.5e-9, "l2": 0.7e-9, "r": 1.0, "z0": 50.0, "c_min": 0.2e-12, "c_max": 3.0e-12},
    "power": {
        "p_max_dbm": 30.0,
        "noise_dbm": -80.0,
        "pathloss_exponents": {"bs_ue": 3.7, "bs_ris": 2.6, "ris_ue": 2.2},
    },
}


def default_config_dict() -> dict[str, Any]:
    return copy.deepcopy(REFERENCE_DEFAULT)


def _require(section: Mapping[str, Any], key: str, path: str):
    if not isinstance(section, Mapping):
        raise ConfigError(path, "expected an object")
    if key not in section:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return section[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
    return int(value)


def _matrix(value, path: str, width: int) -> np.ndarray:
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != width:
            raise ConfigError(f"{path}[{i}]", f"expected {width} coordinates")
        rows.append([_number(x, f"{path}[{i}]") for x in row])
    return np.asarray(rows, dtype=float).reshape(-1, width)


def parse_scenario_config(doc: Mapping[str, Any]) -> ScenarioConfig:
    """Typed config from a JSON-like mapping; raises :class:`ConfigError`."""
    geo = _require(doc, "geometry", "$")
    counts_raw = _require(geo, "ue_counts_per_cell", "geometry")
    if not isinstance(counts_raw, list) or not counts_raw:
        raise ConfigError("geometry.ue_counts_per_cell", "expected a non-empty list")
    counts = tuple(_integer(c, f"geometry.ue_counts_per_cell[{i}]") for i, c in enumerate(counts_raw))
    geometry = Geometry(
        bs_positions=_matrix(_require(geo, "bs_positions", "geometry"), "geometry.bs_positions", 3),
        ris_positions=_matrix(_require(geo, "ris_positions", "geometry"), "geometry.ris_positions", 3),
        ue_cluster_centers=_matrix(
            _require(geo, "ue_cluster_centers", "geometry"), "geometry.ue_cluster_centers", 2
        ),
        cluster_radius=_number(_require(geo, "cluster_radius", "geometry"), "geometry.cluster_radius"),
        ue_counts_per_cell=counts,
        ue_height=_number(geo.get("ue_height", 1.5), "geometry.ue_height"),
        boresight=tuple(_number(x, "geometry.boresight") for x in geo.get("boresight", [0.0, 1.0, 0.0])),
    )

    arr = _require(doc, "arrays", "$")
    shape = _require(arr, "ris_shape", "arrays")
    if not isinstance(shape, list) or len(shape) != 2:
        raise ConfigError("arrays.ris_shape", "expected [n_x, n_z]")
    arrays = ArrayConfig(
        n_tx=_integer(_require(arr, "n_tx", "arrays"), "arrays.n_tx"),
        ris_shape=tuple(_integer(s, "arrays.ris_shape") for s in shape),
    )

    of = _require(doc, "ofdm", "$")
    ofdm = OfdmParams(
        f_c=_number(_require(of, "f_c", "ofdm"), "ofdm.f_c"),
        bandwidth=_number(_require(of, "bandwidth", "ofdm"), "ofdm.bandwidth"),
        n_sub=_integer(_require(of, "n_sub", "ofdm"), "ofdm.n_sub"),
        n_taps=_integer(_require(of, "n_taps", "ofdm"), "ofdm.n_taps"),
        cyclic_prefix=_integer(_require(of, "cyclic_prefix", "ofdm"), "ofdm.cyclic_prefix"),
    )

    ci = _require(doc, "circuit", "$")
    circuit = RisCircuitParams(
        **{key: _number(_require(ci, key, "circuit"), f"circuit.{key}") for key in ("l1", "l2", "r", "z0", "c_min", "c_max")}
    )

    pw = _require(doc, "power", "$")
    k = len(counts)
    p_raw = _require(pw, "p_max_dbm", "power")
    if isinstance(p_raw, list):
        p_dbm = [_number(p, f"power.p_max_dbm[{i}]") for i, p in enumerate(p_raw)]
    else:
        p_dbm = [_number(p_raw, "power.p_max_dbm")] * k
    exps = _require(pw, "pathloss_exponents", "power")
    power = PowerNoiseConfig(
        p_max_per_bs=tuple(float(p) for p in dbm_to_watt(p_dbm)),
        noise_variance=float(dbm_to_watt(_number(_require(pw, "noise_dbm", "power"), "power.noise_dbm"))),
        pathloss_exponents=tuple(
            _number(_require(exps, key, "power.pathloss_exponents"), f"power.pathloss_exponents.{key}")
            for key in ("bs_ue", "bs_ris", "ris_ue")
        ),
    )
    cfg = ScenarioConfig(geometry=geometry, arrays=arrays, ofdm=ofdm, circuit=circuit, power=power)
    cfg.validate()
    return cfg


def load_config_document(path) -> dict[str, Any]:
    """Read a JSON document; parse errors carry line and column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("$", "top-level document must be an object")
    return doc


def scale_config(doc: Mapping[str, Any], n_cells: int) -> dict[str, Any]:
    """Keep the first ``n_cells`` BSs, RISs, clusters and UE counts."""
    out = copy.deepcopy(dict(doc))
    geo = out["geometry"]
    for key in ("bs_positions", "ris_positions", "ue_cluster_centers", "ue_counts_per_cell"):
        geo[key] = geo[key][:n_cells]
    p = out["power"]["p_max_dbm"]
    if isinstance(p, list):
        out["power"]["p_max_dbm"] = p[:n_cells]
    return out


# ---------------------------------------------------------------------------
# Scenario construction
# ---------------------------------------------------------------------------


def place_ues(geometry: Geometry, seed: int) -> tuple[np.ndarray, np.ndarray]:
    positions, cells = [], []
    for k, count in enumerate(geometry.ue_counts_per_cell):
        rng = rng_stream(seed, "scenario/ue-placement", k)
        xy = sample_disc(geometry.ue_cluster_centers[k], geometry.cluster_radius, count, rng)
        positions.append(np.column_stack([xy, np.full(count, geometry.ue_height)]))
        cells.extend([k] * count)
    return np.vstack(positions), np.asarray(cells, dtype=int)


def build_scenario(config: ScenarioConfig | Mapping[str, Any], seed: int) -> WidebandScenario:
    """Instantiate geometry and every wideband channel for one realization."""
    from . import channel

    if not isinstance(config, ScenarioConfig):
        config = parse_scenario_config(config)
    else:
        config.validate()
    geo, ofdm, arrays = config.geometry, config.ofdm, config.arrays
    ue_pos, ue_cell = place_ues(geo, seed)
    lam = ofdm.wavelength
    bs_ant = [ula_positions(p, arrays.n_tx, lam / 2) for p in geo.bs_positions]
    ris_el = [upa_positions(p, arrays.ris_shape, lam / 2) for p in geo.ris_positions]
    a_bu, a_br, a_ru = config.power.pathloss_exponents
    K, U, D = config.n_cells, len(ue_cell), ofdm.n_taps

    h_taps = np.empty((K, U, D, arrays.n_tx), dtype=complex)
    H_taps = np.empty((K, D, arrays.n_ris, arrays.n_tx), dtype=complex)
    g_taps = np.empty((K, U, D, arrays.n_ris), dtype=complex)
    for j in range(K):
        d = np.linalg.norm(ris_el[j][:, None, :] - bs_ant[j][None, :, :], axis=-1)
        gain = channel.pathloss(d, a_br, ofdm.f_c)
        H_taps[j] = channel.gen_wideband_taps(gain.shape, D, gain, rng_stream(seed, "channel/bs-ris", j)).taps
        for u in range(U):
            d = np.linalg.norm(bs_ant[j] - ue_pos[u], axis=-1)
            gain = channel.pathloss(d, a_bu, ofdm.f_c)
            h_taps[j, u] = channel.gen_wideband_taps(gain.shape, D, gain, rng_stream(seed, "channel/bs-ue", j, u)).taps
            d = np.linalg.norm(ris_el[j] - ue_pos[u], axis=-1)
            gain = channel.pathloss(d, a_ru, ofdm.f_c)
            g_taps[j, u] = channel.gen_wideband_taps(gain.shape, D, gain, rng_stream(seed, "channel/ris-ue", j, u)).taps

    n_sub = ofdm.n_sub
    h = channel.taps_array_to_frequency(h_taps, n_sub, axis=2)
    H = channel.taps_array_to_frequency(H_taps, n_sub, axis=1)
    g = channel.taps_array_to_frequency(g_taps, n_sub, axis=2)
    return WidebandScenario(
        config=config,
        seed=int(seed),
        ue_positions=ue_pos,
        ue_cell=ue_cell,
        frequencies=subcarrier_frequencies(ofdm),
        h=h,
        H=H,
        g=g,
        h_taps=h_taps,
        H_taps=H_taps,
        g_taps=g_taps,
    )


# ---------------------------------------------------------------------------
# Narrowband (single-BS, multi-RIS broadcast) configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NarrowbandConfig:
    """Single-BS broadcast SWE used by the neural controllers."""

    n_tx: int = 16
    ris_shape: tuple[int, int] = (20, 20)
    n_ue: int = 1
    bs_position: tuple[float, float, float] = (0.0, 0.0, 2.0)
    ris_positions: tuple[tuple[float, float, float], ...] = ((0.0, 3.0, 2.0),)
    ue_mean: tuple[float, float, float] = (8.0, 10.0, 1.5)
    ue_std: float = 0.0  # isotropic std of the per-block UE position draw
    kappa_db: float = 10.0
    direct_blocked: bool = True
    direct_attenuation_db: float = 10.0
    p_dbm: float = 30.0
    noise_dbm: float = -50.0
    f_c: float = 2.4e9
    pathloss_exponents: tuple[float, float, float] = (3.7, 2.6, 2.2)
    n_b: int = 0
    phase_bits: int = 1

    @property
    def n_ris(self) -> int:
        return self.ris_shape[0] * self.ris_shape[1]

    @property
    def n_ris_panels(self) -> int:
        return len(self.ris_positions)

    @property
    def p_watt(self) -> float:
        return float(dbm_to_watt(self.p_dbm))

    @property
    def noise_watt(self) -> float:
        return float(dbm_to_watt(self.noise_dbm))

    def validate(self) -> None:
        if self.n_tx < 1:
            raise ConfigError("narrowband.n_tx", "must be >= 1")
        if self.n_ue < 1:
            raise ConfigError("narrowband.n_ue", "must be >= 1")
        if not self.ris_positions:
            raise ConfigError("narrowband.ris_positions", "need at least one RIS")
        if self.n_b < 0 or self.n_b >= self.n_ris:
            raise ConfigError("narrowband.n_b", "band width must satisfy 0 <= N_B < N_ris")
        if self.phase_bits < 1:
            raise ConfigError("narrowband.phase_bits", "must be >= 1")
