"""Controller architectures, genome layout and the HDF policy.

Each BD-RIS controller runs the same network (shared ``W_ris``) on its
local CSI and proposes a banded configuration plus one codebook index per
UE. A small fusion network at the BS (``W_bs``) merges the K proposals into
the final precoder indices.

Indices into the codebook are 0-based throughout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .. import channel, metrics, ris
from ..channel import NarrowbandChannelSet
from .layers import StructureError, attention_layer, conv2d_same, dense, layer_norm, relu, softmax, stack_real


@dataclass(frozen=True)
class ArchitectureSpec:
    n_tx: int
    n_ue: int
    n_ris: int
    n_panels: int = 1
    n_b: int = 0
    phase_bits: int = 1
    codebook_size: int | None = None  # defaults to the DFT size n_tx
    backbone: str = "mbacnn"  # or "ff" for the plain feed-forward baseline
    direct_branch: bool = True
    conv_kernels: tuple[int, ...] = (8, 8, 1)
    conv_size: int = 3
    ris_hidden: int | None = None  # defaults to 4 * n_ris
    precoder_hidden: int | None = None  # defaults to 2 * card(V)
    ff_hidden: int = 64
    n_blocks: int | None = None  # tie diagonal states in contiguous blocks

    def __post_init__(self):
        if min(self.n_tx, self.n_ue, self.n_ris, self.n_panels) < 1:
            raise StructureError("dimensions must be >= 1")
        if self.backbone not in ("mbacnn", "ff"):
            raise StructureError(f"unknown backbone {self.backbone!r}")
        if not 0 <= self.n_b < self.n_ris:
            raise StructureError("need 0 <= n_b < n_ris")
        if self.phase_bits < 1:
            raise StructureError("phase_bits must be >= 1")
        if self.conv_kernels and self.conv_kernels[-1] != 1:
            raise StructureError("the last convolution must have a single kernel")
        if self.n_blocks is not None and not (1 <= self.n_blocks <= self.n_ris and self.n_b == 0):
            raise StructureError("block restriction needs a diagonal surface and 1 <= n_blocks <= n_ris")

    @property
    def card(self) -> int:
        return self.codebook_size or self.n_tx

    @property
    def d_cat(self) -> int:
        return 2 * self.n_tx + 2 * self.n_ue

    @property
    def n_states(self) -> int:
        return 2**self.phase_bits

    @property
    def diag_slots(self) -> int:
        """Head outputs per element for the response state."""
        return 1 if self.phase_bits == 1 else self.n_states

    @property
    def ris_out(self) -> int:
        return (2 * self.n_b + self.diag_slots) * self.n_ris

    @property
    def ris_hidden_width(self) -> int:
        return self.ris_hidden or 4 * self.n_ris

    @property
    def precoder_hidden_width(self) -> int:
        return self.precoder_hidden or 2 * self.card

    @property
    def feature_len(self) -> int:
        return self.n_ris * self.d_cat if self.backbone == "mbacnn" else self.ff_hidden

    @property
    def ff_input_len(self) -> int:
        n = self.n_tx * self.n_ris + self.n_ris * self.n_ue
        if self.direct_branch:
            n += self.n_tx * self.n_ue
        return 2 * n


# ---------------------------------------------------------------------------
# Genome layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    name: str
    shape: tuple[int, ...]
    fan_in: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class GenomeLayout:
    segments: tuple[Segment, ...]
    n_ris_params: int  # W_ris occupies the leading entries

    @property
    def size(self) -> int:
        return sum(s.size for s in self.segments)

    def unpack(self, vector: np.ndarray) -> dict[str, np.ndarray]:
        if vector.shape != (self.size,):
            raise StructureError(f"genome length {vector.shape} does not match layout size {self.size}")
        out, pos = {}, 0
        for seg in self.segments:
            out[seg.name] = vector[pos : pos + seg.size].reshape(seg.shape)
            pos += seg.size
        return out

    def init_scales(self) -> np.ndarray:
        """Per-gene standard deviation ``1/sqrt(fan_in)``."""
        return np.concatenate([np.full(s.size, 1.0 / np.sqrt(s.fan_in)) for s in self.segments])

    def describe(self) -> list[dict]:
        return [{"name": s.name, "shape": list(s.shape), "fan_in": s.fan_in} for s in self.segments]


def _dense_segments(prefix: str, n_in: int, n_out: int) -> list[Segment]:
    return [Segment(f"{prefix}.W", (n_out, n_in), n_in), Segment(f"{prefix}.b", (n_out,), n_in)]


def build_layout(arch: ArchitectureSpec) -> GenomeLayout:
    segs: list[Segment] = []
    if arch.backbone == "mbacnn":
        branches = [("att1", arch.n_ris), ("att2", arch.n_ris)]
        if arch.direct_branch:
            branches.append(("attd", arch.n_tx))
        for name, n in branches:
            for w in ("q", "k", "v"):
                segs.append(Segment(f"{name}.{w}", (n, n), n))
        if arch.direct_branch:
            segs += _dense_segments("a0", 2 * arch.n_tx * arch.n_ue, arch.d_cat * arch.n_ris)
        c_in = 1
        for i, c_out in enumerate(arch.conv_kernels):
            fan = c_in * arch.conv_size**2
            segs.append(Segment(f"conv{i}.W", (c_out, c_in, arch.conv_size, arch.conv_size), fan))
            segs.append(Segment(f"conv{i}.b", (c_out,), fan))
            c_in = c_out
    else:
        segs += _dense_segments("ff", arch.ff_input_len, arch.ff_hidden)
    feat = arch.feature_len
    segs += _dense_segments("ris.1", feat, arch.ris_hidden_width)
    segs += _dense_segments("ris.2", arch.ris_hidden_width, arch.ris_out)
    for n in range(arch.n_ue):
        segs += _dense_segments(f"prec{n}.1", feat, arch.precoder_hidden_width)
        segs += _dense_segments(f"prec{n}.2", arch.precoder_hidden_width, arch.card)
    n_ris_params = sum(s.size for s in segs)
    width = arch.n_ue * arch.card
    segs += _dense_segments("fus.1", arch.n_panels * width, width)
    segs += _dense_segments("fus.2", width, width)
    return GenomeLayout(tuple(segs), n_ris_params)


@dataclass(frozen=True, eq=False)
class Genome:
    """Flat parameter vector ``[W_ris | W_bs]`` with its layout."""

    vector: np.ndarray
    layout: GenomeLayout

    def __post_init__(self):
        if self.vector.shape != (self.layout.size,):
            raise StructureError(f"genome has {self.vector.shape[0]} entries, layout needs {self.layout.size}")
        if not np.all(np.isfinite(self.vector)):
            raise StructureError("genome has non-finite entries")

    @property
    def w_ris(self) -> np.ndarray:
        return self.vector[: self.layout.n_ris_params]

    @property
    def w_bs(self) -> np.ndarray:
        return self.vector[self.layout.n_ris_params :]

    def params(self) -> dict[str, np.ndarray]:
        return self.layout.unpack(self.vector)

    @classmethod
    def zeros(cls, arch: ArchitectureSpec) -> "Genome":
        layout = build_layout(arch)
        return cls(np.zeros(layout.size), layout)

    @classmethod
    def random(cls, arch: ArchitectureSpec, rng: np.random.Generator) -> "Genome":
        layout = build_layout(arch)
        return cls(rng.standard_normal(layout.size) * layout.init_scales(), layout)


def save_genome(path, genome: Genome, arch: ArchitectureSpec, extra: dict | None = None) -> None:
    doc = {
        "format": "bdris-genome",
        "version": 1,
        "architecture": asdict(arch),
        "layout": genome.layout.describe(),
        "n_ris_params": genome.layout.n_ris_params,
        "vector": [repr(float(v)) for v in genome.vector],
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_genome(path) -> tuple[Genome, ArchitectureSpec]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "bdris-genome":
        raise StructureError("not a genome checkpoint")
    a = doc["architecture"]
    a["conv_kernels"] = tuple(a["conv_kernels"])
    arch = ArchitectureSpec(**a)
    layout = build_layout(arch)
    if layout.describe() != doc["layout"]:
        raise StructureError("checkpoint layout does not match its architecture")
    return Genome(np.array([float(v) for v in doc["vector"]]), layout), arch


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def _rms_normalize(X: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.mean(X**2))
    return X / r if r > 0 else X


def controller_inputs(H_D: np.ndarray | None, H1k: np.ndarray, H2k: np.ndarray):
    """Token matrices: rows index BS antennas (direct) or RIS elements."""
    x1 = _rms_normalize(stack_real(H1k.T, axis=1))  # (N_ris, 2 N_tx)
    x2 = _rms_normalize(stack_real(H2k, axis=1))  # (N_ris, 2 N_ue)
    xd = None if H_D is None else _rms_normalize(stack_real(H_D, axis=1))  # (N_tx, 2 N_ue)
    return xd, x1, x2


def _features(p: dict, arch: ArchitectureSpec, xd, x1, x2) -> np.ndarray:
    if arch.backbone == "ff":
        parts = [x1.ravel(), x2.ravel()] + ([xd.ravel()] if arch.direct_branch else [])
        return relu(dense(np.concatenate(parts), p["ff.W"], p["ff.b"]))
    scale = np.sqrt(2 * arch.n_tx)
    a1 = attention_layer(x1, p["att1.q"], p["att1.k"], p["att1.v"], scale)
    a2 = attention_layer(x2, p["att2.q"], p["att2.k"], p["att2.v"], scale)
    a_t = layer_norm(np.concatenate([a1, a2], axis=1))
    if arch.direct_branch:
        a = attention_layer(xd, p["attd.q"], p["attd.k"], p["attd.v"], scale)
        a0 = dense(a.ravel(), p["a0.W"], p["a0.b"]).reshape(arch.n_ris, arch.d_cat)
        a_t = a_t + layer_norm(a0)
    x = a_t[None]
    for i in range(len(arch.conv_kernels)):
        x = conv2d_same(x, p[f"conv{i}.W"], p[f"conv{i}.b"])
        if i < len(arch.conv_kernels) - 1:
            x = relu(x)
    return x[0].ravel()


def _argmax(logits: np.ndarray, sample: bool, rng: np.random.Generator | None) -> int:
    if sample:
        return int(rng.choice(len(logits), p=softmax(logits)))
    return int(np.argmax(logits))  # first maximum: lowest-index tie-break


def decode_ris_head(out: np.ndarray, arch: ArchitectureSpec) -> ris.BandedRisConfig:
    """Map RIS-head outputs to a feasible banded configuration.

    Layout: the response-state block first, then for every band offset ``d``
    the super-diagonal ``d`` followed by the sub-diagonal ``d``, each padded to
    ``N_ris`` slots (the trailing ``d`` slots are unused).
    """
    n = arch.n_ris
    head = arch.diag_slots * n
    if arch.phase_bits == 1:
        states = np.where(np.tanh(out[:n]) >= 0, 0, 1)
    else:
        states = np.argmax(out[:head].reshape(n, arch.n_states), axis=1)
    if arch.n_blocks is not None:
        states = block_states(states, arch.n_blocks)
    switches = np.zeros((n, n), dtype=bool)
    slots = out[head:].reshape(2 * arch.n_b, n) if arch.n_b else np.zeros((0, n))
    idx = np.arange(n)
    for d in range(1, arch.n_b + 1):
        on_sup = np.sign(np.tanh(slots[2 * (d - 1), : n - d])) > 0
        on_sub = np.sign(np.tanh(slots[2 * (d - 1) + 1, : n - d])) > 0
        switches[idx[: n - d], idx[: n - d] + d] = on_sup
        switches[idx[: n - d] + d, idx[: n - d]] = on_sub
    return ris.BandedRisConfig(states.astype(int), switches, arch.n_b)


def block_partition(n_ris: int, n_blocks: int) -> list[np.ndarray]:
    return np.array_split(np.arange(n_ris), n_blocks)


def block_states(states: np.ndarray, n_blocks: int) -> np.ndarray:
    """Give every block the majority state of its members (ties to the lower state)."""
    out = np.empty_like(states)
    for blk in block_partition(len(states), n_blocks):
        counts = np.bincount(states[blk])
        out[blk] = int(np.argmax(counts))
    return out


def mbacnn_forward(
    genome: Genome | dict,
    arch: ArchitectureSpec,
    H_D: np.ndarray | None,
    H1k: np.ndarray,
    H2k: np.ndarray,
    *,
    sample: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[ris.BandedRisConfig, np.ndarray]:
    """One controller: local CSI to (banded configuration, candidate indices)."""
    p = genome.params() if isinstance(genome, Genome) else genome
    if H1k.shape != (arch.n_tx, arch.n_ris) or H2k.shape != (arch.n_ris, arch.n_ue):
        raise StructureError(f"CSI shapes {H1k.shape}, {H2k.shape} do not match the architecture")
    if arch.direct_branch and (H_D is None or H_D.shape != (arch.n_tx, arch.n_ue)):
        raise StructureError("direct-link branch needs H_D of shape (n_tx, n_ue)")
    xd, x1, x2 = controller_inputs(H_D if arch.direct_branch else None, H1k, H2k)
    feat = _features(p, arch, xd, x1, x2)
    hidden = relu(dense(feat, p["ris.1.W"], p["ris.1.b"]))
    cfg = decode_ris_head(dense(hidden, p["ris.2.W"], p["ris.2.b"]), arch)
    indices = np.empty(arch.n_ue, dtype=int)
    for n in range(arch.n_ue):
        h = relu(dense(feat, p[f"prec{n}.1.W"], p[f"prec{n}.1.b"]))
        indices[n] = _argmax(dense(h, p[f"prec{n}.2.W"], p[f"prec{n}.2.b"]), sample, rng)
    return cfg, indices


def fusion_forward(
    genome: Genome | dict,
    arch: ArchitectureSpec,
    index_sets: Sequence[np.ndarray],
    *,
    sample: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One-hot encode the K candidate index sets and pick one index per UE."""
    p = genome.params() if isinstance(genome, Genome) else genome
    sets = np.asarray(index_sets, dtype=int)
    if sets.shape != (arch.n_panels, arch.n_ue):
        raise StructureError(f"expected {arch.n_panels} index sets of length {arch.n_ue}, got {sets.shape}")
    onehot = np.zeros((arch.n_panels, arch.n_ue, arch.card))
    k, n = np.indices(sets.shape)
    onehot[k, n, sets] = 1.0
    h = relu(dense(onehot.ravel(), p["fus.1.W"], p["fus.1.b"]))
    logits = dense(h, p["fus.2.W"], p["fus.2.b"]).reshape(arch.n_ue, arch.card)
    return np.array([_argmax(row, sample, rng) for row in logits], dtype=int)


# ---------------------------------------------------------------------------
# HDF policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HdfAction:
    configs: tuple[ris.BandedRisConfig, ...]
    phis: tuple[np.ndarray, ...]
    candidate_indices: np.ndarray  # (K, N_ue)
    indices: np.ndarray  # (N_ue,)
    V: np.ndarray  # (N_tx, N_ue)


def hdf_act(
    genome: Genome,
    arch: ArchitectureSpec,
    chset: NarrowbandChannelSet,
    codebook: ris.PrecoderCodebook,
    phases: np.ndarray,
    params: dict | None = None,
) -> HdfAction:
    """Every controller (shared weights) acts on its CSI, then the BS fuses."""
    p = params if params is not None else genome.params()
    if chset.n_ris_panels != arch.n_panels:
        raise StructureError(f"{chset.n_ris_panels} panels in the channel set, architecture expects {arch.n_panels}")
    h_d = None if chset.direct_blocked else chset.h_direct
    configs, cands = [], []
    for h1, h2 in zip(chset.h_bs_ris, chset.h_ris_ue):
        cfg, idx = mbacnn_forward(p, arch, h_d, h1, h2)
        configs.append(cfg)
        cands.append(idx)
    cands = np.array(cands)
    final = fusion_forward(p, arch, cands)
    phis = tuple(ris.banded_phi(c, phases) for c in configs)
    return HdfAction(tuple(configs), phis, cands, final, codebook.select(final))


def action_sum_rate(chset: NarrowbandChannelSet, phis, V: np.ndarray, sigma2: float, p: float) -> float:
    M = channel.effective_channels(chset, phis)
    return metrics.narrowband_sum_rate(M, V, sigma2, p)


def random_feasible_action(arch: ArchitectureSpec, phases: np.ndarray, codebook: ris.PrecoderCodebook, rng):
    """Uniformly random configuration in the banded set and random codebook indices."""
    phis = []
    mask = ris.band_mask(arch.n_ris, arch.n_b)
    for _ in range(arch.n_panels):
        states = rng.integers(len(phases), size=arch.n_ris)
        switches = mask & (rng.random((arch.n_ris, arch.n_ris)) < 0.5)
        phis.append(ris.banded_phi(ris.BandedRisConfig(states, switches, arch.n_b), phases))
    idx = rng.integers(codebook.size, size=arch.n_ue)
    return tuple(phis), codebook.select(idx)


def parameter_count(arch: ArchitectureSpec) -> int:
    return build_layout(arch).size
