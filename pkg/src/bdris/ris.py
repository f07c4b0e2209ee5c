"""Metasurface models.

Covers the frequency-selective varactor element response (and its
capacitance derivative), switch selection matrices for the wideband BD-RIS,
banded batch BD-RIS configurations with discrete phase states, and the DFT
precoder codebook.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import RisCircuitParams

TWO_PI = 2 * np.pi


class ReflectionDomainError(ArithmeticError):
    pass


class SwitchValidationError(ValueError):
    pass


class BandedConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Varactor element response
# ---------------------------------------------------------------------------


def _check_args(f, c, params: RisCircuitParams, check: bool):
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    if check:
        if np.any(f <= 0):
            raise ValueError("frequency must be > 0")
        tol = 1e-9 * params.c_max
        if np.any(c < params.c_min - tol) or np.any(c > params.c_max + tol):
            raise ValueError("capacitance outside [c_min, c_max]")
    return f, c


def characteristic_impedance(f, c, params: RisCircuitParams):
    w = TWO_PI * np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    branch = 1j * w * params.l2 + params.r + 1 / (1j * w * c)
    return 1j * w * params.l1 * branch / (1j * w * (params.l1 + params.l2) + params.r + 1 / (1j * w * c))


def reflection_coefficient(f, c, params: RisCircuitParams, *, check: bool = True):
    """``(Z - Z0) / (Z + Z0)`` for the parallel resonant element circuit."""
    f, c = _check_args(f, c, params, check)
    z = characteristic_impedance(f, c, params)
    den = z + params.z0
    if np.any(den == 0):
        raise ReflectionDomainError("Z + Z0 vanished")
    return (z - params.z0) / den


def _num_den(f, c, params: RisCircuitParams):
    kf = TWO_PI * f
    num = 1 - kf**2 * (params.l1 + params.l2) * c + 1j * kf * params.r * c
    den = 1j * kf * params.l1 / params.z0 * (1 - kf**2 * params.l2 * c + 1j * kf * params.r * c)
    return num, den


def reflection_coefficient_tractable(f, c, params: RisCircuitParams, *, check: bool = True):
    """Equivalent form ``1 - 2 / (1 + D/N)`` with the N, D polynomials in C."""
    f, c = _check_args(f, c, params, check)
    num, den = _num_den(f, c, params)
    if np.any(num + den == 0):
        raise ReflectionDomainError("N + D vanished")
    return 1 - 2 / (1 + den / num)


def reflection_derivative(f, c, params: RisCircuitParams, *, check: bool = True):
    """``d(phi*)/dC`` in 1/farad."""
    f, c = _check_args(f, c, params, check)
    kf = TWO_PI * f
    num, den = _num_den(f, c, params)
    num_c, den_c = np.conj(num), np.conj(den)
    dnum_c = -(kf**2) * (params.l1 + params.l2) - 1j * kf * params.r
    dden_c = -1j * kf * params.l1 / params.z0 * (-(kf**2) * params.l2 - 1j * kf * params.r)
    s = num_c + den_c
    if np.any(s == 0):
        raise ReflectionDomainError("N + D vanished")
    return -2 / s**2 * (dnum_c * den_c - num_c * dden_c)


def phase_profile(c, f_n: float, params: RisCircuitParams) -> np.ndarray:
    """Diagonal reflection matrix of one surface at one subcarrier."""
    return np.diag(reflection_coefficient(f_n, np.asarray(c, dtype=float), params))


def phase_vectors(c, freqs, params: RisCircuitParams, *, check: bool = True) -> np.ndarray:
    """Reflection coefficients for every surface/subcarrier/element.

    ``c`` has shape (K, M) and ``freqs`` (N,); the result is (K, N, M).
    """
    c = np.asarray(c, dtype=float)
    return reflection_coefficient(np.asarray(freqs)[None, :, None], c[:, None, :], params, check=check)


def phase_derivatives(c, freqs, params: RisCircuitParams, *, check: bool = True) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return reflection_derivative(np.asarray(freqs)[None, :, None], c[:, None, :], params, check=check)


# ---------------------------------------------------------------------------
# Switch selection matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SwitchMatrix:
    """Permutation switch matrix; ``perm[j]`` is the row of the 1 in column j."""

    perm: np.ndarray

    @property
    def size(self) -> int:
        return len(self.perm)

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.perm)
        s = np.zeros((n, n))
        s[self.perm, np.arange(n)] = 1.0
        return s

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.perm, np.arange(self.size)))

    def __eq__(self, other) -> bool:
        return isinstance(other, SwitchMatrix) and np.array_equal(self.perm, other.perm)

    @classmethod
    def identity(cls, n: int) -> "SwitchMatrix":
        return cls(np.arange(n))

    @classmethod
    def from_matrix(cls, s: np.ndarray) -> "SwitchMatrix":
        s = np.asarray(s)
        if s.ndim != 2 or s.shape[0] != s.shape[1] or not np.all((s == 0) | (s == 1)):
            raise SwitchValidationError("switch matrix must be square and binary")
        if not (np.all(s.sum(axis=0) == 1) and np.all(s.sum(axis=1) == 1)):
            raise SwitchValidationError("switch matrix needs exactly one 1 per row and column")
        return cls(np.argmax(s, axis=0))


def validate_switch(perm) -> SwitchMatrix:
    arr = np.asarray(perm)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise SwitchValidationError("perm must be a 1-D integer array")
    n = len(arr)
    seen: dict[int, int] = {}
    for pos, row in enumerate(arr.tolist()):
        if not 0 <= row < n:
            raise SwitchValidationError(f"perm[{pos}]={row} out of range 0..{n - 1}")
        if row in seen:
            raise SwitchValidationError(f"perm[{pos}]={row} repeats perm[{seen[row]}]")
        seen[row] = pos
    return SwitchMatrix(arr.astype(int).copy())


# ---------------------------------------------------------------------------
# Banded batch BD-RIS with discrete states
# ---------------------------------------------------------------------------


def phase_set(bits: int) -> np.ndarray:
    """Discrete unit-modulus response states; ``{+1, -1}`` for one bit."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if bits == 1:
        return np.array([1.0 + 0j, -1.0 + 0j])
    q = np.arange(2**bits)
    return np.exp(2j * np.pi * q / 2**bits)


def band_mask(n_ris: int, n_b: int) -> np.ndarray:
    """Boolean mask of the off-diagonal positions with ``|i-j| <= n_b``."""
    i, j = np.indices((n_ris, n_ris))
    d = np.abs(i - j)
    return (d >= 1) & (d <= n_b)


@dataclass(frozen=True, eq=False)
class BandedRisConfig:
    diag_states: np.ndarray  # (N_ris,) int indices into the phase set
    band_switches: np.ndarray  # (N_ris, N_ris) bool, True only inside the band
    n_b: int

    @property
    def n_ris(self) -> int:
        return len(self.diag_states)

    def validate(self, n_states: int) -> None:
        if self.band_switches.shape != (self.n_ris, self.n_ris):
            raise BandedConfigError("band_switches must be N_ris x N_ris")
        if np.any(self.band_switches & ~band_mask(self.n_ris, self.n_b)):
            raise BandedConfigError("switch set outside the band")
        bad = np.flatnonzero((self.diag_states < 0) | (self.diag_states >= n_states))
        if bad.size:
            raise BandedConfigError(f"diag_states[{bad[0]}]={self.diag_states[bad[0]]} out of range 0..{n_states - 1}")

    @classmethod
    def diagonal(cls, diag_states, n_b: int = 0) -> "BandedRisConfig":
        states = np.asarray(diag_states, dtype=int)
        return cls(states, np.zeros((len(states), len(states)), dtype=bool), n_b)


def banded_phi(cfg: BandedRisConfig, phases: np.ndarray) -> np.ndarray:
    """Response matrix: ON switch (i, j) carries the state of element j."""
    cfg.validate(len(phases))
    values = np.asarray(phases)[cfg.diag_states]
    phi = np.where(cfg.band_switches, values[None, :], 0)
    phi = phi.astype(complex)
    np.fill_diagonal(phi, values)
    return phi


# ---------------------------------------------------------------------------
# DFT codebook
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PrecoderCodebook:
    matrix: np.ndarray  # (N_tx, card)

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.size

    def select(self, indices) -> np.ndarray:
        """Precoding matrix whose columns are the indexed codewords."""
        return self.matrix[:, np.asarray(indices, dtype=int)]


def dft_codebook(n_tx: int) -> PrecoderCodebook:
    if n_tx < 1:
        raise ValueError("n_tx must be >= 1")
    m = np.arange(n_tx)
    return PrecoderCodebook(np.exp(-2j * np.pi * np.outer(m, m) / n_tx) / np.sqrt(n_tx))
