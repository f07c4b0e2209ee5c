"""Distributed successive concave approximation with pricing exchange.

Every BS ``k`` owns the triplet ``(w_k, c_k, S_k)``: the precoders of its
UEs on all subcarriers, the varactor capacitances of its BD-RIS and the
switch permutation of that surface. Per iteration each BS maximises a
concave surrogate of the network sum rate built from its own rate and
linear prices supplied by the other cells, then takes a convex step towards
the surrogate maximiser.

Units. Gradients and prices are with respect to the sum over subcarriers of
the per-subcarrier rates (``N_sub`` times the reported rate). Precoders are in
sqrt(W). :func:`capacitance_gradients` returns per-farad values, while the
capacitance block update runs in units of ``SolverOptions.capacitance_unit``
so that the proximal weight ``tau`` is commensurate with the gradient.

All gradients share one structure. With ``P[i, u, n] = |f_{cell(i),u,n}^H
w_{i,n}|^2``, ``T_u = sigma^2 + sum_i P[i, u]`` and ``MUI_u = T_u - P[u, u]``,
the derivative of UE ``u``'s rate with respect to any variable ``x`` is
``sum_i W[i, u] dP[i, u]/dx`` with ``W[i, u] = (1/T_u - [i != u]/MUI_u) / ln 2``.
The own-cell gradients sum ``u`` over cell ``k`` and the prices over the
other cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import metrics, ris
from .assignment import solve_lap_max
from .scenario import WidebandScenario

LN2 = math.log(2.0)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tau: float = 1.0
    epsilon: float = 1e-4
    max_iterations: int = 100
    step_a: float = 0.9
    step_b: float = 0.95
    cooperative: bool = True
    diagonal: bool = False  # freeze every S_k at the identity
    bisection_tol: float = 1e-9
    bisection_max_iter: int = 200
    max_doublings: int = 60
    capacitance_unit: float = 1e-12
    switch_tau: float | None = None  # proximal weight of the switch block; defaults to tau

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.capacitance_unit > 0:
            raise ValueError("capacitance_unit must be > 0")
        if self.switch_tau is not None and not self.switch_tau > 0:
            raise ValueError("switch_tau must be > 0")

    @property
    def switch_proximal(self) -> float:
        return self.tau if self.switch_tau is None else self.switch_tau


@dataclass(frozen=True, eq=False)
class SolverState:
    w: np.ndarray  # (U, N_sub, N_tx); UE u is served by BS ue_cell[u]
    c: np.ndarray  # (K, N_ris) farads
    perm: np.ndarray  # (K, N_ris); S_k[perm[k, j], j] = 1
    t: int = 0
    alpha: float = 1.0
    objective: float = float("nan")

    @property
    def S(self) -> np.ndarray:
        k, m = self.perm.shape
        s = np.zeros((k, m, m))
        s[np.arange(k)[:, None], self.perm, np.arange(m)[None, :]] = 1.0
        return s

    def switch(self, k: int) -> ris.SwitchMatrix:
        return ris.SwitchMatrix(self.perm[k].copy())

    def cell_power(self, ue_cell: np.ndarray, k: int) -> float:
        return float(np.sum(np.abs(self.w[ue_cell == k]) ** 2))


@dataclass(frozen=True, eq=False)
class PricingBundle:
    precoder: np.ndarray  # (U, N_sub, N_tx), entry u priced for BS ue_cell[u]
    capacitance: np.ndarray  # (K, N_ris), per farad
    switch: np.ndarray  # (K, N_ris, N_ris)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    cell_rates: tuple[float, ...]
    alpha: float


@dataclass(frozen=True, eq=False)
class SolverResult:
    state: SolverState
    trace: list[TraceRow]
    converged: bool
    initial_objective: float

    @property
    def objective(self) -> float:
        return self.state.objective


# ---------------------------------------------------------------------------
# Shared per-iterate quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Composite channels and link statistics at one iterate.

    Computed once per iteration and shared by every block update.
    """

    f_rows: np.ndarray  # (K, U, N, T)
    stats: metrics.LinkStats
    weights: np.ndarray  # W[i, u, n]
    phi: np.ndarray  # (K, N, M)
    hw: np.ndarray  # (U, N, M): H_{cell(i), n} w_{i, n}
    gs: np.ndarray  # (K, U, N, M): g^H S rows
    gc: np.ndarray  # (K, U, N, M): g^H rows

    @property
    def own_amp(self) -> np.ndarray:
        return np.einsum("uun->un", self.stats.amp)


def snapshot(scenario: WidebandScenario, state: SolverState) -> Snapshot:
    S = state.S
    phi = ris.phase_vectors(state.c, scenario.frequencies, scenario.circuit)
    f_rows = metrics.scenario_composite_rows(scenario, state.c, S)
    st = metrics.link_stats(f_rows, state.w, scenario.ue_cell, scenario.noise_variance)
    n_ue = scenario.n_ue
    off = ~np.eye(n_ue, dtype=bool)
    weights = (1.0 / st.total[None, :, :] - off[:, :, None] / st.mui[None, :, :]) / LN2
    hw = np.einsum("inmt,int->inm", scenario.H[scenario.ue_cell], state.w)
    gc = np.conj(scenario.g)
    gs = np.einsum("kunp,kpq->kunq", gc, S)
    return Snapshot(f_rows=f_rows, stats=st, weights=weights, phi=phi, hw=hw, gs=gs, gc=gc)


def _weighted_conj_amp(snap: Snapshot, scenario: WidebandScenario, k: int, receivers: np.ndarray) -> np.ndarray:
    """``E[i, u, n] = W[i, u, n] * conj(amp[i, u, n])`` for ``i`` in cell ``k``, ``u`` in ``receivers``."""
    own_tx = scenario.ue_cell == k
    e = snap.weights * np.conj(snap.stats.amp)
    return e[np.ix_(own_tx, receivers)]


# ---------------------------------------------------------------------------
# Precoder block
# ---------------------------------------------------------------------------


def pricing_precoder(snap: Snapshot, scenario: WidebandScenario, k: int) -> np.ndarray:
    """Prices for every precoder of BS ``k``, shape (L_k, N_sub, N_tx).

    Entry ``[l, n]`` is the Wirtinger derivative with respect to
    ``conj(w_{l, n})`` of the summed rates of all UEs outside cell ``k``.
    """
    own_tx = scenario.ue_cell == k
    others = ~own_tx
    coef = snap.weights[np.ix_(own_tx, others)] * snap.stats.amp[np.ix_(own_tx, others)]  # (L, V, N)
    f_cols = np.conj(snap.f_rows[k][others])  # (V, N, T)
    return np.einsum("lvn,vnt->lnt", coef, f_cols)


def surrogate_coeffs(snap: Snapshot, scenario: WidebandScenario, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``(a, b)`` of the quadratic log-term surrogate for every UE/SC of cell ``k``.

    ``a`` has shape (L_k, N_sub) and ``b`` (L_k, N_sub, N_tx).
    """
    own = scenario.ue_cell == k
    s = snap.stats.signal[own]
    mui = snap.stats.mui[own]
    a = s / ((mui + s) * mui) / LN2
    f_cols = np.conj(snap.f_rows[k][own])  # (L, N, T)
    amp = snap.own_amp[own]
    b = f_cols * (amp / mui / LN2)[..., None]
    return a, b


def _precoder_solution(a, f_cols, v, mu):
    """``0.5 * (a f f^H + mu I)^{-1} v`` per (UE, SC) by Sherman-Morrison."""
    fhv = np.einsum("lnt,lnt->ln", np.conj(f_cols), v)
    fnorm2 = np.sum(np.abs(f_cols) ** 2, axis=-1)
    x = (v - (a * fhv / (mu + a * fnorm2))[..., None] * f_cols) / mu
    return 0.5 * x


def update_precoder(
    a: np.ndarray,
    f_cols: np.ndarray,
    b: np.ndarray,
    price: np.ndarray,
    w_t: np.ndarray,
    p_max: float,
    options: SolverOptions,
) -> tuple[np.ndarray, float]:
    """Maximiser of the precoder surrogate of one BS under its power budget.

    Maximises ``sum_{l,n} [-w^H (a F + tau/2 I) w + Re{v^H w}]`` with
    ``v = 2 price + 2 b + tau w_t`` subject to ``sum ||w||^2 <= p_max``.
    The multiplier is common to all UEs of the BS. Returns ``(w, lambda)``.
    """
    v = 2 * price + 2 * b + options.tau * w_t
    half_tau = options.tau / 2

    def solve(lam):
        w = _precoder_solution(a, f_cols, v, half_tau + lam)
        return w, float(np.sum(np.abs(w) ** 2))

    w0, p0 = solve(0.0)
    if p0 <= p_max:
        return w0, 0.0
    lo, hi = 0.0, 1.0
    w_hi, p_hi = solve(hi)
    doublings = 0
    while p_hi > p_max:
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > options.max_doublings:
            raise SolverError(f"power bisection failed to bracket after {options.max_doublings} doublings")
        w_hi, p_hi = solve(hi)
    for _ in range(options.bisection_max_iter):
        if (p_max - p_hi) / p_max < options.bisection_tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        w_mid, p_mid = solve(mid)
        if p_mid > p_max:
            lo = mid
        else:
            hi, w_hi, p_hi = mid, w_mid, p_mid
    return w_hi, hi


def precoder_surrogate_value(w, a, f_cols, b, price, w_t, tau) -> float:
    """Objective maximised by :func:`update_precoder`, up to a constant."""
    v = 2 * price + 2 * b + tau * w_t
    fhw = np.einsum("lnt,lnt->ln", np.conj(f_cols), w)
    quad = np.sum(a * np.abs(fhw) ** 2) + tau / 2 * np.sum(np.abs(w) ** 2)
    return float(-quad + np.real(np.vdot(v, w)))


# ---------------------------------------------------------------------------
# Capacitance block
# ---------------------------------------------------------------------------


def capacitance_gradients(snap: Snapshot, scenario: WidebandScenario, state: SolverState, k: int):
    """``(gamma, pi)``: derivatives of own-cell and other-cell rates w.r.t. ``c_k``, per farad."""
    own = scenario.ue_cell == k
    dphi = np.conj(ris.phase_derivatives(state.c[k][None, :], scenario.frequencies, scenario.circuit)[0])  # (N, M)
    x = dphi[None, :, :] * snap.hw[own]  # (L, N, M)
    out = []
    for receivers in (own, ~own):
        e = _weighted_conj_amp(snap, scenario, k, receivers)  # (L, V, N)
        y = np.einsum("lvn,lnm->vnm", e, x)
        out.append(2 * np.real(np.einsum("vnm,vnm->m", snap.gs[k][receivers], y)))
    return out[0], out[1]


def update_capacitances(c_t, gamma, price, tau: float, c_min: float, c_max: float) -> np.ndarray:
    """Box-constrained maximiser of ``<gamma + price, c - c_t> - tau/2 ||c - c_t||^2``."""
    beta = tau * np.asarray(c_t, dtype=float) + gamma + price
    return np.clip(beta / tau, c_min, c_max)


# ---------------------------------------------------------------------------
# Switch block
# ---------------------------------------------------------------------------


def switch_gradients(snap: Snapshot, scenario: WidebandScenario, k: int):
    """``(Gamma, Pi)``: derivatives of own/other-cell rates w.r.t. the entries of ``S_k``.

    Entry ``[p, q]`` is the derivative with respect to ``[S_k]_{p, q}`` with
    the permutation relaxed to a real matrix.
    """
    own = scenario.ue_cell == k
    x = snap.phi[k][None, :, :] * snap.hw[own]  # (L, N, M)
    out = []
    for receivers in (own, ~own):
        e = _weighted_conj_amp(snap, scenario, k, receivers)
        y = np.einsum("lvn,lnq->vnq", e, x)
        out.append(2 * np.real(np.einsum("vnp,vnq->pq", snap.gc[k][receivers], y)))
    return out[0], out[1]


def update_switch(gamma: np.ndarray, price: np.ndarray, perm_t: np.ndarray, tau: float) -> ris.SwitchMatrix:
    """Permutation maximising ``Tr(Re{Gamma + Pi + tau S_t}^T S)``."""
    s_t = ris.SwitchMatrix(np.asarray(perm_t)).matrix
    score = np.real(gamma + price + tau * s_t)
    # Row j of score.T lists the gain of putting column j's 1 at each row.
    result = solve_lap_max(score.T)
    return ris.SwitchMatrix(result.perm)


# ---------------------------------------------------------------------------
# Algorithm driver
# ---------------------------------------------------------------------------


def step_size(t: int, a: float = 0.9, b: float = 0.95, alpha_prev: float = 1.0) -> float:
    """``(alpha_prev + a) / (1 + b t)``; the schedule starts from ``alpha^0 = 1``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return (alpha_prev + a) / (1 + b * t)


def initial_state(scenario: WidebandScenario) -> SolverState:
    """Matched filters on the direct links at equal power, mid-range capacitances, identity switches."""
    K, M = scenario.n_cells, scenario.n_ris
    own_h = scenario.h[scenario.ue_cell, np.arange(scenario.n_ue)]  # (U, N, T)
    norms = np.linalg.norm(own_h, axis=-1, keepdims=True)
    counts = np.bincount(scenario.ue_cell, minlength=K)
    scale = np.sqrt(scenario.p_max[scenario.ue_cell] / (counts[scenario.ue_cell] * scenario.n_sub))
    w = own_h / np.where(norms > 0, norms, 1.0) * scale[:, None, None]
    cp = scenario.circuit
    c = np.full((K, M), 0.5 * (cp.c_min + cp.c_max))
    perm = np.tile(np.arange(M), (K, 1))
    return SolverState(w=w, c=c, perm=perm)


def compute_prices(snap: Snapshot, scenario: WidebandScenario, state: SolverState, options: SolverOptions) -> PricingBundle:
    K, M = scenario.n_cells, scenario.n_ris
    w_price = np.zeros_like(state.w)
    c_price = np.zeros((K, M))
    s_price = np.zeros((K, M, M))
    if options.cooperative:
        for k in range(K):
            w_price[scenario.ue_cell == k] = pricing_precoder(snap, scenario, k)
            c_price[k] = capacitance_gradients(snap, scenario, state, k)[1]
            s_price[k] = switch_gradients(snap, scenario, k)[1]
    return PricingBundle(precoder=w_price, capacitance=c_price, switch=s_price)


def best_response(
    scenario: WidebandScenario, state: SolverState, snap: Snapshot, prices: PricingBundle, k: int, options: SolverOptions
):
    """Surrogate maximiser ``(w_hat, c_hat, S_hat)`` of BS ``k`` at the frozen iterate."""
    own = scenario.ue_cell == k
    a, b = surrogate_coeffs(snap, scenario, k)
    f_cols = np.conj(snap.f_rows[k][own])
    w_hat, _ = update_precoder(a, f_cols, b, prices.precoder[own], state.w[own], float(scenario.p_max[k]), options)

    unit = options.capacitance_unit
    gamma_c, _ = capacitance_gradients(snap, scenario, state, k)
    cp = scenario.circuit
    c_hat = unit * update_capacitances(
        state.c[k] / unit, gamma_c * unit, prices.capacitance[k] * unit, options.tau, cp.c_min / unit, cp.c_max / unit
    )

    if options.diagonal:
        s_hat = state.perm[k].copy()
    else:
        gamma_s, _ = switch_gradients(snap, scenario, k)
        s_hat = update_switch(gamma_s, prices.switch[k], state.perm[k], options.switch_proximal).perm
    return w_hat, c_hat, s_hat


def cell_rates(scenario: WidebandScenario, state: SolverState) -> np.ndarray:
    f_rows = metrics.scenario_composite_rows(scenario, state.c, state.S)
    rates = metrics.per_ue_rates(f_rows, state.w, scenario.ue_cell, scenario.noise_variance)
    return np.bincount(scenario.ue_cell, weights=rates, minlength=scenario.n_cells)


def run_algorithm1(
    scenario: WidebandScenario,
    options: SolverOptions | None = None,
    init: SolverState | None = None,
    callback: Callable[[SolverState], None] | None = None,
) -> SolverResult:
    """Iterate the per-BS surrogate updates until the relative objective change is below ``epsilon``.

    If ``max_iterations`` is reached first, the best iterate seen is returned
    with ``converged=False``. ``callback`` receives every iterate, starting
    with the initial one.
    """
    options = options or SolverOptions()
    state = init if init is not None else initial_state(scenario)
    if options.diagonal:
        state = replace(state, perm=np.tile(np.arange(scenario.n_ris), (scenario.n_cells, 1)))
    rates = cell_rates(scenario, state)
    state = replace(state, t=0, alpha=1.0, objective=float(rates.sum()))
    trace = [TraceRow(0, state.objective, tuple(rates.tolist()), 1.0)]
    if callback is not None:
        callback(state)
    initial = state.objective
    best = state
    converged = False
    alpha = 1.0
    for t in range(options.max_iterations):
        if t >= 1:
            alpha = step_size(t, options.step_a, options.step_b, alpha)
        snap = snapshot(scenario, state)
        prices = compute_prices(snap, scenario, state, options)
        w_new = state.w.copy()
        c_new = state.c.copy()
        perm_new = state.perm.copy()
        for k in range(scenario.n_cells):
            own = scenario.ue_cell == k
            w_hat, c_hat, s_hat = best_response(scenario, state, snap, prices, k, options)
            w_new[own] = state.w[own] + alpha * (w_hat - state.w[own])
            c_new[k] = state.c[k] + alpha * (c_hat - state.c[k])
            perm_new[k] = s_hat
        cp = scenario.circuit
        c_new = np.clip(c_new, cp.c_min, cp.c_max)
        candidate = SolverState(w=w_new, c=c_new, perm=perm_new, t=t + 1, alpha=alpha)
        rates = cell_rates(scenario, candidate)
        obj = float(rates.sum())
        candidate = replace(candidate, objective=obj)
        trace.append(TraceRow(t + 1, obj, tuple(rates.tolist()), alpha))
        if callback is not None:
            callback(candidate)
        prev = state.objective
        state = candidate
        if obj > best.objective:
            best = state
        if obj == 0.0 or abs(obj - prev) / abs(obj) <= options.epsilon:
            converged = True
            break
    final = state if converged else best
    return SolverResult(state=final, trace=trace, converged=converged, initial_objective=initial)


def write_trace_csv(path, trace: list[TraceRow]) -> None:
    n_cells = len(trace[0].cell_rates) if trace else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective", *[f"cell_{k}_rate" for k in range(n_cells)], "alpha"])
        for row in trace:
            w.writerow([row.iteration, repr(row.objective), *[repr(r) for r in row.cell_rates], repr(row.alpha)])
