"""Simulation harness: audited runs, long-run metrics, and the static oracle.

``run`` drives the slot controller over a finite horizon, drift-auditing
every slot, and returns per-slot traces. ``oracle_optimal`` solves the
static multicommodity program the controller is measured against: it knows
the whole network and the long-run key budgets, which the slot controller
never sees. ``v_sweep`` runs the controller at increasing V and checks each
measured utility against the oracle value minus the guaranteed gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .graph_core import Network
from .scheduler import (
    ControlParams,
    NetworkState,
    ScheduleConfig,
    SlotAudit,
    StepDecision,
    Utility,
    drift_audit,
    initial_state,
    step,
)

__all__ = [
    "Metrics",
    "OracleResult",
    "RunResult",
    "Scenario",
    "SweepRow",
    "oracle_optimal",
    "run",
    "v_sweep",
]

_ORACLE_MAX_NODES = 6
_ORACLE_MAX_COMMODITIES = 3

Injector = Callable[[NetworkState, ScheduleConfig, Random, int], StepDecision | None]
Observer = Callable[[int, NetworkState, StepDecision, SlotAudit], None]


@dataclass(frozen=True)
class Scenario:
    """A configured network plus horizon and seed: everything a run needs."""

    config: ScheduleConfig
    T: int
    seed: int

    def __post_init__(self) -> None:
        if self.T < 0:
            raise ValueError("horizon must be non-negative")

    @classmethod
    def build(
        cls,
        network: Network,
        commodities: Mapping[tuple[str, str], Utility],
        V: int | float,
        R_max: int | float,
        T: int,
        seed: int,
        tie_mode: str = "random",
    ) -> "Scenario":
        return cls(ScheduleConfig.build(network, commodities, V, R_max, tie_mode), T, seed)


@dataclass
class Metrics:
    """Per-slot traces. Backlog and stores are observed at slot start."""

    pairs: tuple[tuple[str, str], ...]
    dests: tuple[str, ...]
    admitted: dict[tuple[str, str], np.ndarray]
    delivered: dict[str, np.ndarray]
    utility: np.ndarray
    backlog: np.ndarray
    stores: dict[str, np.ndarray]
    key_margin: np.ndarray

    @staticmethod
    def empty(cfg: ScheduleConfig, T: int) -> "Metrics":
        return Metrics(
            pairs=cfg.pairs,
            dests=cfg.dests,
            admitted={p: np.zeros(T) for p in cfg.pairs},
            delivered={d: np.zeros(T) for d in cfg.dests},
            utility=np.zeros(T),
            backlog=np.zeros(T),
            stores={e.id: np.zeros(T) for e in cfg.network.edges},
            key_margin=np.zeros(T),
        )

    @staticmethod
    def _tail(x: np.ndarray, frac: float) -> np.ndarray:
        if len(x) == 0:
            return x
        keep = int(round(len(x) * frac))
        return x[len(x) - keep:]

    def admitted_rate(self, pair: tuple[str, str], tail: float = 0.8) -> float:
        return float(np.mean(self._tail(self.admitted[pair], tail))) if len(self.utility) else 0.0

    def delivered_rate(self, dest: str, tail: float = 0.8) -> float:
        return float(np.mean(self._tail(self.delivered[dest], tail))) if len(self.utility) else 0.0

    def utility_of_rates(self, commodities: Mapping[tuple[str, str], Utility], tail: float = 0.8) -> float:
        """Utility evaluated at the tail-averaged admitted rates."""
        return float(
            sum(commodities[p].value(self.admitted_rate(p, tail)) for p in self.pairs)
        )

    def max_backlog(self) -> float:
        return float(self.backlog.max()) if len(self.backlog) else 0.0


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    final_state: NetworkState
    metrics: Metrics
    drift_ok: bool
    availability_ok: bool
    bounds_checked: bool
    injected_slots: int


def run(
    scenario: Scenario,
    inject: Injector | None = None,
    observer: Observer | None = None,
) -> RunResult:
    """Simulate the horizon, drift-auditing every slot.

    ``inject`` may supply a decision for any slot (return None to let the
    controller decide); injected slots are audited like any other. The
    returned flags aggregate: ``drift_ok`` means the drift inequality held
    on every slot, ``availability_ok`` that no slot spent keys it lacked,
    ``bounds_checked`` that every slot's certified-bounds assert was active.
    ``observer`` sees (slot, state at slot start, decision, audit) per slot.
    """
    cfg = scenario.config
    rng = Random(scenario.seed)
    state = initial_state(cfg)
    T = scenario.T
    m = Metrics.empty(cfg, T)
    drift_ok = True
    availability_ok = True
    bounds_checked = True
    injected = 0

    for t in range(T):
        m.backlog[t] = sum(state.Q.values())
        for eid, arr in m.stores.items():
            arr[t] = state.E[eid]
        decision = inject(state, cfg, rng, t) if inject is not None else None
        if decision is not None:
            injected += 1
        prev = state
        state, decision, audit = step(state, cfg, rng, decision=decision)
        da = drift_audit(prev, decision, state, cfg)
        drift_ok = drift_ok and da.ok
        availability_ok = availability_ok and audit.availability_ok
        bounds_checked = bounds_checked and audit.bounds_checked
        for pair, r in decision.R.items():
            m.admitted[pair][t] = r
        m.utility[t] = sum(cfg.commodities[p].value(r) for p, r in decision.R.items())
        for dest, amount in audit.delivered.items():
            m.delivered[dest][t] = amount
        m.key_margin[t] = audit.min_key_margin if audit.min_key_margin != math.inf else 0
        if observer is not None:
            observer(t, prev, decision, audit)

    return RunResult(
        scenario=scenario,
        final_state=state,
        metrics=m,
        drift_ok=drift_ok,
        availability_ok=availability_ok,
        bounds_checked=bounds_checked,
        injected_slots=injected,
    )


@dataclass(frozen=True)
class OracleResult:
    """Optimum of the static program over long-run rates.

    ``value`` is the utility sum at the optimal admitted rates; ``rates``
    maps each commodity to its rate. ``method`` records how it was computed:
    an exact LP for linear utilities, a refined grid search with LP
    feasibility checks (a certified achievable lower bound) otherwise.
    """

    value: float
    rates: dict[tuple[str, str], float]
    capacities: dict[str, float]
    method: str


def _edge_capacities(network: Network) -> dict[str, float]:
    caps = {}
    for e in network.edges:
        lp = e.link_params
        if lp is None:
            raise ValueError(f"edge {e.id!r} has no link parameters")
        if lp.mu_of_P is not None:
            raise ValueError(
                "the static oracle supports identity-rate (one-time pad) links only"
            )
        caps[e.id] = min(lp.delta * lp.K, lp.P_max)
    return caps


def _flow_lp(
    network: Network,
    commodities: Sequence[tuple[str, str]],
    caps: Mapping[str, float],
    R_max: float,
    objective: Mapping[tuple[str, str], float] | None,
    fixed_rates: Mapping[tuple[str, str], float] | None = None,
):
    """Max-utility (or feasibility) LP over per-commodity arc flows.

    Variables: one rate per commodity, then one flow per (commodity,
    directed arc). Conservation holds at every node except the commodity's
    destination; the source's surplus equals the admitted rate.
    """
    nodes = network.nodes
    arcs = [(e.id, e.u, e.v) for e in network.edges] + [
        (e.id, e.v, e.u) for e in network.edges
    ]
    n_c = len(commodities)
    n_var = n_c + n_c * len(arcs)

    def fvar(ci: int, ai: int) -> int:
        return n_c + ci * len(arcs) + ai

    A_eq, b_eq = [], []
    for ci, (src, dst) in enumerate(commodities):
        for v in nodes:
            if v == dst:
                continue
            row = np.zeros(n_var)
            for ai, (_, x, y) in enumerate(arcs):
                if x == v:
                    row[fvar(ci, ai)] = 1
                elif y == v:
                    row[fvar(ci, ai)] = -1
            if v == src:
                row[ci] = -1
            A_eq.append(row)
            b_eq.append(0.0)

    A_ub, b_ub = [], []
    for e in network.edges:
        row = np.zeros(n_var)
        for ai, (eid, _, _) in enumerate(arcs):
            if eid == e.id:
                for ci in range(n_c):
                    row[fvar(ci, ai)] = 1
        A_ub.append(row)
        b_ub.append(float(caps[e.id]))

    bounds = []
    for ci, pair in enumerate(commodities):
        if fixed_rates is not None:
            r = fixed_rates[pair]
            bounds.append((r, r))
        else:
            bounds.append((0.0, float(R_max)))
    bounds.extend([(0.0, None)] * (n_c * len(arcs)))

    c = np.zeros(n_var)
    if objective is not None:
        for ci, pair in enumerate(commodities):
            c[ci] = -objective[pair]

    return linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq),
        b_eq=np.array(b_eq),
        bounds=bounds,
        method="highs",
    )


def oracle_optimal(
    network: Network,
    commodities: Mapping[tuple[str, str], Utility],
    R_max: int | float,
) -> OracleResult:
    """Optimum of the static program: maximize summed utility of long-run

    admitted rates subject to flow conservation and each edge carrying at
    most its long-run key budget. Refuses instances big enough to make the
    search strategies below untrustworthy.
    """
    if len(network.nodes) > _ORACLE_MAX_NODES:
        raise ValueError(f"oracle limited to {_ORACLE_MAX_NODES} nodes")
    if len(commodities) > _ORACLE_MAX_COMMODITIES:
        raise ValueError(f"oracle limited to {_ORACLE_MAX_COMMODITIES} commodities")
    caps = _edge_capacities(network)
    pairs = sorted(commodities)

    if all(u.kind == "linear" for u in commodities.values()):
        res = _flow_lp(network, pairs, caps, R_max, {p: commodities[p].w for p in pairs})
        if not res.success:
            raise RuntimeError(f"oracle LP failed: {res.message}")
        rates = {p: float(res.x[i]) for i, p in enumerate(pairs)}
        value = float(sum(commodities[p].w * rates[p] for p in pairs))
        return OracleResult(value=value, rates=rates, capacities=caps, method="lp")

    # concave utilities: refine a grid over the rate box, keeping only
    # rate vectors the flow LP certifies feasible
    lo = {p: 0.0 for p in pairs}
    hi = {p: float(R_max) for p in pairs}
    best_rates = {p: 0.0 for p in pairs}
    best_value = sum(commodities[p].value(0.0) for p in pairs)
    grid_n = 11
    while True:
        axes = {p: np.linspace(lo[p], hi[p], grid_n) for p in pairs}
        mesh = np.meshgrid(*[axes[p] for p in pairs], indexing="ij")
        candidates = np.stack([g.ravel() for g in mesh], axis=-1)
        values = np.zeros(len(candidates))
        for i, pt in enumerate(candidates):
            values[i] = sum(commodities[p].value(pt[j]) for j, p in enumerate(pairs))
        improved = None
        for i in np.argsort(-values):
            if values[i] <= best_value:
                break
            fixed = {p: float(candidates[i][j]) for j, p in enumerate(pairs)}
            feas = _flow_lp(network, pairs, caps, R_max, None, fixed_rates=fixed)
            if feas.success:
                improved = fixed
                best_value = float(values[i])
                break
        if improved is not None:
            best_rates = improved
        spans = {p: (hi[p] - lo[p]) / (grid_n - 1) for p in pairs}
        if max(spans.values()) <= 1e-3 * float(R_max):
            break
        for p in pairs:
            lo[p] = max(0.0, best_rates[p] - spans[p])
            hi[p] = min(float(R_max), best_rates[p] + spans[p])
    return OracleResult(
        value=float(best_value), rates=best_rates, capacities=caps, method="grid"
    )


@dataclass(frozen=True)
class SweepRow:
    V: int | float
    seed: int
    measured: float
    oracle: float
    gap_bound: float
    delivered: dict[str, float]
    max_backlog: float
    passed: bool


def v_sweep(
    network: Network,
    commodities: Mapping[tuple[str, str], Utility],
    R_max: int | float,
    T: int,
    V_values: Sequence[int | float],
    seeds: Sequence[int] = (1,),
    tie_mode: str = "random",
    slack: float = 0.02,
) -> list[SweepRow]:
    """Run the controller at each V and compare tail utility to the oracle.

    A row passes when the utility of the tail-averaged admitted rates is at
    least the oracle value minus the guaranteed B_tilde/V gap, less a small
    finite-horizon slack (a fraction of the oracle value).
    """
    oracle = oracle_optimal(network, commodities, R_max)
    rows = []
    for V in V_values:
        for seed in seeds:
            scenario = Scenario.build(network, commodities, V, R_max, T, seed, tie_mode)
            result = run(scenario)
            if not (result.drift_ok and result.availability_ok):
                raise RuntimeError(f"audit failed during sweep at V={V} seed={seed}")
            measured = result.metrics.utility_of_rates(commodities)
            gap = scenario.config.params.B_tilde / V
            passed = measured >= oracle.value - gap - slack * oracle.value
            rows.append(
                SweepRow(
                    V=V,
                    seed=seed,
                    measured=measured,
                    oracle=oracle.value,
                    gap_bound=gap,
                    delivered={
                        d: result.metrics.delivered_rate(d) for d in scenario.config.dests
                    },
                    max_backlog=result.metrics.max_backlog(),
                    passed=passed,
                )
            )
    return rows
