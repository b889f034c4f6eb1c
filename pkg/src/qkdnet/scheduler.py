"""Joint key-management and data-scheduling controller for keyed networks.

Each edge holds a key store that one-time-pad encryption drains and on-slot
key generation refills; each node holds per-destination data queues. Every
slot the controller, knowing only the current queues and key stores:

1. turns key generation on wherever the store sits below its target level,
2. admits new data per commodity by weighing utility gain against backlog,
3. spends keys on each edge when the backlog differential justifies it,
4. serves the single best-weighted commodity on each edge at full rate,
5. applies the resulting transfers, admissions, and key-store movements.

The controller never looks ahead and never solves a global program, yet its
greedy slot-wise choices certify hard bounds: queues never exceed
``beta * V + R_max``, key stores never exceed ``theta + K_max``, consumption
never outruns the store, and the per-slot drift inequality audited by
``drift_audit`` holds for any bounded decision, not just the controller's.

Amounts default to integers (bits per slot) so every audit is an exact
integer comparison; runs with a logarithmic utility use floats and a 1e-9
tolerance instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from random import Random
from typing import Callable, Iterable, Mapping

from .graph_core import Edge, Network

__all__ = [
    "ControlParams",
    "DriftAudit",
    "LinkParams",
    "NetworkState",
    "ScheduleConfig",
    "ServedFlow",
    "SlotAudit",
    "StateInvariantError",
    "StepDecision",
    "Utility",
    "admit",
    "drift_audit",
    "initial_state",
    "key_consumption",
    "key_gen_decision",
    "link_weights",
    "lyapunov",
    "random_feasible_decision",
    "schedule_commodity",
    "step",
]

Num = int | float


class StateInvariantError(RuntimeError):
    """A certified state bound failed. This must never fire."""


@dataclass(frozen=True)
class LinkParams:
    """Per-edge constants: key generation rate ``K`` per on-slot, the key

    spend ceiling ``P_max``, the key-to-data efficiency ``delta`` (one key
    bit moves at most ``delta`` data bits), and the transmission rate
    ``mu_of_P`` as a function of keys spent. ``mu_of_P=None`` means one-time
    pad: rate equals keys spent, ``delta`` is 1.
    """

    K: Num
    P_max: Num
    delta: Num = 1
    mu_of_P: Callable[[Num], Num] | None = None

    def __post_init__(self) -> None:
        if self.K < 0 or self.P_max < 0:
            raise ValueError("K and P_max must be non-negative")
        if self.delta < 1:
            raise ValueError("delta must be at least 1")
        if self.mu_of_P is not None:
            if self.mu_of_P(0) != 0:
                raise ValueError("mu_of_P(0) must be 0")
            if self.mu_of_P(self.P_max) > self.delta * self.P_max:
                raise ValueError("mu_of_P exceeds delta * P at P_max")

    def rate(self, P: Num) -> Num:
        return P if self.mu_of_P is None else self.mu_of_P(P)


@dataclass(frozen=True)
class Utility:
    """Concave admission utility. ``linear``: w*r. ``log1p``: w*ln(1+r)."""

    kind: str
    w: Num

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "log1p"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.w <= 0:
            raise ValueError("utility weight must be positive")

    def value(self, r: Num) -> Num:
        if self.kind == "linear":
            return self.w * r
        return self.w * math.log1p(r)

    @property
    def marginal_at_zero(self) -> Num:
        return self.w


@dataclass(frozen=True)
class ControlParams:
    """Derived constants the controller and its audits run on.

    ``theta`` is the per-edge key-store target ``delta*beta*V + P_max``;
    ``gamma`` the scheduling margin ``R_max + d_max*mu_max``; ``B`` and
    ``B_tilde`` the drift and utility-gap constants. ``exact`` marks runs
    whose quantities are all integers, enabling exact audits.
    """

    V: Num
    R_max: Num
    beta: Num
    mu_max: Num
    d_max: int
    gamma: Num
    theta: dict[str, Num]
    n_nodes: int
    n_edges: int
    P_cap: Num
    K_max: Num
    B: float
    B_tilde: float
    exact: bool

    @classmethod
    def derive(
        cls,
        network: Network,
        commodities: Mapping[tuple[str, str], Utility],
        V: Num,
        R_max: Num,
    ) -> "ControlParams":
        if not commodities:
            raise ValueError("at least one commodity is required")
        if V <= 0 or R_max <= 0:
            raise ValueError("V and R_max must be positive")
        links = {}
        for e in network.edges:
            if e.link_params is None:
                raise ValueError(f"edge {e.id!r} has no link parameters")
            links[e.id] = e.link_params
        beta = max(u.marginal_at_zero for u in commodities.values())
        mu_max = max(lp.rate(lp.P_max) for lp in links.values())
        d_max = max(network.degree(v) for v in network.nodes)
        gamma = R_max + d_max * mu_max
        theta = {eid: lp.delta * beta * V + lp.P_max for eid, lp in links.items()}
        n, m = len(network.nodes), len(network.edges)
        P_cap = max(lp.P_max for lp in links.values())
        K_max = max(lp.K for lp in links.values())
        B = n * n * (1.5 * d_max**2 * mu_max**2 + R_max**2) + m / 2 * (P_cap + K_max) ** 2
        B_tilde = B + n * n * gamma * d_max * mu_max
        ints = [V, R_max, beta, mu_max, gamma, P_cap, K_max, *theta.values()]
        exact = (
            all(isinstance(x, int) for x in ints)
            and all(u.kind == "linear" and isinstance(u.w, int) for u in commodities.values())
            and all(lp.mu_of_P is None for lp in links.values())
            and all(isinstance(lp.K, int) and isinstance(lp.P_max, int) for lp in links.values())
        )
        return cls(
            V=V,
            R_max=R_max,
            beta=beta,
            mu_max=mu_max,
            d_max=d_max,
            gamma=gamma,
            theta=theta,
            n_nodes=n,
            n_edges=m,
            P_cap=P_cap,
            K_max=K_max,
            B=B,
            B_tilde=B_tilde,
            exact=exact,
        )

    @property
    def queue_bound(self) -> Num:
        return self.beta * self.V + self.R_max

    def store_bound(self, edge_id: str) -> Num:
        return self.theta[edge_id] + self.K_max


@dataclass(frozen=True)
class ScheduleConfig:
    """A network with link parameters plus the commodity set and constants."""

    network: Network
    commodities: dict[tuple[str, str], Utility]
    params: ControlParams
    tie_mode: str = "random"

    def __post_init__(self) -> None:
        if self.tie_mode not in ("random", "lexicographic"):
            raise ValueError(f"unknown tie mode {self.tie_mode!r}")
        for src, dst in self.commodities:
            self.network.require_node(src)
            self.network.require_node(dst)
            if src == dst:
                raise ValueError(f"commodity {src!r}->{dst!r} has equal endpoints")

    @classmethod
    def build(
        cls,
        network: Network,
        commodities: Mapping[tuple[str, str], Utility],
        V: Num,
        R_max: Num,
        tie_mode: str = "random",
    ) -> "ScheduleConfig":
        params = ControlParams.derive(network, commodities, V, R_max)
        return cls(network, dict(commodities), params, tie_mode)

    @cached_property
    def dests(self) -> tuple[str, ...]:
        return tuple(sorted({dst for _, dst in self.commodities}))

    @cached_property
    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.commodities))

    @cached_property
    def links(self) -> dict[str, LinkParams]:
        return {e.id: e.link_params for e in self.network.edges}


@dataclass
class NetworkState:
    """Slot counter, per-(node, destination) queues, per-edge key stores."""

    t: int
    Q: dict[tuple[str, str], Num]
    E: dict[str, Num]


@dataclass(frozen=True)
class ServedFlow:
    """One edge's scheduling outcome: full nominal rate for one commodity.

    ``actual`` is the data really moved, at most nominal and at most what
    the sender held; dummy filler covers the remainder on the wire so keys
    are still spent at the nominal rate.
    """

    src: str
    dst: str
    dest: str
    nominal: Num
    actual: Num


@dataclass(frozen=True)
class StepDecision:
    S: dict[str, int]
    R: dict[tuple[str, str], Num]
    P: dict[str, Num]
    served: dict[str, ServedFlow]
    injected: bool = False


@dataclass(frozen=True)
class SlotAudit:
    t: int
    availability_ok: bool
    min_key_margin: Num
    delivered: dict[str, Num]
    bounds_checked: bool


def initial_state(cfg: ScheduleConfig) -> NetworkState:
    Q = {(v, dest): 0 for v in cfg.network.nodes for dest in cfg.dests}
    E = {e.id: 0 for e in cfg.network.edges}
    return NetworkState(0, Q, E)


def within_certified_bounds(state: NetworkState, params: ControlParams) -> bool:
    """True iff every queue and key store sits inside its certified range.

    The controller preserves this set; decisions injected from outside the
    controller can leave it, after which the bounds are no longer promised.
    """
    tol = 0 if params.exact else 1e-9
    q_hi = params.queue_bound
    if any(q < -tol or q > q_hi + tol for q in state.Q.values()):
        return False
    return all(
        -tol <= e <= params.store_bound(eid) + tol for eid, e in state.E.items()
    )


def lyapunov(state: NetworkState, params: ControlParams) -> float:
    """Half the squared queue norm plus half the squared store deviation."""
    q = sum(v * v for v in state.Q.values())
    e = sum((state.E[eid] - th) ** 2 for eid, th in params.theta.items())
    return (q + e) / 2


def key_gen_decision(E: Num, theta: Num) -> int:
    """Generate keys this slot iff the store is strictly below target."""
    return 1 if E < theta else 0


def admit(Q: Num, V: Num, utility: Utility, R_max: Num) -> Num:
    """Admission maximizing V*U(R) - Q*R over [0, R_max]; ties take 0.

    Linear utility is bang-bang. The log1p interior optimum V*w/Q - 1 is
    clamped to the box.
    """
    if utility.kind == "linear":
        return R_max if Q < V * utility.w else 0
    if Q <= 0:
        return R_max
    r = V * utility.w / Q - 1
    return min(max(r, 0), R_max)


def link_weights(
    state: NetworkState, cfg: ScheduleConfig
) -> tuple[dict[tuple[str, str, str], Num], dict[str, Num]]:
    """Backlog differentials per (sender, receiver, destination), floored at

    zero after subtracting the margin gamma, plus each edge's best weight.
    """
    Q = state.Q
    gamma = cfg.params.gamma
    per_direction: dict[tuple[str, str, str], Num] = {}
    per_edge: dict[str, Num] = {}
    for e in cfg.network.edges:
        best = 0
        for src, dst in ((e.u, e.v), (e.v, e.u)):
            for dest in cfg.dests:
                w = Q[(src, dest)] - Q[(dst, dest)] - gamma
                w = w if w > 0 else 0
                per_direction[(src, dst, dest)] = w
                if w > best:
                    best = w
        per_edge[e.id] = best
    return per_direction, per_edge


def key_consumption(W: Num, E: Num, theta: Num, lp: LinkParams) -> Num:
    """Keys to spend: argmax of mu(P)*W + (E - theta)*P over [0, P_max].

    The box constraint is the only constraint; store availability is not
    consulted (it holds anyway, which the availability audit certifies).
    One-time-pad links are bang-bang with ties resolving to 0. Other rate
    functions are searched over integer spends.
    """
    if lp.mu_of_P is None:
        return lp.P_max if W + E - theta > 0 else 0
    best_p: Num = 0
    best_val: Num = 0
    for p in range(int(lp.P_max) + 1):
        val = lp.mu_of_P(p) * W + (E - theta) * p
        if val > best_val:
            best_val, best_p = val, p
    return best_p


def schedule_commodity(
    edge: Edge,
    weights: Mapping[tuple[str, str, str], Num],
    mu: Num,
    rng: Random,
    tie_mode: str = "random",
) -> ServedFlow | None:
    """Pick the (direction, destination) with the largest positive weight and

    give it the whole rate. Ties go to a seeded random pick, or to the first
    candidate in (sender, receiver, destination) order in lexicographic mode.
    """
    if mu <= 0:
        return None
    lo, hi = sorted((edge.u, edge.v))
    candidates = [
        key
        for src, dst in ((lo, hi), (hi, lo))
        for key in sorted(k for k in weights if k[0] == src and k[1] == dst)
    ]
    best = 0
    ties = []
    for key in candidates:
        w = weights[key]
        if w > best:
            best, ties = w, [key]
        elif w == best and w > 0:
            ties.append(key)
    if not ties:
        return None
    pick = ties[0] if tie_mode == "lexicographic" or len(ties) == 1 else ties[rng.randrange(len(ties))]
    src, dst, dest = pick
    return ServedFlow(src=src, dst=dst, dest=dest, nominal=mu, actual=mu)


def _controller_decision(state: NetworkState, cfg: ScheduleConfig, rng: Random) -> StepDecision:
    params = cfg.params
    Q, E = state.Q, state.E
    gamma = params.gamma
    S = {eid: key_gen_decision(E[eid], th) for eid, th in params.theta.items()}
    R = {
        pair: admit(Q[pair], params.V, cfg.commodities[pair], params.R_max)
        for pair in cfg.pairs
    }
    P: dict[str, Num] = {}
    served: dict[str, ServedFlow] = {}
    for e in cfg.network.edges:
        lp = cfg.links[e.id]
        weights: dict[tuple[str, str, str], Num] = {}
        best = 0
        for src, dst in ((e.u, e.v), (e.v, e.u)):
            for dest in cfg.dests:
                w = Q[(src, dest)] - Q[(dst, dest)] - gamma
                w = w if w > 0 else 0
                weights[(src, dst, dest)] = w
                if w > best:
                    best = w
        P[e.id] = key_consumption(best, E[e.id], params.theta[e.id], lp)
        flow = schedule_commodity(e, weights, lp.rate(P[e.id]), rng, cfg.tie_mode)
        if flow is not None:
            served[e.id] = flow
    return StepDecision(S=S, R=R, P=P, served=served)


def step(
    state: NetworkState,
    cfg: ScheduleConfig,
    rng: Random,
    decision: StepDecision | None = None,
) -> tuple[NetworkState, StepDecision, SlotAudit]:
    """Run one slot: decide (unless a decision is injected), then apply.

    Transfers move real data only: an edge whose sender holds less than the
    nominal rate moves what exists (dummy filler pads the wire, so keys are
    spent at nominal). Arrivals at a commodity's destination leave the
    system immediately; destination queues stay pinned at zero.

    The certified queue and store bounds are a preservation property: a
    controller step from a state inside them must land inside them, and such
    steps raise StateInvariantError on any violation. Steps with an injected
    decision, or controller steps from a state already pushed outside the
    set by earlier injections, carry no such promise and skip the assert;
    injected decisions still refuse to overdraw key stores.
    """
    params = cfg.params
    check_bounds = decision is None and within_certified_bounds(state, params)
    if decision is None:
        decision = _controller_decision(state, cfg, rng)
    links = cfg.links

    new_E: dict[str, Num] = {}
    min_margin: Num = math.inf
    for eid, lp in links.items():
        spend = decision.P[eid]
        margin = state.E[eid] - spend
        if margin < min_margin:
            min_margin = margin
        if decision.injected and margin < 0:
            raise ValueError(f"injected decision overdraws key store on edge {eid!r}")
        new_E[eid] = state.E[eid] - spend + decision.S[eid] * lp.K

    new_Q = dict(state.Q)
    delivered: dict[str, Num] = {dest: 0 for dest in cfg.dests}
    actuals: dict[str, ServedFlow] = {}
    # sequential allocation in edge-id order: senders can never go negative
    for eid in sorted(decision.served):
        flow = decision.served[eid]
        avail = new_Q[(flow.src, flow.dest)]
        actual = flow.nominal if flow.nominal <= avail else avail
        new_Q[(flow.src, flow.dest)] = avail - actual
        if flow.dst == flow.dest:
            delivered[flow.dest] += actual
        else:
            new_Q[(flow.dst, flow.dest)] += actual
        actuals[eid] = replace(flow, actual=actual)
    for pair, r in decision.R.items():
        new_Q[pair] += r

    decision = replace(decision, served=actuals)
    new_state = NetworkState(state.t + 1, new_Q, new_E)

    if check_bounds:
        q_hi = params.queue_bound
        tol = 0 if params.exact else 1e-9
        for (node, dest), q in new_Q.items():
            if node == dest:
                if q != 0:
                    raise StateInvariantError(f"destination queue ({node},{dest}) = {q}")
            elif q < -tol or q > q_hi + tol:
                raise StateInvariantError(
                    f"queue ({node},{dest}) = {q} outside [0, {q_hi}] at slot {state.t}"
                )
        for eid, e_val in new_E.items():
            e_hi = params.store_bound(eid)
            if e_val < -tol or e_val > e_hi + tol:
                raise StateInvariantError(
                    f"key store {eid} = {e_val} outside [0, {e_hi}] at slot {state.t}"
                )

    audit = SlotAudit(
        t=state.t,
        availability_ok=min_margin >= 0,
        min_key_margin=min_margin,
        delivered=delivered,
        bounds_checked=check_bounds,
    )
    return new_state, decision, audit


@dataclass(frozen=True)
class DriftAudit:
    ok: bool
    lhs: float
    rhs: float
    exact: bool


def drift_audit(
    state: NetworkState,
    decision: StepDecision,
    next_state: NetworkState,
    cfg: ScheduleConfig,
) -> DriftAudit:
    """Check the slot's drift-minus-reward against its constant bound.

    The drift is evaluated under the nominal rate-allocation dynamics (the
    form in which the bound holds for every bounded decision); on controller
    steps the applied transfers equal the nominal ones, and this routine
    verifies that the realized next state matches before trusting it.

    In exact mode both sides are compared as doubled integers.
    """
    params = cfg.params
    Q, E = state.Q, state.E
    theta = params.theta
    links = cfg.links

    # same operation order as step() so controller steps match bit for bit
    nominal_Q = dict(Q)
    for eid in sorted(decision.served):
        flow = decision.served[eid]
        nominal_Q[(flow.src, flow.dest)] -= flow.nominal
        if flow.dst != flow.dest:
            nominal_Q[(flow.dst, flow.dest)] += flow.nominal
    for pair, r in decision.R.items():
        nominal_Q[pair] += r
    nominal_E = {
        eid: E[eid] - decision.P[eid] + decision.S[eid] * links[eid].K for eid in E
    }

    if not decision.injected:
        tol = 0 if params.exact else 1e-9
        diverged = any(
            abs(nominal_E[eid] - next_state.E[eid]) > tol for eid in E
        ) or any(abs(next_state.Q[k] - v) > tol for k, v in nominal_Q.items())
        if diverged:
            raise StateInvariantError(
                f"controller step diverged from nominal dynamics at slot {state.t}"
            )

    reward = sum(
        cfg.commodities[pair].value(decision.R[pair]) for pair in decision.R
    )
    lhs2 = (
        sum(v * v for v in nominal_Q.values())
        - sum(v * v for v in Q.values())
        + sum((nominal_E[eid] - theta[eid]) ** 2 for eid in E)
        - sum((E[eid] - theta[eid]) ** 2 for eid in E)
        - 2 * params.V * reward
    )

    n2 = params.n_nodes**2
    b2 = n2 * (3 * params.d_max**2 * params.mu_max**2 + 2 * params.R_max**2)
    b2 += params.n_edges * (params.P_cap + params.K_max) ** 2
    rhs2 = b2
    for eid in E:
        rhs2 += 2 * (E[eid] - theta[eid]) * decision.S[eid] * links[eid].K
        rhs2 -= 2 * (E[eid] - theta[eid]) * decision.P[eid]
    for pair, r in decision.R.items():
        rhs2 -= 2 * (params.V * cfg.commodities[pair].value(r) - Q[pair] * r)
    for eid, flow in decision.served.items():
        rhs2 -= 2 * flow.nominal * (Q[(flow.src, flow.dest)] - Q[(flow.dst, flow.dest)])

    tol = 0 if params.exact else 1e-9
    ok = lhs2 <= rhs2 + tol
    return DriftAudit(ok=ok, lhs=lhs2 / 2, rhs=rhs2 / 2, exact=params.exact)


def random_feasible_decision(
    state: NetworkState, cfg: ScheduleConfig, rng: Random
) -> StepDecision:
    """Uniformly random decision within the action bounds (test hook).

    Generation bits, admissions, key spends, and the served (direction,
    destination) pick are all random; spends stay within both P_max and the
    current store so the step is physically executable. Weights are ignored
    on purpose, which can serve a commodity uphill.
    """
    params = cfg.params
    S = {eid: rng.randint(0, 1) for eid in state.E}
    R: dict[tuple[str, str], Num] = {}
    for pair in cfg.pairs:
        R[pair] = rng.randint(0, params.R_max) if params.exact else rng.uniform(0, params.R_max)
    P: dict[str, Num] = {}
    served: dict[str, ServedFlow] = {}
    for e in cfg.network.edges:
        lp = cfg.links[e.id]
        cap = max(0, min(lp.P_max, state.E[e.id]))
        P[e.id] = rng.randint(0, int(cap)) if params.exact else rng.uniform(0, cap)
        mu = lp.rate(P[e.id])
        if mu > 0 and rng.random() < 0.8:
            src, dst = (e.u, e.v) if rng.random() < 0.5 else (e.v, e.u)
            dest = cfg.dests[rng.randrange(len(cfg.dests))]
            if dest != src:
                served[e.id] = ServedFlow(src=src, dst=dst, dest=dest, nominal=mu, actual=mu)
    return StepDecision(S=S, R=R, P=P, served=served, injected=True)
