"""Slow, literal reference for the daily model, used to cross-check the engine.

Everything here is plain Python loops over firms and links written in the
order the model equations are stated. Nothing is shared with
:mod:`supplyshock.engine` except the state container: rationing is solved by
bisection on the water level instead of the engine's sort-based closed form,
and sums run over per-firm adjacency lists instead of ``bincount``.
"""

from __future__ import annotations

import numpy as np

from supplyshock.engine import (
    ConsumptionTiming,
    DeltaSchedule,
    ModelParams,
    RationingPolicy,
    SimState,
)
from supplyshock.network import ValuedNetwork


def _level_fill(level, claims):
    total = 0.0
    for b, d in claims:
        total += min(d / b, level) * b
    return total


def reference_ration(available, claims, policy="proportional", consumer=0.0):
    """Allocate ``available`` among ``claims`` = [(baseline, demand), ...].

    ``consumer`` is the final-demand claim C (baseline and demand both C).
    Returns ``(firm_allocations, consumer_allocation)``. The water level is
    found by bisection until the bracket stops shrinking in floating point.
    """
    policy = RationingPolicy(policy)
    if available < 0:
        raise ValueError("available output must be >= 0")
    pool = list(claims)
    if policy is RationingPolicy.PROPORTIONAL and consumer > 0:
        pool.append((consumer, consumer))
    demand = 0.0
    for _, d in pool:
        demand += d
    if available >= demand:
        alloc = [d for _, d in pool]
    elif available == 0:
        alloc = [0.0 for _ in pool]
    else:
        lo, hi = 0.0, 0.0
        for b, d in pool:
            hi = max(hi, d / b)
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _level_fill(mid, pool) < available:
                lo = mid
            else:
                hi = mid
        # pick whichever bracket end conserves better
        lam = lo if abs(_level_fill(lo, pool) - available) <= abs(_level_fill(hi, pool) - available) else hi
        alloc = [min(d / b, lam) * b for b, d in pool]
    if policy is RationingPolicy.PROPORTIONAL:
        if consumer > 0:
            return alloc[:-1], alloc[-1]
        return alloc, 0.0
    to_firms = 0.0
    for x in alloc:
        to_firms += x
    return alloc, min(consumer, max(available - to_firms, 0.0))


def literal_ration(available, claims, consumer=0.0):
    """The iterative rationing steps read literally, step by step.

    Each round adds the *full* minimum relative order to every remaining
    claimant's accumulated level and subtracts ``level * order`` from the
    remaining output, so already-granted mass is counted again in later
    rounds. Kept for diagnostics only: the result does not in general
    exhaust, or respect, the available output.
    """
    orders = [d for _, d in claims]
    rel = [d / b for b, d in claims]
    has_c = consumer > 0
    if has_c:
        orders.append(consumer)
        rel.append(1.0)
    sub = [0.0] * len(orders)
    active = list(range(len(orders)))
    r = available
    while active:
        rmin = min(rel[k] for k in active)
        need = sum(rmin * orders[k] for k in active)
        if r <= need:
            break
        for k in active:
            sub[k] += rmin
        r -= need
        drop = next(k for k in active if rel[k] == rmin)
        active.remove(drop)
    rea = 0.0
    if active:
        denom = sum(orders[k] for k in active)
        rea = r / denom if denom > 0 else 0.0
    realized = [(rea if k in active else 0.0) * orders[k] + sub[k] * orders[k] for k in range(len(orders))]
    if has_c:
        return realized[:-1], realized[-1]
    return realized, 0.0


def reference_step(
    state: SimState,
    net: ValuedNetwork,
    params: ModelParams,
    policy="proportional",
    schedule: DeltaSchedule | None = None,
) -> SimState:
    """One day of the model, equation by equation, with explicit loops."""
    policy = RationingPolicy(policy)
    n = net.n_firms
    sup = [int(x) for x in net.supplier]
    cus = [int(x) for x in net.customer]
    A = [float(x) for x in net.value]
    C = [float(x) for x in net.final]
    sector = [int(x) for x in net.firm_sector]
    p_ini = [float(x) for x in state.p_ini]
    S = [float(x) for x in state.inventory]
    n_i = [float(x) for x in state.n_i]
    d_prev = [float(x) for x in state.realized_demand_prev]
    if schedule is not None:
        delta = [0.0] * n
        for f in schedule.firms:
            for s, e, v in schedule.intervals(f):
                if s <= state.day < e:
                    delta[f] = v
    else:
        delta = [float(x) for x in state.delta]

    # inbound[i] = links where i is the customer; outbound[j] = links where j supplies
    inbound = [[] for _ in range(n)]
    outbound = [[] for _ in range(n)]
    for e in range(len(A)):
        inbound[cus[e]].append(e)
        outbound[sup[e]].append(e)

    # orders to suppliers
    O = [0.0] * len(A)
    for i in range(n):
        for e in inbound[i]:
            if p_ini[i] > 0:
                o = A[e] * d_prev[i] / p_ini[i] + (n_i[i] * A[e] - S[e]) / params.tau
                O[e] = o if o > 0 else 0.0

    # demand
    D = [0.0] * n
    for i in range(n):
        total = 0.0
        for e in reversed(outbound[i]):
            total += O[e]
        D[i] = total + C[i]

    # production
    P_act = [0.0] * n
    for i in range(n):
        if p_ini[i] <= 0:
            continue
        p_cap = p_ini[i] * (1.0 - delta[i])
        s_tot = {}
        a_tot = {}
        for e in inbound[i]:
            s = sector[sup[e]]
            s_tot[s] = s_tot.get(s, 0.0) + S[e]
            a_tot[s] = a_tot.get(s, 0.0) + A[e]
        p_max = p_cap
        for s in s_tot:
            p_pro = s_tot[s] / a_tot[s] * p_ini[i]
            if p_pro < p_max:
                p_max = p_pro
        P_act[i] = min(p_max, D[i])

    # rationing
    O_star = [0.0] * len(A)
    C_star = [0.0] * n
    for i in range(n):
        links = outbound[i]
        alloc, c = reference_ration(P_act[i], [(A[e], O[e]) for e in links], policy, C[i])
        for e, x in zip(links, alloc):
            O_star[e] = x
        C_star[i] = c

    # realized demand and inventory update
    D_star = [0.0] * n
    for i in range(n):
        total = 0.0
        for e in reversed(outbound[i]):
            total += O_star[e]
        D_star[i] = total + C_star[i]
    if params.consumption_timing is ConsumptionTiming.CURRENT_DAY:
        used = P_act
    else:
        used = [float(x) for x in state.p_act]
    clipped = state.clipped
    S_next = [0.0] * len(A)
    for e in range(len(A)):
        i = cus[e]
        use = A[e] * used[i] / p_ini[i] if p_ini[i] > 0 else 0.0
        s = S[e] + (O_star[e] - use)
        if s < 0:
            clipped += -s
            s = 0.0
        S_next[e] = s

    next_delta = np.array(delta)
    if schedule is not None:
        next_delta = schedule.delta_at(state.day + 1, n)
    return SimState(
        day=state.day + 1,
        inventory=np.array(S_next),
        realized_demand_prev=np.array(D_star),
        p_ini=state.p_ini.copy(),
        p_act=np.array(P_act),
        delta=next_delta,
        n_i=state.n_i.copy(),
        orders=np.array(O),
        realized_orders=np.array(O_star),
        realized_final=np.array(C_star),
        clipped=clipped,
    )


def reference_run(net, params, schedule, horizon_days, seed=0, policy="proportional"):
    """Per-day production matrix from repeated :func:`reference_step`."""
    from supplyshock.engine import initialize

    state = initialize(net, params, schedule, seed)
    rows = []
    for _ in range(horizon_days):
        state = reference_step(state, net, params, policy, schedule)
        rows.append(state.p_act)
    return np.array(rows), state
