"""Daily firm-level production and ordering dynamics.

One simulated day is a bulk-synchronous tick of five phases:

1. every firm orders from its suppliers (demand-following part plus 1/tau of
   the inventory gap),
2. orders and final demand are summed into each supplier's demand,
3. production is the minimum of capacity, the input-inventory bound of every
   input sector, and demand,
4. each supplier rations its output among customer firms and final consumers,
5. deliveries arrive, inputs are consumed and realized demand is recorded.

All phases operate on whole numpy arrays. Per-link arrays follow the link
order of :class:`~supplyshock.network.ValuedNetwork`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from supplyshock.network import ValuedNetwork


class ConsumptionTiming(str, enum.Enum):
    CURRENT_DAY = "current_day"
    PREVIOUS_DAY = "previous_day"


class RationingPolicy(str, enum.Enum):
    PROPORTIONAL = "proportional"
    PRODUCER_PRIORITY = "producer_priority"


@dataclass
class ModelParams:
    """Behavioural parameters.

    Parameters
    ----------
    n_mean : float
        Mean inventory target in days of input use (Poisson mean).
    tau : float
        Days over which an inventory gap is closed.
    fixed_inventory : bool
        Use ``n_mean`` for every firm instead of sampling.
    consumption_timing : ConsumptionTiming
        ``current_day`` consumes inputs in proportion to the same day's
        production; ``previous_day`` uses the previous day's production.
    """

    n_mean: float = 9.0
    tau: float = 6.0
    fixed_inventory: bool = False
    consumption_timing: ConsumptionTiming = ConsumptionTiming.CURRENT_DAY

    def __post_init__(self) -> None:
        self.consumption_timing = ConsumptionTiming(self.consumption_timing)
        if self.n_mean < 0:
            raise ValueError(f"n_mean must be >= 0, got {self.n_mean}")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")

    def to_dict(self) -> dict:
        return {
            "n_mean": self.n_mean,
            "tau": self.tau,
            "fixed_inventory": self.fixed_inventory,
            "consumption_timing": self.consumption_timing.value,
        }


class DeltaSchedule:
    """Piecewise-constant share of disabled capital per firm.

    Intervals are half-open ``[start_day, end_day)``; outside every interval
    a firm's share is 0.
    """

    def __init__(self) -> None:
        self._intervals: dict[int, list[tuple[int, int, float]]] = {}
        self._arrays: tuple[np.ndarray, ...] | None = None

    def add(self, firm: int, start_day: int, end_day: int, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {value}")
        if end_day <= start_day:
            raise ValueError("empty interval")
        spans = self._intervals.setdefault(int(firm), [])
        for s, e, _ in spans:
            if start_day < e and s < end_day:
                raise ValueError(f"overlapping delta intervals for firm {firm}")
        spans.append((int(start_day), int(end_day), float(value)))
        self._arrays = None

    def intervals(self, firm: int) -> list[tuple[int, int, float]]:
        return sorted(self._intervals.get(firm, []))

    @property
    def firms(self) -> list[int]:
        return sorted(self._intervals)

    def __len__(self) -> int:
        return sum(len(v) for v in self._intervals.values())

    def _compiled(self) -> tuple[np.ndarray, ...]:
        if self._arrays is None:
            rows = [(f, s, e, v) for f in sorted(self._intervals) for s, e, v in sorted(self._intervals[f])]
            firm, start, end, value = (np.array(c) for c in zip(*rows)) if rows else (
                np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
            self._arrays = (firm.astype(np.int64), start, end, value.astype(float))
        return self._arrays

    def delta_at(self, day: int, n_firms: int) -> np.ndarray:
        firm, start, end, value = self._compiled()
        out = np.zeros(n_firms)
        on = (start <= day) & (day < end)
        out[firm[on]] = value[on]
        return out


@dataclass
class SimState:
    """Model state at the start of ``day``.

    ``p_act`` holds the previous day's production (``p_ini`` before day 0);
    ``orders``, ``realized_orders`` and ``realized_final`` hold the previous
    day's values. ``clipped`` accumulates inventory mass removed by the
    non-negativity floor.
    """

    day: int
    inventory: np.ndarray
    realized_demand_prev: np.ndarray
    p_ini: np.ndarray
    p_act: np.ndarray
    delta: np.ndarray
    n_i: np.ndarray
    orders: np.ndarray
    realized_orders: np.ndarray
    realized_final: np.ndarray
    clipped: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            self.day, self.inventory.copy(), self.realized_demand_prev.copy(), self.p_ini.copy(),
            self.p_act.copy(), self.delta.copy(), self.n_i.copy(), self.orders.copy(),
            self.realized_orders.copy(), self.realized_final.copy(), self.clipped,
        )

    _ARRAYS = ("inventory", "realized_demand_prev", "p_ini", "p_act", "delta", "n_i",
               "orders", "realized_orders", "realized_final")

    def to_dict(self) -> dict:
        """JSON-ready checkpoint; floats round-trip exactly through ``repr``."""
        doc = {"format": "supplyshock-state/1", "day": self.day, "clipped": self.clipped}
        for name in self._ARRAYS:
            doc[name] = getattr(self, name).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SimState":
        if doc.get("format") != "supplyshock-state/1":
            raise ValueError("not a state checkpoint")
        arrays = {name: np.array(doc[name], dtype=float) for name in cls._ARRAYS}
        return cls(day=int(doc["day"]), clipped=float(doc["clipped"]), **arrays)


# ---------------------------------------------------------------------------
# Precomputed topology
# ---------------------------------------------------------------------------


@dataclass
class _Topology:
    n_firms: int
    # (customer, input sector) groups, sorted by customer
    group: np.ndarray
    group_customer: np.ndarray
    a_tot: np.ndarray
    constrained: np.ndarray
    customer_starts: np.ndarray


def _topology(net: ValuedNetwork) -> _Topology:
    cached = getattr(net, "_engine_topology", None)
    if cached is not None:
        return cached
    n, n_sec = net.n_firms, len(net.sectors)
    key = net.customer * n_sec + net.firm_sector[net.supplier]
    uniq, group = np.unique(key, return_inverse=True)
    group_customer = uniq // n_sec
    a_tot = np.bincount(group, weights=net.value, minlength=len(uniq))
    constrained, customer_starts = np.unique(group_customer, return_index=True)
    topo = _Topology(n, group, group_customer, a_tot, constrained, customer_starts)
    net._engine_topology = topo
    return topo


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def poisson_inversion(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    """Poisson draws by inverting the CDF on uniforms from ``rng``."""
    u = rng.random(size)
    if mean == 0:
        return np.zeros(size)
    kmax = int(mean + 40 * math.sqrt(mean) + 40)
    k = np.arange(kmax + 1)
    log_pmf = k * math.log(mean) - mean - np.array([math.lgamma(x + 1) for x in k])
    cdf = np.cumsum(np.exp(log_pmf))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right").astype(float)


def sample_inventory_targets(params: ModelParams, n_firms: int, seed: int) -> np.ndarray:
    """Inventory target days per firm.

    Sampled targets are floored at one day: a firm holding zero days of input
    could not produce even without a shock.
    """
    if params.fixed_inventory:
        return np.full(n_firms, float(params.n_mean))
    rng = np.random.Generator(np.random.PCG64(seed))
    return np.maximum(poisson_inversion(rng, params.n_mean, n_firms), 1.0)


def initialize(
    net: ValuedNetwork,
    params: ModelParams,
    schedule: DeltaSchedule | None = None,
    seed: int = 0,
) -> SimState:
    """Steady state at day 0: inventories at target, realized demand at ``p_ini``."""
    n = net.n_firms
    n_i = sample_inventory_targets(params, n, seed)
    delta = schedule.delta_at(0, n) if schedule is not None else np.zeros(n)
    p_ini = net.p_ini.copy()
    return SimState(
        day=0,
        inventory=n_i[net.customer] * net.value,
        realized_demand_prev=p_ini.copy(),
        p_ini=p_ini,
        p_act=p_ini.copy(),
        delta=delta,
        n_i=n_i,
        orders=net.value.copy(),
        realized_orders=net.value.copy(),
        realized_final=net.final.copy(),
    )


# ---------------------------------------------------------------------------
# Phases
# ---------------------------------------------------------------------------


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def place_orders(state: SimState, net: ValuedNetwork, params: ModelParams) -> np.ndarray:
    """Per-link orders, clamped at zero. Inert customers order nothing."""
    cus = net.customer
    a = net.value
    follow = a * _safe_ratio(state.realized_demand_prev, state.p_ini)[cus]
    gap = (state.n_i[cus] * a - state.inventory) / params.tau
    orders = np.maximum(follow + gap, 0.0)
    orders[state.p_ini[cus] <= 0] = 0.0
    return orders


def aggregate_demand(orders: np.ndarray, net: ValuedNetwork) -> np.ndarray:
    return np.bincount(net.supplier, weights=orders, minlength=net.n_firms) + net.final


def compute_production(state: SimState, net: ValuedNetwork, demand: np.ndarray) -> np.ndarray:
    """Actual production: min(capacity, input-inventory bounds, demand)."""
    topo = _topology(net)
    p_cap = state.p_ini * (1.0 - state.delta)
    p_max = p_cap.copy()
    if len(topo.group):
        s_tot = np.bincount(topo.group, weights=state.inventory, minlength=len(topo.a_tot))
        p_pro = s_tot / topo.a_tot * state.p_ini[topo.group_customer]
        bound = np.minimum.reduceat(p_pro, topo.customer_starts)
        p_max[topo.constrained] = np.minimum(p_max[topo.constrained], bound)
    p_act = np.minimum(p_max, demand)
    p_act[state.p_ini <= 0] = 0.0
    return np.maximum(p_act, 0.0)


def waterfill(owner: np.ndarray, base: np.ndarray, want: np.ndarray,
              available: np.ndarray) -> np.ndarray:
    """Water-filling allocation for many independent owners at once.

    Claim ``k`` belongs to ``owner[k]``, has baseline ``base[k] > 0`` and
    demand ``want[k] >= 0``. For every owner whose ``available`` output falls
    short of total demand, the level ``lam`` solving
    ``sum(min(want/base, lam) * base) == available`` is found in closed form
    after sorting claims by relative demand; claims below the level are served
    in full and the rest receive ``lam * base``. Owners with enough output
    serve every claim in full.
    """
    alloc = want.astype(float, copy=True)
    if len(owner) == 0:
        return alloc
    n_own = len(available)
    total = np.bincount(owner, weights=want, minlength=n_own)
    short_owner = available < total
    sel = np.flatnonzero(short_owner[owner])
    if len(sel) == 0:
        return alloc
    o, b, d = owner[sel], base[sel], want[sel]
    rho = d / b
    order = np.lexsort((rho, o))
    o, b, d, rho, sel = o[order], b[order], d[order], rho[order], sel[order]
    m = len(o)
    pos = np.arange(m)
    starts = np.flatnonzero(np.r_[True, o[1:] != o[:-1]])
    sizes = np.diff(np.r_[starts, m])
    start_of = np.repeat(starts, sizes)
    avail = available[o]
    # water level reached at each sorted claim: served-before + rho * base-from-here
    cd = np.cumsum(d)
    cb = np.cumsum(b)
    d_before = cd - d - (cd[start_of] - d[start_of])
    b_total = np.repeat(np.add.reduceat(b, starts), sizes)
    b_from = b_total - (cb - b - (cb[start_of] - b[start_of]))
    reached = d_before + rho * b_from >= avail
    last = np.repeat(starts + sizes - 1, sizes)
    cand = np.where(reached | (pos == last), pos, m)
    pivot = np.repeat(np.minimum.reduceat(cand, starts), sizes)
    below = pos < pivot
    served = np.add.reduceat(np.where(below, d, 0.0), starts)
    rest = np.add.reduceat(np.where(below, 0.0, b), starts)
    lam = np.maximum(available[o[starts]] - served, 0.0) / rest
    lam_k = np.repeat(lam, sizes)
    alloc[sel] = np.where(below, d, np.minimum(lam_k * b, d))
    return alloc


def ration(
    available: float,
    firm_claims: Sequence[tuple[float, float]],
    consumer_claim: tuple[float, float] | None = None,
    policy: RationingPolicy | str = RationingPolicy.PROPORTIONAL,
) -> tuple[list[float], float]:
    """Ration one supplier's output.

    ``firm_claims`` are ``(baseline, demand)`` pairs; ``consumer_claim`` is
    ``(C, C)`` since final demand does not react to shocks. Returns the
    allocation per firm claim and the consumer's allocation.
    """
    policy = RationingPolicy(policy)
    if available < 0 or not math.isfinite(available):
        raise ValueError(f"available output must be finite and >= 0, got {available}")
    base = [float(b) for b, _ in firm_claims]
    want = [float(d) for _, d in firm_claims]
    cons_b, cons_d = (0.0, 0.0) if consumer_claim is None else map(float, consumer_claim)
    if any(b <= 0 for b in base) or any(d < 0 for d in want) or cons_d < 0:
        raise ValueError("claims need positive baselines and non-negative demands")
    if policy is RationingPolicy.PROPORTIONAL and cons_d > 0:
        base.append(cons_b)
        want.append(cons_d)
    alloc = waterfill(np.zeros(len(base), np.int64), np.array(base), np.array(want),
                      np.array([float(available)]))
    if policy is RationingPolicy.PROPORTIONAL and cons_d > 0:
        return alloc[:-1].tolist(), float(alloc[-1])
    firms_total = float(alloc.sum())
    return alloc.tolist(), min(cons_d, max(available - firms_total, 0.0))


def ration_all(
    net: ValuedNetwork, orders: np.ndarray, p_act: np.ndarray, policy: RationingPolicy
) -> tuple[np.ndarray, np.ndarray]:
    """Apply :func:`ration` to every supplier. Returns per-link and per-firm deliveries."""
    n, m = net.n_firms, net.n_links
    if policy is RationingPolicy.PROPORTIONAL:
        has_c = np.flatnonzero(net.final > 0)
        owner = np.concatenate([net.supplier, has_c])
        base = np.concatenate([net.value, net.final[has_c]])
        want = np.concatenate([orders, net.final[has_c]])
        alloc = waterfill(owner, base, want, p_act)
        realized_final = np.zeros(n)
        realized_final[has_c] = alloc[m:]
        return alloc[:m], realized_final
    alloc = waterfill(net.supplier, net.value, orders, p_act)
    to_firms = np.bincount(net.supplier, weights=alloc, minlength=n)
    realized_final = np.minimum(net.final, np.maximum(p_act - to_firms, 0.0))
    return alloc, realized_final


def settle_day(
    state: SimState,
    net: ValuedNetwork,
    params: ModelParams,
    orders: np.ndarray,
    p_act: np.ndarray,
    realized_orders: np.ndarray,
    realized_final: np.ndarray,
) -> SimState:
    """Record realized demand, update inventories and advance the day."""
    realized_demand = np.bincount(net.supplier, weights=realized_orders,
                                  minlength=net.n_firms) + realized_final
    if params.consumption_timing is ConsumptionTiming.CURRENT_DAY:
        used = p_act
    else:
        used = state.p_act
    use_ratio = _safe_ratio(used, state.p_ini)
    # net flow first so an exact steady state stays bit-identical
    inventory = state.inventory + (realized_orders - net.value * use_ratio[net.customer])
    neg = inventory < 0
    clipped = state.clipped
    if np.any(neg):
        clipped += float(-inventory[neg].sum())
        inventory[neg] = 0.0
    return SimState(
        day=state.day + 1,
        inventory=inventory,
        realized_demand_prev=realized_demand,
        p_ini=state.p_ini,
        p_act=p_act,
        delta=state.delta,
        n_i=state.n_i,
        orders=orders,
        realized_orders=realized_orders,
        realized_final=realized_final,
        clipped=clipped,
    )


def step_day(
    state: SimState,
    net: ValuedNetwork,
    params: ModelParams,
    policy: RationingPolicy | str = RationingPolicy.PROPORTIONAL,
    schedule: DeltaSchedule | None = None,
) -> SimState:
    """Advance one day. With a ``schedule``, the day's delta is taken from it."""
    policy = RationingPolicy(policy)
    if schedule is not None:
        state = replace(state, delta=schedule.delta_at(state.day, net.n_firms))
    orders = place_orders(state, net, params)
    demand = aggregate_demand(orders, net)
    p_act = compute_production(state, net, demand)
    realized_orders, realized_final = ration_all(net, orders, p_act, policy)
    new = settle_day(state, net, params, orders, p_act, realized_orders, realized_final)
    if schedule is not None:
        new.delta = schedule.delta_at(new.day, net.n_firms)
    return new


@dataclass
class Trajectory:
    """Per-day production record of one run.

    ``p_act[t, i]`` is firm ``i``'s production on day ``t``; it is ``None``
    when the run was made with ``record_firms=False``.
    """

    p_ini: np.ndarray
    total_production: np.ndarray
    clipped: np.ndarray
    n_i: np.ndarray
    final_state: SimState
    p_act: np.ndarray | None = None
    va_production: np.ndarray | None = None
    lost_va: np.ndarray | None = None
    seed: int = 0

    @property
    def horizon(self) -> int:
        return len(self.total_production)


def run(
    net: ValuedNetwork,
    params: ModelParams,
    schedule: DeltaSchedule | None,
    horizon_days: int,
    seed: int = 0,
    policy: RationingPolicy | str = RationingPolicy.PROPORTIONAL,
    record_firms: bool = True,
    va_ratio: np.ndarray | None = None,
) -> Trajectory:
    """Simulate ``horizon_days`` days from the steady state.

    With ``va_ratio`` (per firm), daily value added and each firm's cumulative
    value-added loss are accumulated as well, which is all the loss accounting
    needs when per-firm paths are not recorded.
    """
    if horizon_days < 1:
        raise ValueError("horizon_days must be >= 1")
    policy = RationingPolicy(policy)
    schedule = schedule if schedule is not None else DeltaSchedule()
    state = initialize(net, params, schedule, seed)
    n = net.n_firms
    total = np.empty(horizon_days)
    clipped = np.empty(horizon_days)
    p_act = np.empty((horizon_days, n)) if record_firms else None
    va_prod = np.empty(horizon_days) if va_ratio is not None else None
    lost = np.zeros(n) if va_ratio is not None else None
    for t in range(horizon_days):
        state = step_day(state, net, params, policy, schedule)
        total[t] = state.p_act.sum()
        clipped[t] = state.clipped
        if p_act is not None:
            p_act[t] = state.p_act
        if va_ratio is not None:
            va_prod[t] = (state.p_act * va_ratio).sum()
            lost += (state.p_ini - state.p_act) * va_ratio
    return Trajectory(
        p_ini=net.p_ini.copy(), total_production=total, clipped=clipped, n_i=state.n_i,
        final_state=state, p_act=p_act, va_production=va_prod, lost_va=lost, seed=seed,
    )
