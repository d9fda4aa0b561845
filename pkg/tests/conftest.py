import numpy as np
import pytest

from supplyshock.engine import DeltaSchedule
from supplyshock.network import ValuedNetwork


def make_network(n, links, final, sectors=None, regions=None, va=None, essential=None, n_sectors=None):
    """Small network from index-based ``links = [(supplier, customer, daily_value), ...]``."""
    sectors = [0] * n if sectors is None else list(sectors)
    n_sec = n_sectors or (max(sectors, default=0) + 1)
    return ValuedNetwork(
        firm_ids=[f"f{k}" for k in range(n)],
        sectors=[f"s{k}" for k in range(n_sec)],
        firm_sector=np.array(sectors),
        firm_region=list(regions) if regions is not None else ["X"] * n,
        sales=np.ones(n),
        lon=np.linspace(135.0, 140.0, n),
        lat=np.linspace(34.0, 36.0, n),
        supplier=np.array([l[0] for l in links], dtype=np.int64),
        customer=np.array([l[1] for l in links], dtype=np.int64),
        value=np.array([l[2] for l in links], dtype=float),
        final=np.array(final, dtype=float),
        va_ratio=np.ones(n_sec) if va is None else np.array(va),
        essential=np.zeros(n_sec, bool) if essential is None else np.array(essential),
    )


def random_network(rng, max_firms=50, max_links=200, buyers_produce=False):
    """Random valued digraph with several sectors and mixed final demand.

    With ``buyers_produce`` every firm that buys inputs also has some output,
    so there are no inert buyers.
    """
    n = int(rng.integers(3, max_firms + 1))
    n_sec = int(rng.integers(1, 5))
    pairs = set()
    target = int(rng.integers(1, min(max_links, n * (n - 1)) + 1))
    while len(pairs) < target:
        s, c = (int(x) for x in rng.integers(0, n, size=2))
        if s != c:
            pairs.add((s, c))
    links = [(s, c, float(rng.uniform(0.5, 20.0))) for s, c in sorted(pairs)]
    final = np.where(rng.random(n) < 0.6, rng.uniform(0.0, 30.0, n), 0.0)
    if buyers_produce:
        sells = {s for s, _, _ in links}
        for _, c, _ in links:
            if c not in sells and final[c] <= 0:
                final[c] = float(rng.uniform(1.0, 30.0))
    sectors = rng.integers(0, n_sec, size=n)
    regions = np.where(rng.random(n) < 0.3, "A", "B")
    return make_network(n, links, final, sectors, regions, n_sectors=n_sec,
                        va=rng.uniform(0.2, 1.0, n_sec), essential=rng.random(n_sec) < 0.3)


def random_schedule(rng, n, horizon):
    sch = DeltaSchedule()
    for i in range(n):
        if rng.random() < 0.3:
            start = int(rng.integers(0, horizon // 2))
            end = int(rng.integers(start + 1, horizon + 1))
            sch.add(i, start, end, float(rng.choice([1.0, rng.uniform(0.1, 0.9)])))
    return sch


@pytest.fixture
def chain():
    """u -> m -> d, every link 10 per day, only d sells to consumers (10)."""
    return make_network(3, [(0, 1, 10.0), (1, 2, 10.0)], [0.0, 0.0, 10.0])


@pytest.fixture
def branching_chain():
    """u -> m -> d with consumers at every firm; all values dyadic so hand results are exact.

    A(u->m) = A(m->d) = 8; C = (8, 8, 16); p_ini = (16, 16, 16).
    """
    return make_network(3, [(0, 1, 8.0), (1, 2, 8.0)], [8.0, 8.0, 16.0])
