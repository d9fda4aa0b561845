"""Synthetic supply networks and topology statistics.

The generator grows a preferential-attachment graph, orients each edge along
a latent upstream-downstream tier (against it with a small probability),
optionally adds the reverse edge, and values the result with the same
two-step rule used for real firm data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from supplyshock.network import (
    DAYS_PER_YEAR,
    ValuedNetwork,
    rescale_to_io,
    tentative_link_values,
)


@dataclass
class SynthParams:
    n_firms: int = 10_000
    n_sectors: int = 20
    attach_m: int = 2
    final_demand_share: float = 0.3
    reciprocal_prob: float = 0.3
    seed: int = 0
    n_regions: int = 5
    essential_share: float = 0.2
    # probability an edge runs from the upstream (lower-tier) firm downstream
    tier_bias: float = 0.95

    def validate(self) -> None:
        if not self.n_firms >= self.n_sectors >= 1:
            raise ValueError("need n_firms >= n_sectors >= 1")
        if self.attach_m < 1:
            raise ValueError("attach_m must be >= 1")
        if self.n_firms < self.attach_m + 1:
            raise ValueError(f"n_firms ({self.n_firms}) must be at least attach_m + 1 ({self.attach_m + 1})")
        for name in ("final_demand_share", "reciprocal_prob", "essential_share", "tier_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n_regions < 1:
            raise ValueError("n_regions must be >= 1")


@dataclass
class NetStats:
    n_firms: int
    n_links: int
    gscc_fraction: float
    avg_path_length: float | None
    degree_histogram: dict[int, int] = field(default_factory=dict)
    tail_slope: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degree_histogram"] = {str(k): v for k, v in sorted(self.degree_histogram.items())}
        return d


class _Uniforms:
    """Buffered uniform draws so the growth loop does not call the RNG per edge."""

    def __init__(self, rng: np.random.Generator, block: int = 1 << 16):
        self._rng, self._block = rng, block
        self._buf = rng.random(block)
        self._pos = 0

    def next(self) -> float:
        if self._pos == self._block:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def preferential_attachment_edges(n: int, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Undirected growth edges ``(new, old)``: node ``m`` joins nodes ``0..m-1``,
    later nodes pick ``m`` distinct targets with probability proportional to degree."""
    new = np.empty(m * (n - m), dtype=np.int64)
    old = np.empty(m * (n - m), dtype=np.int64)
    uni = _Uniforms(rng)
    repeated: list[int] = []
    k = 0
    for t in range(m):
        new[k], old[k] = m, t
        k += 1
    repeated.extend(range(m))
    repeated.extend([m] * m)
    for v in range(m + 1, n):
        targets: list[int] = []
        size = len(repeated)
        while len(targets) < m:
            w = repeated[int(uni.next() * size)]
            if w not in targets:
                targets.append(w)
        for w in targets:
            new[k], old[k] = v, w
            k += 1
        repeated.extend(targets)
        repeated.extend([v] * m)
    return new, old


def generate_synthetic(params: SynthParams) -> ValuedNetwork:
    """Seeded synthetic firm network with sectors, regions, sales and values.

    Independent random streams are used for topology, edge orientation,
    reciprocation and attributes, so raising ``reciprocal_prob`` with the same
    seed only adds edges.
    """
    params.validate()
    n, m = params.n_firms, params.attach_m
    s_topo, s_dir, s_rec, s_attr, s_io = np.random.SeedSequence(params.seed).spawn(5)
    new, old = preferential_attachment_edges(n, m, np.random.Generator(np.random.PCG64(s_topo)))
    dir_rng = np.random.Generator(np.random.PCG64(s_dir))
    tier = dir_rng.random(n)
    along = dir_rng.random(len(new)) < params.tier_bias
    flip = (tier[new] < tier[old]) == along
    base_sup = np.where(flip, new, old)
    base_cus = np.where(flip, old, new)
    recip = np.random.Generator(np.random.PCG64(s_rec)).random(len(new)) < params.reciprocal_prob
    sup = np.concatenate([base_sup, base_cus[recip]])
    cus = np.concatenate([base_cus, base_sup[recip]])
    order = np.lexsort((cus, sup))
    sup, cus = sup[order], cus[order]

    attr = np.random.Generator(np.random.PCG64(s_attr))
    n_sec = params.n_sectors
    firm_sector = attr.integers(0, n_sec, size=n)
    region = attr.integers(0, params.n_regions, size=n)
    degree = np.bincount(sup, minlength=n) + np.bincount(cus, minlength=n)
    sales = 1e8 * np.maximum(degree, 1) * attr.lognormal(0.0, 0.5, size=n)
    centers = np.column_stack([attr.uniform(130.0, 145.0, params.n_regions),
                               attr.uniform(31.0, 44.0, params.n_regions)])
    lon = centers[region, 0] + attr.normal(0.0, 0.3, size=n)
    lat = centers[region, 1] + attr.normal(0.0, 0.3, size=n)

    io_rng = np.random.Generator(np.random.PCG64(s_io))
    tentative = tentative_link_values(sales, sup, cus)
    pair = firm_sector[sup] * n_sec + firm_sector[cus]
    flows = np.bincount(pair, weights=tentative, minlength=n_sec * n_sec).reshape(n_sec, n_sec)
    flows = flows * io_rng.lognormal(0.0, 0.3, size=(n_sec, n_sec))
    va_ratio = io_rng.uniform(0.2, 0.6, size=n_sec)
    annual = rescale_to_io(tentative, firm_sector[sup], firm_sector[cus], flows)
    value = annual / DAYS_PER_YEAR
    keep = value > 0
    final = params.final_demand_share * sales / DAYS_PER_YEAR

    width = len(str(n_sec - 1))
    n_ess = int(round(params.essential_share * n_sec))
    fid_width = len(str(n - 1))
    return ValuedNetwork(
        firm_ids=[f"F{k:0{fid_width}d}" for k in range(n)],
        sectors=[f"S{k:0{width}d}" for k in range(n_sec)],
        firm_sector=firm_sector,
        firm_region=[f"R{r}" for r in region.tolist()],
        sales=sales,
        lon=lon,
        lat=lat,
        supplier=sup[keep],
        customer=cus[keep],
        value=value[keep],
        final=final,
        va_ratio=va_ratio,
        essential=np.arange(n_sec) < n_ess,
    )


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _adjacency(n: int, supplier: np.ndarray, customer: np.ndarray) -> sparse.csr_matrix:
    data = np.ones(len(supplier), dtype=np.int8)
    return sparse.csr_matrix((data, (supplier, customer)), shape=(n, n))


def scc_labels(n: int, supplier: np.ndarray, customer: np.ndarray) -> np.ndarray:
    """Strongly connected component label per node (linear time)."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = csgraph.connected_components(_adjacency(n, supplier, customer),
                                             directed=True, connection="strong")
    return labels


def gscc_fraction(net: ValuedNetwork) -> float:
    """Share of firms in the largest strongly connected component."""
    if net.n_firms == 0:
        return 0.0
    labels = scc_labels(net.n_firms, net.supplier, net.customer)
    return float(np.bincount(labels).max() / net.n_firms)


def degree_distribution(net: ValuedNetwork, kind: str = "total") -> dict[int, int]:
    """Histogram ``{degree: firm count}`` of total, in- or out-degree."""
    n = net.n_firms
    out_deg = np.bincount(net.supplier, minlength=n)
    in_deg = np.bincount(net.customer, minlength=n)
    deg = {"total": out_deg + in_deg, "in": in_deg, "out": out_deg}[kind]
    values, counts = np.unique(deg, return_counts=True)
    return {int(k): int(c) for k, c in zip(values, counts)}


def degree_tail_slope(hist: dict[int, int], k_min: int | None = None) -> float | None:
    """Log-log slope of the degree density tail, ``-alpha``.

    ``alpha`` is the discrete power-law maximum-likelihood estimate over
    degrees ``>= k_min`` (default: the modal nonzero degree).
    """
    ks = np.array(sorted(k for k in hist if k > 0), dtype=float)
    if len(ks) == 0:
        return None
    counts = np.array([hist[int(k)] for k in ks], dtype=float)
    if k_min is None:
        k_min = int(ks[np.argmax(counts)])
    tail = ks >= k_min
    n_tail = counts[tail].sum()
    log_sum = float((counts[tail] * np.log(ks[tail] / (k_min - 0.5))).sum())
    if n_tail < 2 or log_sum <= 0:
        return None
    return -(1.0 + n_tail / log_sum)


def estimate_avg_path_length(
    net: ValuedNetwork, n_samples: int, seed: int = 0, directed: bool = True
) -> float | None:
    """Mean shortest-path hop count over reachable ordered pairs.

    Breadth-first search runs from ``n_samples`` distinct sources drawn
    uniformly (all firms when ``n_samples >= n_firms``). Returns ``None``
    when no source reaches any other firm.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = net.n_firms
    if n == 0:
        return None
    if n_samples >= n:
        sources = np.arange(n)
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        sources = np.sort(rng.choice(n, size=n_samples, replace=False))
    adj = _adjacency(n, net.supplier, net.customer)
    total, pairs = [], 0
    for lo in range(0, len(sources), 64):
        dist = csgraph.shortest_path(adj, method="D", directed=directed, unweighted=True,
                                     indices=sources[lo:lo + 64])
        for row in dist:
            hit = row[np.isfinite(row) & (row > 0)]
            pairs += len(hit)
            total.append(float(hit.sum()))
    if pairs == 0:
        return None
    return math.fsum(total) / pairs


def compute_stats(net: ValuedNetwork, n_samples: int = 100, seed: int = 0) -> NetStats:
    hist = degree_distribution(net)
    return NetStats(
        n_firms=net.n_firms,
        n_links=net.n_links,
        gscc_fraction=gscc_fraction(net),
        avg_path_length=estimate_avg_path_length(net, n_samples, seed) if net.n_firms else None,
        degree_histogram=hist,
        tail_slope=degree_tail_slope(hist),
    )


def write_degree_csv(hist: dict[int, int], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["degree", "count"])
        for k in sorted(hist):
            w.writerow([k, hist[k]])
