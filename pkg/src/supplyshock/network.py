"""Firm-level supply-chain network: ingestion, transaction-value estimation, storage.

The network is stored column-wise (numpy arrays indexed by firm position and link
position) because the simulation engine works on whole arrays at once. The
record types ``Firm``, ``SupplyLink`` and ``FinalDemand`` are the row view used
at the ingest boundary.
"""

from __future__ import annotations

import csv
import gzip
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.0

# Codes of the essential sectors (wholesale, retail, utilities, transport,
# storage, communication, healthcare, welfare) in the 2015 Japanese IO table.
ESSENTIAL_SECTOR_CODES = (
    "4611", "4621", "4622", "4711", "4811", "5111", "5112", "5711", "5712",
    "5721", "5722", "5741", "5742", "5743", "5761", "5771", "5781", "5789",
    "5791", "5911", "5921", "5931", "5941", "5951", "6411", "6421", "6431",
    "6441",
)

FIRM_COLUMNS = ("firm_id", "sector", "region", "annual_sales", "lon", "lat")
LINK_COLUMNS = ("supplier_id", "customer_id")
NETWORK_FORMAT = "supplyshock-network/1"


class LoadError(ValueError):
    """Malformed input file. The message names the file and row."""


class BuildError(ValueError):
    """Inconsistent network components."""


@dataclass(frozen=True)
class Firm:
    id: str
    sector: str
    region: str
    annual_sales: float
    lon: float | None = None
    lat: float | None = None


@dataclass(frozen=True)
class SupplyLink:
    """Daily pre-shock flow from ``supplier`` to ``customer``."""

    supplier: str
    customer: str
    daily_value: float


@dataclass(frozen=True)
class FinalDemand:
    firm: str
    daily_value: float


@dataclass
class IngestReport:
    """Counts of rows dropped while reading firm and link tables."""

    firms_read: int = 0
    firms_dropped_no_sales: int = 0
    links_read: int = 0
    links_dropped_unknown: int = 0
    links_dropped_self_loop: int = 0
    links_dropped_duplicate: int = 0
    links_dropped_zero_value: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class IOTable:
    """Sector-level input-output table in currency per year.

    ``flows[r, s]`` is the annual sale of sector ``r`` output to sector ``s``.
    """

    sectors: list[str]
    flows: np.ndarray
    final_demand: np.ndarray
    va_ratio: np.ndarray | None = None
    essential: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.sectors)
        if len(set(self.sectors)) != n:
            raise ValueError("duplicate sector codes in IO table")
        self.flows = np.asarray(self.flows, dtype=float)
        self.final_demand = np.asarray(self.final_demand, dtype=float)
        if self.flows.shape != (n, n):
            raise ValueError(f"flows must be {n}x{n}, got {self.flows.shape}")
        if self.final_demand.shape != (n,):
            raise ValueError("final_demand length does not match sectors")
        if np.any(self.flows < 0) or np.any(self.final_demand < 0):
            raise ValueError("IO flows and final demand must be non-negative")
        if self.va_ratio is None:
            self.va_ratio = np.ones(n)
        self.va_ratio = np.asarray(self.va_ratio, dtype=float)
        if self.va_ratio.shape != (n,) or np.any((self.va_ratio < 0) | (self.va_ratio > 1)):
            raise ValueError("va_ratio must have one value in [0, 1] per sector")
        if self.essential is None:
            self.essential = np.array([s in ESSENTIAL_SECTOR_CODES for s in self.sectors], dtype=bool)
        self.essential = np.asarray(self.essential, dtype=bool)
        self._index = {s: k for k, s in enumerate(self.sectors)}

    @property
    def has_va_ratio(self) -> bool:
        return not np.all(self.va_ratio == 1.0)

    def index(self, sector: str) -> int:
        return self._index[sector]

    def __contains__(self, sector: str) -> bool:
        return sector in self._index


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _open_csv(path: str | Path):
    path = Path(path)
    try:
        return path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror})") from exc


def _optional_float(text: str | None) -> float | None:
    if text is None or text.strip() == "":
        return None
    return float(text)


def load_firm_table(path: str | Path, report: IngestReport | None = None) -> list[Firm]:
    """Read ``firms.csv``.

    Rows with an empty ``annual_sales`` cell are dropped and counted in
    ``report``; malformed or negative values raise :class:`LoadError`.
    """
    report = report if report is not None else IngestReport()
    firms: list[Firm] = []
    seen: set[str] = set()
    with _open_csv(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in FIRM_COLUMNS[:4] if c not in header]
        if missing:
            raise LoadError(f"{path}: missing column(s) {', '.join(missing)}")
        for row_no, row in enumerate(reader, start=2):
            report.firms_read += 1
            fid = (row["firm_id"] or "").strip()
            if not fid:
                raise LoadError(f"{path}: row {row_no}: empty firm_id")
            if fid in seen:
                raise LoadError(f"{path}: row {row_no}: duplicate firm_id {fid!r}")
            seen.add(fid)
            sales_text = (row["annual_sales"] or "").strip()
            if sales_text == "":
                report.firms_dropped_no_sales += 1
                continue
            try:
                sales = float(sales_text)
                lon = _optional_float(row.get("lon"))
                lat = _optional_float(row.get("lat"))
            except ValueError as exc:
                raise LoadError(f"{path}: row {row_no}: non-numeric value ({exc})") from exc
            if not math.isfinite(sales) or sales < 0:
                raise LoadError(f"{path}: row {row_no}: annual_sales must be >= 0, got {sales_text}")
            firms.append(
                Firm(fid, (row["sector"] or "").strip(), (row["region"] or "").strip(), sales, lon, lat)
            )
    logger.info("read %d firms from %s (%d without sales dropped)",
                len(firms), path, report.firms_dropped_no_sales)
    return firms


def load_link_table(
    path: str | Path, firms: Sequence[Firm], report: IngestReport | None = None
) -> list[tuple[str, str]]:
    """Read ``links.csv`` as directed (supplier, customer) pairs.

    Links to unknown firms, self-loops and repeated pairs are dropped and
    counted; they are not errors.
    """
    report = report if report is not None else IngestReport()
    known = {f.id for f in firms}
    edges: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    with _open_csv(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in LINK_COLUMNS if c not in header]
        if missing:
            raise LoadError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            report.links_read += 1
            sup = (row["supplier_id"] or "").strip()
            cus = (row["customer_id"] or "").strip()
            if sup not in known or cus not in known:
                report.links_dropped_unknown += 1
            elif sup == cus:
                report.links_dropped_self_loop += 1
            elif (sup, cus) in seen:
                report.links_dropped_duplicate += 1
            else:
                seen.add((sup, cus))
                edges.append((sup, cus))
    dropped = report.links_dropped_unknown + report.links_dropped_self_loop
    if dropped:
        logger.warning("%s: dropped %d unknown-endpoint and %d self-loop links",
                       path, report.links_dropped_unknown, report.links_dropped_self_loop)
    return edges


def load_io_table(path: str | Path, essential: Iterable[str] | None = None) -> IOTable:
    """Read a square IO matrix with a ``FINAL_DEMAND`` row and optional ``VA_RATIO`` row.

    The first header cell is ignored; remaining header cells are sector codes.
    Rows are supplying sectors, columns purchasing sectors.
    """
    with _open_csv(path) as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise LoadError(f"{path}: empty file")
    sectors = [c.strip() for c in rows[0][1:]]
    n = len(sectors)
    matrix: dict[str, list[float]] = {}
    extra: dict[str, list[float]] = {}
    for row_no, row in enumerate(rows[1:], start=2):
        label = row[0].strip()
        if len(row) != n + 1:
            raise LoadError(f"{path}: row {row_no}: expected {n + 1} cells, got {len(row)}")
        try:
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise LoadError(f"{path}: row {row_no}: non-numeric value ({exc})") from exc
        if label in ("FINAL_DEMAND", "VA_RATIO"):
            extra[label] = values
        elif label in matrix:
            raise LoadError(f"{path}: row {row_no}: duplicate sector row {label!r}")
        else:
            matrix[label] = values
    if set(matrix) != set(sectors):
        raise LoadError(f"{path}: row labels do not match the sector header")
    if "FINAL_DEMAND" not in extra:
        raise LoadError(f"{path}: missing FINAL_DEMAND row")
    ess = None
    if essential is not None:
        codes = set(essential)
        ess = np.array([s in codes for s in sectors], dtype=bool)
    try:
        return IOTable(
            sectors=sectors,
            flows=np.array([matrix[s] for s in sectors]).reshape(n, n),
            final_demand=np.array(extra["FINAL_DEMAND"]),
            va_ratio=np.array(extra["VA_RATIO"]) if "VA_RATIO" in extra else None,
            essential=ess,
        )
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from exc


def load_essential_codes(path: str | Path) -> list[str]:
    """One sector code per line; a header line that is not a code of the table is harmless."""
    with _open_csv(path) as fh:
        return [r[0].strip() for r in csv.reader(fh) if r and r[0].strip()]


# ---------------------------------------------------------------------------
# Transaction-value estimation
# ---------------------------------------------------------------------------


def _firm_sector_index(firms: Sequence[Firm], io: IOTable) -> np.ndarray:
    out = np.empty(len(firms), dtype=np.int64)
    for k, f in enumerate(firms):
        if f.sector not in io:
            raise BuildError(f"firm {f.id!r} has sector {f.sector!r} not present in the IO table")
        out[k] = io.index(f.sector)
    return out


def tentative_link_values(sales: np.ndarray, supplier: np.ndarray, customer: np.ndarray) -> np.ndarray:
    """Split each supplier's annual sales over its customers in proportion to their sales.

    A supplier whose customers all have zero sales splits equally.
    """
    n = len(sales)
    cust_sales = sales[customer]
    total = np.bincount(supplier, weights=cust_sales, minlength=n)
    n_cust = np.bincount(supplier, minlength=n)
    denom = total[supplier]
    out = np.empty(len(supplier))
    pos = denom > 0
    out[pos] = sales[supplier[pos]] * cust_sales[pos] / denom[pos]
    out[~pos] = sales[supplier[~pos]] / n_cust[supplier[~pos]]
    return out


def rescale_to_io(
    tentative: np.ndarray, sup_sector: np.ndarray, cus_sector: np.ndarray, flows: np.ndarray
) -> np.ndarray:
    """Scale tentative annual values so each sector pair sums to its IO flow."""
    n_sec = flows.shape[0]
    pair = sup_sector * n_sec + cus_sector
    pair_total = np.bincount(pair, weights=tentative, minlength=n_sec * n_sec)
    target = flows.reshape(-1)
    ratio = np.zeros(n_sec * n_sec)
    pos = pair_total > 0
    ratio[pos] = target[pos] / pair_total[pos]
    return tentative * ratio[pair]


def estimate_link_values(
    firms: Sequence[Firm],
    edges: Sequence[tuple[str, str]],
    io: IOTable,
    days_per_year: float = DAYS_PER_YEAR,
    report: IngestReport | None = None,
) -> list[SupplyLink]:
    """Estimate daily transaction values of supplier->customer edges.

    Step one splits supplier sales in proportion to customer sales; step two
    rescales every sector pair to the IO flow. Links that end up at zero
    (zero IO flow or zero tentative total) are dropped.
    """
    index = {f.id: k for k, f in enumerate(firms)}
    sector = _firm_sector_index(firms, io)
    sales = np.array([f.annual_sales for f in firms], dtype=float)
    order = sorted(range(len(edges)), key=lambda k: (index[edges[k][0]], index[edges[k][1]]))
    sup = np.array([index[edges[k][0]] for k in order], dtype=np.int64)
    cus = np.array([index[edges[k][1]] for k in order], dtype=np.int64)
    if len(sup) == 0:
        return []
    annual = rescale_to_io(tentative_link_values(sales, sup, cus), sector[sup], sector[cus], io.flows)
    daily = annual / days_per_year
    keep = daily > 0
    if report is not None:
        report.links_dropped_zero_value += int((~keep).sum())
    return [
        SupplyLink(firms[s].id, firms[c].id, float(v))
        for s, c, v in zip(sup[keep], cus[keep], daily[keep])
    ]


def allocate_final_consumption(
    firms: Sequence[Firm], io: IOTable, days_per_year: float = DAYS_PER_YEAR
) -> list[FinalDemand]:
    """Share each sector's final demand among its firms with sales as weights."""
    sector = _firm_sector_index(firms, io)
    sales = np.array([f.annual_sales for f in firms], dtype=float)
    sec_sales = np.bincount(sector, weights=sales, minlength=len(io.sectors))
    bad = (io.final_demand > 0) & (sec_sales <= 0)
    if np.any(bad):
        names = [io.sectors[k] for k in np.flatnonzero(bad)]
        raise BuildError(f"cannot allocate final demand: sector(s) {names} have no sales")
    share = np.zeros(len(firms))
    pos = sec_sales[sector] > 0
    share[pos] = sales[pos] / sec_sales[sector[pos]]
    annual = io.final_demand[sector] * share
    return [FinalDemand(f.id, float(v / days_per_year)) for f, v in zip(firms, annual)]


# ---------------------------------------------------------------------------
# Network container
# ---------------------------------------------------------------------------


@dataclass
class ValuedNetwork:
    """Column-oriented firm network with daily link values and final demand.

    ``supplier[e] -> customer[e]`` carries ``value[e]`` per day; ``final[i]``
    is firm ``i``'s daily sale to final consumers.
    """

    firm_ids: list[str]
    sectors: list[str]
    firm_sector: np.ndarray
    firm_region: list[str]
    sales: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    supplier: np.ndarray
    customer: np.ndarray
    value: np.ndarray
    final: np.ndarray
    va_ratio: np.ndarray
    essential: np.ndarray
    p_ini: np.ndarray = field(init=False)
    inert: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.firm_ids)
        self.firm_sector = np.asarray(self.firm_sector, dtype=np.int64)
        self.sales = np.asarray(self.sales, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.lat = np.asarray(self.lat, dtype=float)
        self.supplier = np.asarray(self.supplier, dtype=np.int64)
        self.customer = np.asarray(self.customer, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)
        self.final = np.asarray(self.final, dtype=float)
        self.va_ratio = np.asarray(self.va_ratio, dtype=float)
        self.essential = np.asarray(self.essential, dtype=bool)
        for name in ("firm_sector", "sales", "lon", "lat", "final"):
            if len(getattr(self, name)) != n:
                raise BuildError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if len(self.firm_region) != n:
            raise BuildError("firm_region length mismatch")
        m = len(self.supplier)
        if len(self.customer) != m or len(self.value) != m:
            raise BuildError("link arrays differ in length")
        if m and (self.supplier.min() < 0 or self.customer.min() < 0
                  or self.supplier.max() >= n or self.customer.max() >= n):
            raise BuildError("link endpoint out of range")
        if np.any(self.supplier == self.customer):
            raise BuildError("self-loop link")
        if np.any(self.value <= 0) or np.any(self.final < 0):
            raise BuildError("link values must be > 0 and final demand >= 0")
        if m and len(np.unique(self.supplier * n + self.customer)) != m:
            raise BuildError("duplicate supplier-customer pair")
        n_sec = len(self.sectors)
        if n and (self.firm_sector.min() < 0 or self.firm_sector.max() >= n_sec):
            raise BuildError("firm sector index out of range")
        if len(self.va_ratio) != n_sec or len(self.essential) != n_sec:
            raise BuildError("sector attribute arrays do not match sectors")
        self.p_ini = np.bincount(self.supplier, weights=self.value, minlength=n) + self.final
        self.inert = self.p_ini <= 0
        self._index: dict[str, int] | None = None

    @property
    def n_firms(self) -> int:
        return len(self.firm_ids)

    @property
    def n_links(self) -> int:
        return len(self.supplier)

    def index_of(self, firm_id: str) -> int:
        if self._index is None:
            self._index = {f: k for k, f in enumerate(self.firm_ids)}
        return self._index[firm_id]

    def firms(self) -> list[Firm]:
        return [
            Firm(fid, self.sectors[s], r, float(sal),
                 None if math.isnan(x) else float(x), None if math.isnan(y) else float(y))
            for fid, s, r, sal, x, y in zip(
                self.firm_ids, self.firm_sector, self.firm_region, self.sales, self.lon, self.lat)
        ]

    def links(self) -> list[SupplyLink]:
        ids = self.firm_ids
        return [SupplyLink(ids[s], ids[c], float(v))
                for s, c, v in zip(self.supplier, self.customer, self.value)]

    def final_demand(self) -> list[FinalDemand]:
        return [FinalDemand(fid, float(v)) for fid, v in zip(self.firm_ids, self.final)]

    def firm_va_ratio(self) -> np.ndarray:
        return self.va_ratio[self.firm_sector]

    def firm_essential(self) -> np.ndarray:
        return self.essential[self.firm_sector]


def build_network(
    firms: Sequence[Firm],
    links: Sequence[SupplyLink],
    final: Sequence[FinalDemand],
    io: IOTable | None = None,
) -> ValuedNetwork:
    """Cross-reference firms, valued links and final demand into a :class:`ValuedNetwork`.

    Sector metadata (value-added ratios, essential flags) comes from ``io``
    when given; otherwise every sector seen on a firm gets ratio 1 and is
    flagged essential only if its code is in :data:`ESSENTIAL_SECTOR_CODES`.
    """
    ids = [f.id for f in firms]
    index = {fid: k for k, fid in enumerate(ids)}
    if len(index) != len(ids):
        raise BuildError("duplicate firm id")
    if io is not None:
        sectors = list(io.sectors)
        va, ess = io.va_ratio, io.essential
    else:
        sectors = sorted({f.sector for f in firms})
        va = np.ones(len(sectors))
        ess = np.array([s in ESSENTIAL_SECTOR_CODES for s in sectors], dtype=bool)
    sec_index = {s: k for k, s in enumerate(sectors)}
    try:
        firm_sector = [sec_index[f.sector] for f in firms]
    except KeyError as exc:
        raise BuildError(f"unknown sector {exc.args[0]!r}") from None
    fd = np.zeros(len(firms))
    seen_final: set[str] = set()
    for d in final:
        if d.firm not in index:
            raise BuildError(f"final demand for unknown firm {d.firm!r}")
        if d.firm in seen_final:
            raise BuildError(f"duplicate final demand for firm {d.firm!r}")
        seen_final.add(d.firm)
        fd[index[d.firm]] = d.daily_value
    try:
        sup = [index[l.supplier] for l in links]
        cus = [index[l.customer] for l in links]
    except KeyError as exc:
        raise BuildError(f"link refers to unknown firm {exc.args[0]!r}") from None
    nan = float("nan")
    return ValuedNetwork(
        firm_ids=ids,
        sectors=sectors,
        firm_sector=np.array(firm_sector, dtype=np.int64),
        firm_region=[f.region for f in firms],
        sales=np.array([f.annual_sales for f in firms], dtype=float),
        lon=np.array([nan if f.lon is None else f.lon for f in firms], dtype=float),
        lat=np.array([nan if f.lat is None else f.lat for f in firms], dtype=float),
        supplier=np.array(sup, dtype=np.int64),
        customer=np.array(cus, dtype=np.int64),
        value=np.array([l.daily_value for l in links], dtype=float),
        final=fd,
        va_ratio=va,
        essential=ess,
    )


def build_from_files(
    firms_path: str | Path,
    links_path: str | Path,
    io_path: str | Path,
    essential: Iterable[str] | None = None,
    days_per_year: float = DAYS_PER_YEAR,
) -> tuple[ValuedNetwork, IngestReport]:
    """Full ingest pipeline: load, drop salesless firms, estimate values, build."""
    report = IngestReport()
    io = load_io_table(io_path, essential)
    firms = load_firm_table(firms_path, report)
    edges = load_link_table(links_path, firms, report)
    links = estimate_link_values(firms, edges, io, days_per_year, report)
    final = allocate_final_consumption(firms, io, days_per_year)
    return build_network(firms, links, final, io), report


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _float_list(a: np.ndarray) -> list[float | None]:
    return [None if math.isnan(x) else x for x in a.tolist()]


def network_to_dict(net: ValuedNetwork) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "sectors": list(net.sectors),
        "va_ratio": net.va_ratio.tolist(),
        "essential": net.essential.tolist(),
        "firms": {
            "id": list(net.firm_ids),
            "sector": net.firm_sector.tolist(),
            "region": list(net.firm_region),
            "annual_sales": net.sales.tolist(),
            "lon": _float_list(net.lon),
            "lat": _float_list(net.lat),
            "final": net.final.tolist(),
        },
        "links": {
            "supplier": net.supplier.tolist(),
            "customer": net.customer.tolist(),
            "value": net.value.tolist(),
        },
    }


def network_from_dict(doc: dict) -> ValuedNetwork:
    if doc.get("format") != NETWORK_FORMAT:
        raise LoadError(f"unsupported network format {doc.get('format')!r}")
    f, l = doc["firms"], doc["links"]
    nan = float("nan")
    return ValuedNetwork(
        firm_ids=list(f["id"]),
        sectors=list(doc["sectors"]),
        firm_sector=np.array(f["sector"], dtype=np.int64),
        firm_region=list(f["region"]),
        sales=np.array(f["annual_sales"], dtype=float),
        lon=np.array([nan if x is None else x for x in f["lon"]], dtype=float),
        lat=np.array([nan if x is None else x for x in f["lat"]], dtype=float),
        supplier=np.array(l["supplier"], dtype=np.int64),
        customer=np.array(l["customer"], dtype=np.int64),
        value=np.array(l["value"], dtype=float),
        final=np.array(f["final"], dtype=float),
        va_ratio=np.array(doc["va_ratio"], dtype=float),
        essential=np.array(doc["essential"], dtype=bool),
    )


def save_network(net: ValuedNetwork, path: str | Path) -> None:
    """Write the network as JSON; a ``.gz`` suffix gzips with a zeroed timestamp."""
    path = Path(path)
    data = json.dumps(network_to_dict(net), separators=(",", ":")).encode()
    if path.suffix == ".gz":
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(data)
    else:
        path.write_bytes(data)


def load_network(path: str | Path) -> ValuedNetwork:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror})") from exc
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}: not a network file ({exc})") from exc
    return network_from_dict(doc)
