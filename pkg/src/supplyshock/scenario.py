"""Lockdown scenarios, replications and loss reporting."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from supplyshock.engine import DeltaSchedule, ModelParams, RationingPolicy, Trajectory, run
from supplyshock.network import ValuedNetwork

logger = logging.getLogger(__name__)

# a one-month lockdown costing 27.8 trillion yen was reported as 5.25% of annual GDP
DEFAULT_ANNUAL_GDP = 27.8e12 / 0.0525

BAND_EDGES = (0.2, 0.5, 0.8)
BAND_LABELS = ("le_0.2", "le_0.5", "le_0.8", "gt_0.8")


class Scope(str, enum.Enum):
    NON_ESSENTIAL = "non_essential"
    ALL = "all"


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    region: list[str]
    scope: Scope = Scope.NON_ESSENTIAL
    start_day: int = 0
    duration_days: int = 30
    policy: RationingPolicy = RationingPolicy.PROPORTIONAL
    params: ModelParams = field(default_factory=ModelParams)
    horizon_days: int = 60
    annual_gdp: float = DEFAULT_ANNUAL_GDP
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])

    def __post_init__(self) -> None:
        try:
            self.scope = Scope(self.scope)
            self.policy = RationingPolicy(self.policy)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        self.region = [str(r) for r in self.region]
        self.seeds = [int(s) for s in self.seeds]
        if self.duration_days < 1:
            raise ScenarioError("duration_days must be >= 1")
        if self.start_day < 0:
            raise ScenarioError("start_day must be >= 0")
        if self.horizon_days < self.start_day + self.duration_days:
            raise ScenarioError("horizon_days must cover the lockdown (start_day + duration_days)")
        if not self.seeds:
            raise ScenarioError("at least one seed is required")
        if self.annual_gdp <= 0:
            raise ScenarioError("annual_gdp must be positive")

    @property
    def replications(self) -> int:
        return len(self.seeds)

    def to_dict(self) -> dict:
        return {
            "region": list(self.region),
            "scope": self.scope.value,
            "start_day": self.start_day,
            "duration_days": self.duration_days,
            "policy": self.policy.value,
            "replications": self.replications,
            "params": self.params.to_dict(),
            "horizon_days": self.horizon_days,
            "annual_gdp": self.annual_gdp,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        """Build from the scenario JSON layout.

        ``seeds`` defaults to ``1..replications`` (``replications`` defaults
        to 5); giving both with different lengths is an error.
        """
        doc = dict(doc)
        known = {"region", "scope", "start_day", "duration_days", "policy", "replications",
                 "params", "horizon_days", "annual_gdp", "seeds"}
        unknown = set(doc) - known
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {sorted(unknown)}")
        if "region" not in doc:
            raise ScenarioError("scenario needs a region list")
        reps = doc.pop("replications", None)
        if "seeds" not in doc:
            doc["seeds"] = list(range(1, (5 if reps is None else int(reps)) + 1))
        elif reps is not None and int(reps) != len(doc["seeds"]):
            raise ScenarioError("replications does not match the number of seeds")
        try:
            doc["params"] = ModelParams(**doc.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad params: {exc}") from None
        return cls(**doc)


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return Scenario.from_dict(doc)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def lockdown_targets(net: ValuedNetwork, scenario: Scenario) -> np.ndarray:
    """Boolean mask of firms shut down by the scenario."""
    present = set(net.firm_region)
    missing = [r for r in scenario.region if r not in present]
    if missing:
        raise ScenarioError(f"region code(s) not in network: {missing}")
    wanted = set(scenario.region)
    in_region = np.array([r in wanted for r in net.firm_region], dtype=bool)
    if scenario.scope is Scope.NON_ESSENTIAL:
        in_region &= ~net.firm_essential()
    return in_region


def build_lockdown_schedule(net: ValuedNetwork, scenario: Scenario) -> DeltaSchedule:
    """Full shutdown of targeted firms on ``[start_day, start_day + duration_days)``."""
    targets = lockdown_targets(net, scenario)
    schedule = DeltaSchedule()
    end = scenario.start_day + scenario.duration_days
    for i in np.flatnonzero(targets):
        schedule.add(int(i), scenario.start_day, end, 1.0)
    if not targets.any():
        logger.warning("lockdown targets no firm; running an unshocked baseline")
    return schedule


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def compute_losses(trajectory: Trajectory, net: ValuedNetwork, scenario: Scenario) -> tuple[float, float]:
    """Value-added loss of locked-down firms (direct) and of all others (indirect)."""
    targets = lockdown_targets(net, scenario)
    if trajectory.lost_va is not None:
        lost = trajectory.lost_va
    else:
        lost = ((trajectory.p_ini - trajectory.p_act) * net.firm_va_ratio()).sum(axis=0)
    return math.fsum(lost[targets]), math.fsum(lost[~targets])


def daily_series(trajectory: Trajectory, net: ValuedNetwork) -> np.ndarray:
    """Total value added per simulated day."""
    if trajectory.va_production is not None:
        return trajectory.va_production.copy()
    return trajectory.p_act @ net.firm_va_ratio()


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if len(a) < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1))


@dataclass
class ReplicationLoss:
    seed: int
    direct_loss: float
    indirect_loss: float
    total_loss: float
    total_pct_gdp: float
    inventory_clipped: float


@dataclass
class LossReport:
    """Scenario losses averaged over replications (currency units of the network)."""

    direct_loss: float
    indirect_loss: float
    total_loss: float
    total_pct_gdp: float
    direct_std: float
    indirect_std: float
    total_std: float
    replications: list[ReplicationLoss]
    daily_mean: list[float]
    daily_std: list[float]
    baseline_daily: float
    units: str
    scenario: dict
    n_targets: int
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "scenario": self.scenario,
            "n_locked_firms": self.n_targets,
            "direct_loss": self.direct_loss,
            "indirect_loss": self.indirect_loss,
            "total_loss": self.total_loss,
            "total_pct_gdp": self.total_pct_gdp,
            "direct_std": self.direct_std,
            "indirect_std": self.indirect_std,
            "total_std": self.total_std,
            "baseline_daily": self.baseline_daily,
            "replications": [r.__dict__ for r in self.replications],
            "daily_series": {"mean": self.daily_mean, "std": self.daily_std},
        }

    def summary_line(self) -> str:
        return (f"direct={self.direct_loss:.6g} indirect={self.indirect_loss:.6g} "
                f"total={self.total_loss:.6g} ({self.total_pct_gdp:.3g}% of GDP)")


def run_replications(
    net: ValuedNetwork,
    scenario: Scenario,
    threads: int = 1,
    keep_trajectories: bool = False,
) -> LossReport:
    """One engine run per seed; the reduction is ordered by seed position.

    ``threads`` only changes wall time. With ``keep_trajectories`` the
    per-firm production paths are kept on the report (not serialized).
    """
    schedule = build_lockdown_schedule(net, scenario)
    targets = lockdown_targets(net, scenario)
    va = net.firm_va_ratio()

    def one(seed: int) -> Trajectory:
        return run(net, scenario.params, schedule, scenario.horizon_days, seed,
                   scenario.policy, record_firms=keep_trajectories, va_ratio=va)

    if threads > 1 and len(scenario.seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(one, scenario.seeds))
    else:
        trajectories = [one(s) for s in scenario.seeds]

    reps = []
    series = []
    for seed, tr in zip(scenario.seeds, trajectories):
        direct, indirect = compute_losses(tr, net, scenario)
        total = direct + indirect
        reps.append(ReplicationLoss(seed, direct, indirect, total,
                                    100.0 * total / scenario.annual_gdp, float(tr.clipped[-1])))
        series.append(daily_series(tr, net))
    d_mean, d_std = _mean_std([r.direct_loss for r in reps])
    i_mean, i_std = _mean_std([r.indirect_loss for r in reps])
    _, t_std = _mean_std([r.total_loss for r in reps])
    total = d_mean + i_mean
    stack = np.array(series)
    s_mean = stack.mean(axis=0)
    s_std = stack.std(axis=0, ddof=1) if len(series) > 1 else np.zeros(stack.shape[1])
    units = "value added" if not np.all(net.va_ratio == 1.0) else "gross output (no VA ratios given)"
    return LossReport(
        direct_loss=d_mean,
        indirect_loss=i_mean,
        total_loss=total,
        total_pct_gdp=100.0 * total / scenario.annual_gdp,
        direct_std=d_std,
        indirect_std=i_std,
        total_std=t_std,
        replications=reps,
        daily_mean=s_mean.tolist(),
        daily_std=s_std.tolist(),
        baseline_daily=math.fsum(net.p_ini * va),
        units=units,
        scenario=scenario.to_dict(),
        n_targets=int(targets.sum()),
        trajectories=trajectories if keep_trajectories else [],
    )


# ---------------------------------------------------------------------------
# Geographic snapshots
# ---------------------------------------------------------------------------


def capacity_band(ratio: float) -> str:
    for edge, label in zip(BAND_EDGES, BAND_LABELS):
        if ratio <= edge:
            return label
    return BAND_LABELS[-1]


@dataclass
class SnapshotRecord:
    firm_id: str
    lon: float
    lat: float
    capacity_ratio: float
    band: str


@dataclass
class GeoSnapshot:
    day: int
    records: list[SnapshotRecord]
    sample_size: int | None
    skipped_no_coords: int
    skipped_inert: int


def geo_snapshot(
    trajectory: Trajectory, net: ValuedNetwork, day: int, sample_size: int | None = None, seed: int = 0
) -> GeoSnapshot:
    """Production relative to pre-shock level for (a uniform sample of) firms on ``day``."""
    if trajectory.p_act is None:
        raise ValueError("trajectory was run without per-firm records")
    if not 0 <= day < trajectory.horizon:
        raise ValueError(f"day {day} outside horizon 0..{trajectory.horizon - 1}")
    n = net.n_firms
    if sample_size is None or sample_size >= n:
        chosen = np.arange(n)
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        chosen = np.sort(rng.choice(n, size=sample_size, replace=False))
    records = []
    no_coords = inert = 0
    p_act = trajectory.p_act[day]
    for i in chosen:
        if net.p_ini[i] <= 0:
            inert += 1
            continue
        if math.isnan(net.lon[i]) or math.isnan(net.lat[i]):
            no_coords += 1
            continue
        ratio = min(max(float(p_act[i] / net.p_ini[i]), 0.0), 1.0)
        records.append(SnapshotRecord(net.firm_ids[i], float(net.lon[i]), float(net.lat[i]),
                                      ratio, capacity_band(ratio)))
    return GeoSnapshot(day, records, sample_size, no_coords, inert)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def write_report(report: LossReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def write_daily_series(report: LossReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "mean_va", "stddev_va"])
        for t, (m, s) in enumerate(zip(report.daily_mean, report.daily_std)):
            w.writerow([t, repr(m), repr(s)])


def write_snapshot(snapshot: GeoSnapshot, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["firm_id", "lon", "lat", "capacity_ratio", "band"])
        for r in snapshot.records:
            w.writerow([r.firm_id, repr(r.lon), repr(r.lat), repr(r.capacity_ratio), r.band])


def write_trajectory_csv(trajectory: Trajectory, net: ValuedNetwork, path: str | Path) -> None:
    """Per-firm production path ``day,firm_id,p_act`` (large)."""
    if trajectory.p_act is None:
        raise ValueError("trajectory was run without per-firm records")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "firm_id", "p_act"])
        for t, row in enumerate(trajectory.p_act):
            for fid, p in zip(net.firm_ids, row.tolist()):
                w.writerow([t, fid, repr(p)])


def write_aggregates_csv(trajectory: Trajectory, net: ValuedNetwork, path: str | Path) -> None:
    """Daily ``day,total_production,total_value_added`` for one run."""
    va = daily_series(trajectory, net)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "total_production", "total_value_added"])
        for t, (p, v) in enumerate(zip(trajectory.total_production.tolist(), va.tolist())):
            w.writerow([t, repr(p), repr(v)])
