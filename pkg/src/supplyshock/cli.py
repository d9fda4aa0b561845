"""Command-line entry point: ``supplyshock {build-network,gen,analyze,run}``.

Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from supplyshock import analysis, network, scenario as scen
from supplyshock.engine import RationingPolicy

logger = logging.getLogger("supplyshock")

NETWORK_FILE = "network.json"


class ConfigError(Exception):
    pass


def _existing_file(text: str) -> Path:
    path = Path(text)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    return path


def _day_list(text: str) -> list[int]:
    try:
        days = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated days, got {text!r}") from None
    if any(d < 0 for d in days):
        raise argparse.ArgumentTypeError("days must be >= 0")
    return days


def _write_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build_network(args) -> int:
    essential = network.load_essential_codes(args.essential) if args.essential else None
    try:
        net, report = network.build_from_files(args.firms, args.links, args.io, essential, args.days_per_year)
    except (network.LoadError, network.BuildError) as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    network.save_network(net, out / NETWORK_FILE)
    doc = report.as_dict()
    doc.update(n_firms=net.n_firms, n_links=net.n_links, n_inert=int(net.inert.sum()))
    _write_json(doc, out / "ingest_report.json")
    print(f"network: {net.n_firms} firms, {net.n_links} links -> {out / NETWORK_FILE}")
    return 0


def _stats_outputs(net, out: Path, samples: int, seed: int) -> analysis.NetStats:
    stats = analysis.compute_stats(net, n_samples=samples, seed=seed)
    _write_json(stats.to_dict(), out / "stats.json")
    analysis.write_degree_csv(stats.degree_histogram, out / "degree.csv")
    return stats


def cmd_gen(args) -> int:
    params = analysis.SynthParams(
        n_firms=args.firms, n_sectors=args.sectors, attach_m=args.attach_m,
        final_demand_share=args.final_demand_share, reciprocal_prob=args.reciprocal_prob,
        seed=args.seed, n_regions=args.regions,
    )
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    net = analysis.generate_synthetic(params)
    out = _out_dir(args)
    network.save_network(net, out / NETWORK_FILE)
    stats = _stats_outputs(net, out, args.path_samples, args.seed)
    print(f"generated {net.n_firms} firms, {net.n_links} links; gscc_fraction={stats.gscc_fraction:.4f}")
    return 0


def _load_network(path) -> network.ValuedNetwork:
    try:
        return network.load_network(path)
    except (network.LoadError, network.BuildError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_analyze(args) -> int:
    net = _load_network(args.network)
    stats = _stats_outputs(net, _out_dir(args), args.path_samples, args.seed)
    print(json.dumps({k: v for k, v in stats.to_dict().items() if k != "degree_histogram"}, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    net = _load_network(args.network)
    try:
        doc = json.loads(Path(args.scenario).read_text())
        for flag, key in (("policy", "policy"), ("scope", "scope"), ("duration_days", "duration_days")):
            value = getattr(args, flag)
            if value is not None:
                doc[key] = value
        if args.seed is not None:
            reps = doc.pop("replications", None) or len(doc.get("seeds", [])) or 5
            doc["seeds"] = [args.seed + k for k in range(reps)]
        if args.duration_days is not None:
            need = doc.get("start_day", 0) + args.duration_days
            doc["horizon_days"] = max(doc.get("horizon_days", 60), need)
        sc = scen.Scenario.from_dict(doc)
        scen.lockdown_targets(net, sc)
    except (OSError, json.JSONDecodeError, scen.ScenarioError) as exc:
        raise ConfigError(str(exc)) from None
    bad_days = [d for d in args.snapshot_days if d >= sc.horizon_days]
    if bad_days:
        raise ConfigError(f"snapshot day(s) {bad_days} beyond horizon {sc.horizon_days}")

    keep = bool(args.snapshot_days) or args.per_firm
    report = scen.run_replications(net, sc, threads=args.threads, keep_trajectories=keep)
    out = _out_dir(args)
    scen.write_report(report, out / "report.json")
    scen.write_daily_series(report, out / "daily_series.csv")
    if keep:
        first = report.trajectories[0]
        scen.write_aggregates_csv(first, net, out / "aggregates.csv")
        for day in args.snapshot_days:
            snap = scen.geo_snapshot(first, net, day, args.snapshot_sample, sc.seeds[0])
            scen.write_snapshot(snap, out / f"snapshot_day{day}.csv")
        if args.per_firm:
            scen.write_trajectory_csv(first, net, out / "trajectory.csv")
    print(report.summary_line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replications")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="supplyshock", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-network", parents=[common], help="estimate a valued network from CSV inputs")
    p.add_argument("--firms", type=_existing_file, required=True)
    p.add_argument("--links", type=_existing_file, required=True)
    p.add_argument("--io", type=_existing_file, required=True)
    p.add_argument("--essential", type=_existing_file, help="one essential sector code per line")
    p.add_argument("--days-per-year", type=float, default=network.DAYS_PER_YEAR)
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.set_defaults(func=cmd_build_network)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic network")
    defaults = analysis.SynthParams()
    p.add_argument("--firms", type=int, default=defaults.n_firms)
    p.add_argument("--sectors", type=int, default=defaults.n_sectors)
    p.add_argument("--attach-m", type=int, default=defaults.attach_m)
    p.add_argument("--reciprocal-prob", type=float, default=defaults.reciprocal_prob)
    p.add_argument("--final-demand-share", type=float, default=defaults.final_demand_share)
    p.add_argument("--regions", type=int, default=defaults.n_regions)
    p.add_argument("--path-samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("analyze", parents=[common], help="network statistics")
    p.add_argument("--network", type=_existing_file, required=True)
    p.add_argument("--path-samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", parents=[common], help="run a lockdown scenario")
    p.add_argument("--network", type=_existing_file, required=True)
    p.add_argument("--scenario", type=_existing_file, required=True)
    p.add_argument("--snapshot-days", type=_day_list, default=[])
    p.add_argument("--snapshot-sample", type=int, default=100_000)
    p.add_argument("--policy", choices=[x.value for x in RationingPolicy])
    p.add_argument("--scope", choices=[x.value for x in scen.Scope])
    p.add_argument("--duration-days", type=int)
    p.add_argument("--seed", type=int, help="replace scenario seeds with seed, seed+1, ...")
    p.add_argument("--per-firm", action="store_true", help="also write trajectory.csv (large)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"supplyshock: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        logger.debug("failure", exc_info=True)
        print(f"supplyshock: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
