"""Experiment harness: flow-distribution validation and the carpool sweep.

Validation runs the baseline scenario (ridesharing off) for several seeded
replications, compares simulated link-entry proportions against the observed
distribution and applies a goodness-of-fit test. The sweep reruns the
ridesharing scenario across carpool-lane background levels with common
random numbers per replication index, reporting mean and spread of the
match rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .config import ScenarioConfig
from .network import Network, flow_distribution
from .reports import write_csv_atomic, write_json_atomic
from .simulation import SimReport, SimState, init_simulation


class ExperimentError(ValueError):
    pass


def replication_seeds(base_seed: int, count: int) -> list[int]:
    """Stable per-replication seeds derived from one base seed."""
    seq = np.random.SeedSequence(base_seed)
    return [int(child.generate_state(1)[0]) for child in seq.spawn(count)]


def chi_squared_gof(
    observed: dict[int, float],
    expected_proportions: dict[int, float],
    alpha: float = 0.05,
) -> tuple[float, float, bool]:
    """Pearson goodness-of-fit: (statistic, critical value, reject).

    Expected counts are ``proportion * sum(observed)``; degrees of freedom
    are categories minus one; reject iff the statistic exceeds the
    chi-squared quantile at 1 - alpha.
    """
    total = sum(observed.values())
    if total <= 0:
        raise ExperimentError("chi-squared test needs a positive total count")
    prop_sum = sum(expected_proportions.values())
    if abs(prop_sum - 1.0) > 1e-9:
        raise ExperimentError("expected proportions must sum to 1")
    statistic = 0.0
    for key in sorted(expected_proportions):
        expected = expected_proportions[key] * total
        if expected <= 0:
            raise ExperimentError(f"expected count for category {key} is zero")
        diff = observed.get(key, 0.0) - expected
        statistic += diff * diff / expected
    df = len(expected_proportions) - 1
    critical = float(stats.chi2.ppf(1.0 - alpha, df))
    return statistic, critical, statistic > critical


@dataclass(frozen=True)
class ValidationReport:
    link_ids: tuple[int, ...]
    real_proportions: dict[int, float]
    simulated_proportions: dict[int, float]
    mean_absolute_error: float
    chi_squared: float
    degrees_of_freedom: int
    critical_value: float
    alpha: float
    reject: bool
    replications: int
    seeds: tuple[int, ...]
    fingerprint: str

    def rows(self) -> list[tuple]:
        rows = []
        for link_id in self.link_ids:
            real = self.real_proportions[link_id]
            sim = self.simulated_proportions[link_id]
            rows.append((link_id, real, sim, abs(real - sim)))
        return rows

    def write_csv(self, path: Path) -> None:
        write_csv_atomic(
            path,
            ("link_id", "real_proportion", "simulated_proportion", "absolute_error"),
            self.rows(),
        )

    def write_meta(self, path: Path) -> None:
        write_json_atomic(path, {
            "mean_absolute_error": self.mean_absolute_error,
            "chi_squared": self.chi_squared,
            "degrees_of_freedom": self.degrees_of_freedom,
            "critical_value": self.critical_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "replications": self.replications,
            "seeds": list(self.seeds),
            "config_fingerprint": self.fingerprint,
        })


def run_validation(
    config: ScenarioConfig,
    replications: int | None = None,
    seed: int | None = None,
    alpha: float = 0.05,
) -> ValidationReport:
    """Reproduce the baseline traffic validation against observed flows.

    Ridesharing is disabled (all agents regular drivers) so the test
    isolates the traffic model. Raises when the scenario network lacks
    observed flows or a run produces no vehicles.
    """
    network = config.make_network()
    if any(l.observed_daily_flow <= 0 for l in network.links):
        raise ExperimentError("every link needs a positive observed_daily_flow")
    base = config.with_shares(0.0, 0.0, 1.0)
    replications = replications if replications is not None else config.replications
    seeds = replication_seeds(seed if seed is not None else config.seed,
                              replications)

    real = flow_distribution(
        {l.id: l.observed_daily_flow for l in network.links}
    )
    totals = {l.id: 0.0 for l in network.links}
    for rep_seed in seeds:
        sim = init_simulation(base, network, rep_seed)
        report = sim.run()
        for link_id, count in report.validation_counts.items():
            totals[link_id] += count
    grand_total = sum(totals.values())
    if grand_total <= 0:
        raise ExperimentError("validation runs produced zero vehicles")
    simulated = flow_distribution(totals)
    errors = [abs(real[l] - simulated[l]) for l in sorted(real)]
    # test the replication-averaged counts: one representative run's volume
    mean_counts = {l: c / replications for l, c in totals.items()}
    statistic, critical, reject = chi_squared_gof(mean_counts, real, alpha)
    return ValidationReport(
        link_ids=tuple(sorted(real)),
        real_proportions=real,
        simulated_proportions=simulated,
        mean_absolute_error=sum(errors) / len(errors),
        chi_squared=statistic,
        degrees_of_freedom=len(real) - 1,
        critical_value=critical,
        alpha=alpha,
        reject=reject,
        replications=replications,
        seeds=tuple(seeds),
        fingerprint=base.fingerprint(),
    )


@dataclass(frozen=True)
class SweepRow:
    unused_fraction: float
    replications: int
    mean_match_rate: float
    std_match_rate: float
    riders: int
    warning: str = ""


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    seeds: tuple[int, ...]
    fingerprint: str
    shares: tuple[float, float, float]

    def write_csv(self, path: Path) -> None:
        write_csv_atomic(
            path,
            ("unused_capacity", "replications", "mean_match_rate",
             "std_match_rate", "riders", "warning"),
            [(r.unused_fraction, r.replications, r.mean_match_rate,
              r.std_match_rate, r.riders, r.warning) for r in self.rows],
        )

    def write_meta(self, path: Path) -> None:
        write_json_atomic(path, {
            "seeds": list(self.seeds),
            "config_fingerprint": self.fingerprint,
            "shares": list(self.shares),
            "rows": [
                {
                    "unused_capacity": r.unused_fraction,
                    "mean_match_rate": r.mean_match_rate,
                    "std_match_rate": r.std_match_rate,
                }
                for r in self.rows
            ],
        })


SWEEP_SHARES = (0.10, 0.40, 0.50)


def run_capacity_sweep(
    config: ScenarioConfig,
    levels: tuple[float, ...] | None = None,
    replications: int | None = None,
    seed: int | None = None,
) -> SweepReport:
    """Match-rate response to carpool-lane background load.

    Participation shares are fixed at (rider, rideshare, regular) =
    (0.10, 0.40, 0.50); each replication index reuses the same seed across
    levels so level differences are paired. Rows keep the given level order.
    """
    levels = tuple(levels if levels is not None else config.levels)
    for level in levels:
        if not 0.0 <= level <= 1.0:
            raise ExperimentError(f"unused-capacity level {level} outside [0, 1]")
    network = config.make_network()
    if not network.carpool_links():
        raise ExperimentError("capacity sweep needs a carpool-lane link")
    base = config.with_shares(*SWEEP_SHARES)
    replications = replications if replications is not None else config.replications
    seeds = replication_seeds(seed if seed is not None else config.seed,
                              replications)

    rows = []
    for level in levels:
        scenario = base.with_updates(unused_capacity=level)
        rates = []
        riders = 0
        for rep_seed in seeds:
            sim = init_simulation(scenario, network, rep_seed)
            report = sim.run()
            riders += report.riders_total
            rates.append(report.match_rate if report.riders_total else 0.0)
        mean = float(np.mean(rates)) if rates else 0.0
        std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
        warning = "" if riders else "no riders generated"
        rows.append(SweepRow(level, replications, mean, std, riders, warning))
    return SweepReport(
        rows=tuple(rows),
        seeds=tuple(seeds),
        fingerprint=base.fingerprint(),
        shares=SWEEP_SHARES,
    )


def run_single(config: ScenarioConfig, seed: int | None = None) -> tuple[SimState, SimReport]:
    """One scenario run with the configured demand and background level."""
    network = config.make_network()
    sim = init_simulation(config, network, seed if seed is not None else config.seed)
    return sim, sim.run()


def write_sim_report(report: SimReport, outdir: Path, fingerprint: str,
                     seed: int) -> None:
    write_csv_atomic(
        outdir / "link_flows.csv",
        ("link_id", "lane_class", "count"),
        [(lid, cls.value, count)
         for (lid, cls), count in sorted(report.link_class_counts.items(),
                                         key=lambda kv: (kv[0][0], kv[0][1].value))],
    )
    write_csv_atomic(
        outdir / "agents.csv",
        ("id", "role", "matched", "departure", "arrival"),
        [(o.agent_id, o.role.value,
          "" if o.matched is None else ("true" if o.matched else "false"),
          o.departure, o.arrival)
         for o in report.outcomes],
    )
    write_csv_atomic(
        outdir / "summary.csv",
        ("metric", "value"),
        [("match_rate", report.match_rate),
         ("mean_travel_time", report.mean_travel_time())],
    )
    if report.match_trace:
        write_csv_atomic(
            outdir / "match_trace.csv",
            ("rider_id", "request_time", "offers", "vertices", "travel_arcs",
             "pruned_vertices", "feasible", "dp_cost", "matched"),
            [(t["rider_id"], t["request_time"], t["offers"], t["vertices"],
              t["travel_arcs"], t["pruned_vertices"], t["feasible"],
              t["dp_cost"], t["matched"]) for t in report.match_trace],
        )
    write_json_atomic(outdir / "run_meta.json", {
        "config_fingerprint": fingerprint,
        "seed": seed,
        "riders_total": report.riders_total,
        "riders_matched": report.riders_matched,
        "stranded": report.stranded_count,
    })
