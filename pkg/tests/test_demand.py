import math

import numpy as np
import pytest

from ridesim.agents import Role, TimeWindow, VehicleAgent
from ridesim.demand import (
    DemandError,
    DemandSpec,
    Shares,
    calibrate_od_rates,
    default_od_pairs,
    fallback_to_driver,
    generate_agents,
)
from ridesim.demand import testbed_od_pairs as forward_reachable_pairs

SWEEP_SHARES = Shares(0.10, 0.40, 0.50)
ALL_REGULAR = Shares(0.0, 0.0, 1.0)


class TestShares:
    def test_must_sum_to_one(self):
        with pytest.raises(DemandError):
            Shares(0.2, 0.4, 0.5)

    def test_bounds(self):
        with pytest.raises(DemandError):
            Shares(-0.1, 0.6, 0.5)


class TestCalibration:
    def test_testbed_system(self, testbed):
        targets = {l.id: l.observed_daily_flow for l in testbed.links}
        rates = calibrate_od_rates(testbed, targets,
                                   fixed_daily={(0, 2): 26660.0})
        assert rates[(0, 3)] == pytest.approx(12948 / 24)
        assert rates[(1, 3)] == pytest.approx(58343 / 24)
        assert rates[(0, 2)] == pytest.approx(26660 / 24)
        assert rates[(0, 1)] == pytest.approx((53319 - 26660) / 24)
        assert rates[(1, 2)] == pytest.approx((106058 - 26660) / 24)

    def test_free_flow_assignment_reproduces_targets(self, testbed):
        targets = {l.id: l.observed_daily_flow for l in testbed.links}
        rates = calibrate_od_rates(testbed, targets,
                                   fixed_daily={(0, 2): 26660.0})
        # all-or-nothing free-flow loads: 0->3 takes the direct link
        loads = {0: rates[(0, 3)],
                 1: rates[(0, 1)] + rates[(0, 2)],
                 2: rates[(0, 2)] + rates[(1, 2)],
                 3: rates[(1, 3)]}
        for link_id, daily in targets.items():
            assert loads[link_id] * 24 == pytest.approx(daily, rel=1e-9)

    def test_default_pairs_are_forward_reachable(self, testbed):
        assert default_od_pairs(testbed) == forward_reachable_pairs()

    def test_all_zero_targets(self, testbed):
        rates = calibrate_od_rates(testbed, {l.id: 0.0 for l in testbed.links})
        assert all(r == 0.0 for r in rates.values())

    def test_unusable_target_rejected(self, testbed):
        # nothing routes over link 0 once 0->3 demand is excluded
        targets = {0: 1000.0, 1: 0.0, 2: 0.0, 3: 0.0}
        with pytest.raises(DemandError, match="residual|negative"):
            calibrate_od_rates(testbed, targets,
                               od_pairs=[(0, 1), (1, 2)])

    def test_missing_target_rejected(self, testbed):
        with pytest.raises(DemandError, match="missing"):
            calibrate_od_rates(testbed, {0: 1.0})


class TestGenerateAgents:
    def spec(self, shares=SWEEP_SHARES, scale=1.0, horizon=4.0, flex=0.25):
        rates = {(0, 2): 200.0, (0, 3): 100.0, (1, 3): 150.0}
        return DemandSpec(od_rates=rates, shares=shares,
                          window_flexibility=flex, horizon=horizon, scale=scale)

    def test_zero_rates_empty(self, testbed):
        spec = DemandSpec(od_rates={(0, 2): 0.0}, shares=ALL_REGULAR)
        assert len(generate_agents(spec, testbed, 1)) == 0

    def test_deterministic(self, testbed):
        spec = self.spec()
        a = generate_agents(spec, testbed, 77)
        b = generate_agents(spec, testbed, 77)
        assert [x.request_time for x in a.agents] == [x.request_time for x in b.agents]
        assert [x.role for x in a.agents] == [x.role for x in b.agents]

    def test_seed_sensitivity(self, testbed):
        spec = self.spec()
        a = generate_agents(spec, testbed, 1)
        b = generate_agents(spec, testbed, 2)
        assert [x.request_time for x in a.agents] != [x.request_time for x in b.agents]

    def test_role_counts_within_3_sigma(self, testbed):
        spec = self.spec(horizon=8.0, scale=3.0)  # ~10k agents
        schedule = generate_agents(spec, testbed, 123)
        n = len(schedule)
        assert n > 5000
        counts = {role: 0 for role in Role}
        for agent in schedule.agents:
            counts[agent.role] += 1
        for role, share in ((Role.RIDER, 0.10),
                            (Role.RIDESHARE_DRIVER, 0.40),
                            (Role.REGULAR_DRIVER, 0.50)):
            sigma = math.sqrt(n * share * (1 - share))
            assert abs(counts[role] - n * share) <= 3 * sigma

    def test_windows_admit_free_flow_trip(self, testbed):
        spec = self.spec(horizon=2.0)
        for agent in generate_agents(spec, testbed, 5).agents:
            w = agent.window
            assert w.earliest_departure == agent.request_time
            assert w.latest_departure >= w.earliest_departure
            assert w.earliest_arrival <= w.latest_arrival
            # slack equals the configured flexibility
            assert (w.latest_arrival - w.earliest_arrival) == pytest.approx(0.25)

    def test_arrivals_sorted_and_capped(self, testbed):
        spec = self.spec(horizon=3.0)
        schedule = generate_agents(spec, testbed, 11)
        times = schedule.arrival_times()
        assert times == sorted(times)
        assert all(0.0 <= t <= 3.0 for t in times)

    def test_poisson_counts(self, testbed):
        spec = DemandSpec(od_rates={(0, 2): 60.0}, shares=ALL_REGULAR,
                          horizon=1.0, scale=1.0)
        counts = [len(generate_agents(spec, testbed, s)) for s in range(200)]
        mean = np.mean(counts)
        assert 60 - 3 * math.sqrt(60 / 200) * 3 <= mean <= 60 + math.sqrt(60 / 200) * 9

    def test_disconnected_od_rejected(self, testbed):
        spec = DemandSpec(od_rates={(2, 0): 10.0}, shares=ALL_REGULAR)
        with pytest.raises(DemandError, match="not connected"):
            generate_agents(spec, testbed, 3)

    def test_schedule_export(self, testbed, tmp_path):
        spec = self.spec(horizon=1.0)
        schedule = generate_agents(spec, testbed, 5)
        out = tmp_path / "schedule.csv"
        schedule.write_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0].startswith("id,role,origin,destination,request_time")
        assert len(lines) == len(schedule) + 1


class TestFallback:
    def make_rider(self, matched=False):
        window = TimeWindow(1.0, 1.25, 1.5, 1.75)
        rider = VehicleAgent(id=7, role=Role.RIDER, origin=0, destination=2,
                             request_time=1.0, window=window)
        rider.matched = matched
        return rider

    def test_copies_trip(self):
        driver = fallback_to_driver(self.make_rider())
        assert driver.role is Role.REGULAR_DRIVER
        assert (driver.origin, driver.destination) == (0, 2)
        assert driver.request_time == 1.0

    def test_fresh_id(self):
        driver = fallback_to_driver(self.make_rider(), next_id=99)
        assert driver.id == 99

    def test_matched_rider_rejected(self):
        with pytest.raises(ValueError, match="matched"):
            fallback_to_driver(self.make_rider(matched=True))

    def test_non_rider_rejected(self):
        agent = VehicleAgent(id=1, role=Role.REGULAR_DRIVER, origin=0,
                             destination=3, request_time=0.0,
                             window=TimeWindow(0.0, 0.0, 0.55, 0.55))
        with pytest.raises(ValueError):
            fallback_to_driver(agent)
