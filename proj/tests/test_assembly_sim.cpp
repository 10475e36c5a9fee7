#include "doctest.h"
#include "approx.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "tweezerlab/assembly_sim.hpp"

using namespace tweezerlab;

namespace {

using Heights = std::vector<std::optional<double>>;

Heights all_at(int m, double z) { return Heights(m, z); }

int count_kind(const AssemblyReport& r, EventKind k)
{
    int n = 0;
    for (const auto& e : r.events)
        n += e.kind == k;
    return n;
}

}  // namespace

TEST_CASE("schedule: single tweezer")
{
    const AssemblyPlan plan = AssemblyPlan::uniform(1);
    const Schedule s = plan_schedule(plan);
    REQUIRE(s.segments.size() == 1);
    CHECK(s.total_duration() <= plan.transport_budget + plan.switch_time);
    CHECK(s.segments[0].tone == plan.tones[0]);
}

TEST_CASE("schedule: ten tweezers fit in 50.001 ms and are ordered")
{
    AssemblyPlan plan = AssemblyPlan::uniform(10);
    plan.transport_budget = 5e-3;
    plan.switch_time = 0.1e-6;
    const Schedule s = plan_schedule(plan);
    CHECK(s.segments.size() == 10);
    CHECK(s.total_duration() <= 50.001e-3 + 1e-15);
    CHECK(s.total_duration() == rel(10 * 5e-3 + 9 * 0.1e-6).epsilon(1e-12));
    CHECK_NOTHROW(s.validate());
    for (std::size_t i = 1; i < s.segments.size(); ++i) {
        CHECK(s.segments[i].start >= s.segments[i - 1].end);
        CHECK(s.segments[i].start - s.segments[i - 1].end == rel(plan.switch_time).epsilon(1e-6));
    }
    const auto nu = s.bottom_frequency();
    CHECK(nu.size() == 20);
    CHECK(nu.front().second == plan.tones.front());
    CHECK(nu.back().second == plan.tones.back());
}

TEST_CASE("plan validation")
{
    AssemblyPlan plan = AssemblyPlan::uniform(3);
    CHECK_NOTHROW(plan.validate());
    plan.tones[1] = plan.tones[0] + 5 * plan.axial_frequency;  // spacing below 10 f_a
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = AssemblyPlan::uniform(3);
    plan.probe_drop_threshold = 1.0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = AssemblyPlan::uniform(3);
    plan.transport_budget = 0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
    plan = AssemblyPlan::uniform(3);
    plan.switch_time = 1e-3;  // not << 1 / f_a
    CHECK_THROWS_AS(plan_schedule(plan), std::invalid_argument);
    CHECK_THROWS_AS(AssemblyPlan::uniform(0), std::invalid_argument);
    Schedule bad;
    bad.segments = {{0, 0, 1e-3, 1}, {1, 0.5e-3, 2e-3, 2}};
    CHECK_THROWS_AS(bad.validate(), std::logic_error);
}

TEST_CASE("probe model: drop, threshold height and cap")
{
    const AssemblyPlan plan;
    const double le = 852e-9 / (2 * M_PI);
    CHECK(plan.evanescent_length() == rel(le));
    CHECK(plan.probe_drop(0) == rel(0.7));
    CHECK(plan.probe_drop(le) == rel(0.7 * std::exp(-2.0)));
    const double zd = plan.detection_height();
    CHECK(plan.probe_drop(zd) == rel(0.7 * 0.7).epsilon(1e-12));
    AssemblyPlan loose = plan;
    loose.probe_drop_threshold = 1e-9;
    CHECK(loose.detection_height() == plan.atomic_wavelength);
}

TEST_CASE("empty occupancy: every site initially empty, full schedule")
{
    const AssemblyPlan plan = AssemblyPlan::uniform(5);
    const AssemblyReport r = simulate_assembly(plan, Heights(5), 1);
    CHECK(r.count(SiteOutcome::InitiallyEmpty) == 5);
    CHECK(r.duration == rel(plan_schedule(plan).total_duration()).epsilon(1e-14));
    CHECK(std::isnan(r.mean_closed_form_survival()));
    CHECK_NOTHROW(check_single_conveyor(r));
}

TEST_CASE("perfect detection without decay assembles every occupied tweezer")
{
    AssemblyPlan plan = AssemblyPlan::uniform(6);
    plan.lifetime = std::numeric_limits<double>::infinity();
    plan.detection_latency = 0;
    // threshold reached exactly at z = lambda_a
    plan.probe_drop_threshold = std::exp(-2 * plan.atomic_wavelength / plan.evanescent_length());
    CHECK(plan.detection_height() == rel(plan.atomic_wavelength).epsilon(1e-12));
    const Heights z{5e-6, std::nullopt, 2.3e-6, 10e-6, 0.5e-6, std::nullopt};
    const AssemblyReport r = simulate_assembly(plan, z, 3);
    for (int i = 0; i < 6; ++i) {
        if (!z[i]) {
            CHECK(r.outcomes[i] == SiteOutcome::InitiallyEmpty);
            continue;
        }
        CHECK(r.outcomes[i] == SiteOutcome::Assembled);
        CHECK(r.park_z[i] < plan.atomic_wavelength);
        CHECK(r.park_z[i] > 0);
        CHECK(r.closed_form_survival[i] == 1.0);
    }
    CHECK(r.count(SiteOutcome::Assembled) + r.count(SiteOutcome::InitiallyEmpty) == 6);
    CHECK(count_kind(r, EventKind::Parked) == 4);
    CHECK(r.duration < plan_schedule(plan).total_duration());
}

TEST_CASE("atom starting below the detection height parks immediately")
{
    AssemblyPlan plan = AssemblyPlan::uniform(1);
    plan.lifetime = std::numeric_limits<double>::infinity();
    const AssemblyReport r = simulate_assembly(plan, Heights{10e-9}, 1);
    CHECK(r.outcomes[0] == SiteOutcome::Assembled);
    CHECK(r.park_time[0] <= 2e-9);
}

TEST_CASE("latency past the surface loses the atom")
{
    AssemblyPlan plan = AssemblyPlan::uniform(2);
    plan.lifetime = std::numeric_limits<double>::infinity();
    plan.detection_latency = 1e-3;
    const AssemblyReport r = simulate_assembly(plan, all_at(2, 5e-6), 1);
    CHECK(r.outcomes[0] == SiteOutcome::LostInTransport);
    CHECK(r.outcomes[1] == SiteOutcome::LostInTransport);
    CHECK(count_kind(r, EventKind::Lost) == 2);
}

TEST_CASE("closed-form survival after parking at the end of the first segment")
{
    AssemblyPlan plan = AssemblyPlan::uniform(10);
    plan.lifetime = 0.9;
    Heights z(10);
    z[0] = 5e-6;
    const AssemblyReport r = simulate_assembly(plan, z, 1);
    REQUIRE_FALSE(std::isnan(r.park_time[0]));
    // the last z_det of travel falls in the closing ramp: t = sqrt(2 ramp z_det / v_hold)
    const double v_hold = 5e-6 / (plan.transport_budget - plan.ramp_time);
    const double t_rem = std::sqrt(2 * plan.ramp_time * plan.detection_height() / v_hold);
    CHECK(r.park_time[0] == rel(plan.transport_budget - t_rem).epsilon(1e-6));
    CHECK(r.closed_form_survival[0] == rel(std::exp(-(r.duration - r.park_time[0]) / 0.9)).epsilon(1e-14));
    CHECK(r.closed_form_survival[0] == rel(std::exp(-0.045 / 0.9)).epsilon(2e-4));
    CHECK(r.closed_form_survival[0] == rel(0.951).epsilon(5e-4));
}

TEST_CASE("survival: infinite and zero lifetimes")
{
    AssemblyPlan plan = AssemblyPlan::uniform(4);
    plan.lifetime = std::numeric_limits<double>::infinity();
    std::vector<AssemblyReport> runs;
    for (std::uint64_t s = 0; s < 50; ++s)
        runs.push_back(simulate_assembly(plan, all_at(4, 3e-6), s));
    const SurvivalSummary a = survival_summary(runs, plan);
    CHECK(a.pooled.parked == 200);
    CHECK(a.pooled.mc == 1.0);
    CHECK(a.pooled.closed_form == 1.0);
    CHECK(a.expected_assembled == rel(4.0));

    plan.lifetime = 0;
    runs.clear();
    for (std::uint64_t s = 0; s < 50; ++s)
        runs.push_back(simulate_assembly(plan, all_at(4, 3e-6), s));
    for (const auto& r : runs)
        CHECK(r.count(SiteOutcome::Assembled) == 0);
    const SurvivalSummary b = survival_summary(runs, plan);
    CHECK(b.pooled.survived == 0);
}

TEST_CASE("survival: Monte Carlo agrees with the closed form over 1e4 runs")
{
    AssemblyPlan plan = AssemblyPlan::uniform(10);
    plan.lifetime = 0.05;  // short enough for the comparison to have teeth
    const OccupancySampler occ(0.7, 4e-6);
    std::vector<AssemblyReport> runs;
    runs.reserve(10000);
    for (std::uint64_t s = 0; s < 10000; ++s)
        runs.push_back(simulate_assembly(plan, occ, s));
    const SurvivalSummary sum = survival_summary(runs, plan);
    CHECK(sum.pooled.parked > 1000);
    CHECK(std::abs(sum.pooled.z_score()) < 3);
    for (const auto& site : sum.sites)
        if (site.parked > 100)
            CHECK(std::abs(site.z_score()) < 3.5);
    for (const auto& r : runs) {
        int total = 0;
        for (SiteOutcome o : {SiteOutcome::Assembled, SiteOutcome::LostInTransport, SiteOutcome::Decayed,
                              SiteOutcome::InitiallyEmpty})
            total += r.count(o);
        if (total != 10)
            FAIL("outcomes do not partition the sites");
    }
}

TEST_CASE("determinism and single active conveyor")
{
    const AssemblyPlan plan = AssemblyPlan::uniform(8);
    const OccupancySampler occ(0.6, 6e-6);
    const AssemblyReport a = simulate_assembly(plan, occ, 42), b = simulate_assembly(plan, occ, 42);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].t == b.events[i].t);
        CHECK(a.events[i].kind == b.events[i].kind);
    }
    CHECK(a.outcomes == b.outcomes);
    CHECK_NOTHROW(check_single_conveyor(a));

    AssemblyReport broken = a;
    broken.events.insert(broken.events.begin() + 1, AssemblyEvent{0.0, 5, EventKind::ConveyorOn});
    CHECK_THROWS_AS(check_single_conveyor(broken), std::logic_error);
}

TEST_CASE("hold detuning brings the atom to the surface at the budget")
{
    AssemblyPlan plan = AssemblyPlan::uniform(1);
    const AssemblyReport r = simulate_assembly(plan, Heights{9.35e-6}, 1);
    // distance = (lambda/2) |hold| (tau - ramp)
    CHECK(std::abs(r.hold_detuning[0]) * 0.5 * 935e-9 * (5e-3 - 0.5e-3) == rel(9.35e-6).epsilon(1e-12));
    CHECK(r.hold_detuning[0] < 0);
    CHECK(r.resonance_violations == 0);
    const AssemblyReport far = simulate_assembly(plan, Heights{1e-2}, 1);
    CHECK(far.resonance_violations == 1);
}

TEST_CASE("occupancy sampler from a fixed probability")
{
    const OccupancySampler all(1.0, 3e-6), none(0.0, 3e-6);
    Rng rng(1);
    for (const auto& z : all.draw(5, rng))
        CHECK(z == 3e-6);
    for (const auto& z : none.draw(5, rng))
        CHECK_FALSE(z.has_value());
    CHECK_THROWS_AS(OccupancySampler(1.5, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(OccupancySampler(0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(simulate_assembly(AssemblyPlan::uniform(2), Heights(3), 1), std::invalid_argument);
}
