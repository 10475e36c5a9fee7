// Serial reference against the OpenMP kernel for the three hot loops. The
// argument is the worker count used by the parallel variant.

#include <benchmark/benchmark.h>

#include <vector>

#include "tweezerlab/beam_field.hpp"
#include "tweezerlab/loading_mc.hpp"
#include "tweezerlab/parallel.hpp"
#include "tweezerlab/potential_map.hpp"
#include "tweezerlab/stats_fit.hpp"
#include "tweezerlab/trap_potential.hpp"

using namespace tweezerlab;

namespace {

PhysicalConstants constants()
{
    PhysicalConstants c;
    c.polarizability = 5.0e-38;
    return c;
}

const TrapField& field()
{
    static const TrapField f(membrane_configuration(true, 0.0));
    return f;
}

struct Lattice {
    PotentialMap map;
    std::vector<TrapSite> sites;
};

const Lattice& lattice()
{
    static const Lattice l = [] {
        const PhysicalConstants c = constants();
        PotentialMap map = total_potential(field(), c, SurfaceMaterial::silica(), GridAxis{0, 7.5e-6, 151},
                                           GridAxis{0, 20e-6, 1001});
        const TrapPotential U(field(), c, SurfaceMaterial::silica());
        return Lattice{std::move(map), characterize_sites(U, 20e-9, 19.9e-6)};
    }();
    return l;
}

Execution mode(const benchmark::State& state)
{
    if (state.range(0) == 0)
        return Execution::Serial;
    set_worker_count(static_cast<int>(state.range(0)));
    return Execution::Parallel;
}

void potential_grid(benchmark::State& state)
{
    const Execution e = mode(state);
    const PhysicalConstants c = constants();
    for (auto _ : state) {
        auto map = total_potential(field(), c, SurfaceMaterial::silica(), GridAxis{0, 7.5e-6, 61},
                                   GridAxis{0, 20e-6, 401}, e);
        benchmark::DoNotOptimize(map);
    }
}

void loading_trajectories(benchmark::State& state)
{
    const Execution e = mode(state);
    const Lattice& l = lattice();
    MCConfig mc;
    mc.n_trajectories = 64;
    mc.duration = 0.3e-3;
    for (auto _ : state) {
        auto report = run_loading(mc, l.map, l.sites, e);
        benchmark::DoNotOptimize(report);
    }
    state.SetItemsProcessed(state.iterations() * mc.n_trajectories);
}

void transport_configurations(benchmark::State& state)
{
    const Execution e = mode(state);
    const ExponentialModel I{1000, 6e-6};
    std::vector<double> dz;
    for (int i = 0; i <= 24; ++i)
        dz.push_back(-0.5e-6 * i);
    const int n_configs = 2000;
    for (auto _ : state) {
        auto est = transport_ensemble(I, 3.6, 10.3e-6, dz, 935e-9, 221, n_configs, 9, e);
        benchmark::DoNotOptimize(est);
    }
    state.SetItemsProcessed(state.iterations() * n_configs);
}

// 0 = serial reference; otherwise the parallel kernel with that many workers
void worker_args(benchmark::internal::Benchmark* b)
{
    b->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
}

}  // namespace

BENCHMARK(potential_grid)->Apply(worker_args);
BENCHMARK(loading_trajectories)->Apply(worker_args);
BENCHMARK(transport_configurations)->Apply(worker_args);

BENCHMARK_MAIN();
