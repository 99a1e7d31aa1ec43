// Nominal 2-D benchmark with the exact equivalent law and implicit u_s.
// Usage: demo_benchmark_run [h] > trace.csv

#include <cstdlib>
#include <iostream>

#include "smclab/experiments.hpp"
#include "smclab/sim.hpp"

int main(int argc, char** argv) {
    using namespace smclab;
    const double h = argc > 1 ? std::atof(argv[1]) : 0.3;
    const Trace tr = run(ScenarioConfig{.plant = Benchmark2D::plant(), .h = h, .t_end = Benchmark2D::t_end,
                                        .x0 = Benchmark2D::x0()});
    write_trace_csv(std::cout, tr);
    std::cerr << "h = " << h << ", " << tr.steps() << " steps, ";
    if (tr.reaching_step) std::cerr << "sliding from step " << *tr.reaching_step << '\n';
    else std::cerr << "no sliding phase\n";
}
