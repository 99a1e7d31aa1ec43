// Chattering of explicit vs implicit u_s under xi = 0.9 sin t for a few timesteps.

#include <cstdio>

#include "smclab/experiments.hpp"
#include "smclab/metrics.hpp"

int main() {
    using namespace smclab;
    std::printf("%8s %14s %14s %14s %14s\n", "h", "C1 explicit", "C2 explicit", "C1 implicit", "C2 implicit");
    for (double h : {0.2, 0.1, 0.05, 0.02}) {
        double c[4];
        int i = 0;
        for (UsLaw us : {UsLaw::explicit_sign(), UsLaw::implicit_avi()}) {
            const Trace tr = run(ScenarioConfig{.plant = Benchmark2D::plant(3.0), .h = h, .t_end = Benchmark2D::t_end,
                                                .x0 = Benchmark2D::x0(), .us_law = us,
                                                .perturbation = gain_study_perturbation()});
            const ChatterIndices ci = chatter_indices(tr, 20.0);
            c[i++] = ci.c1;
            c[i++] = ci.c2;
        }
        std::printf("%8.3f %14.6g %14.6g %14.6g %14.6g\n", h, c[0], c[1], c[2], c[3]);
    }
}
