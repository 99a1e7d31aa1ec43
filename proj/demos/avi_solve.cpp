// One implicit sign step: sigma_tilde = sigma + M u, u in -alpha Sgn(sigma_tilde).

#include <iostream>

#include "smclab/avi.hpp"

int main() {
    using namespace smclab;
    Mat m(2, 2);
    m << 0.3, 0.1,
        -0.1, 0.2;
    Vec q(2);
    q << 0.05, -1.0;
    const AVISolution sol = solve_box_avi(BoxAVI{m, q, 1.0});
    const Eigen::IOFormat row(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", ", ", "", "", "[", "]");
    std::cout << "z           = " << sol.z.transpose().format(row) << '\n'
              << "sigma_tilde = " << sol.sigma_tilde.transpose().format(row) << '\n'
              << "residual    = " << sol.residual << '\n';
}
