// Lame heat flow: sector scan of the discrete operator and the measured maximal
// regularity constant for a few ratios mu'/mu.
#include <cnslab/lame.hpp>
#include <cnslab/runtime.hpp>

#include <cstdio>

using namespace cnslab;

int main(int, char** argv)
{
    pin_blas_environment(argv);
    const Grid g = Grid::square(16);
    VectorField u0(g);
    for (int n = 0; n < g.size(); ++n) {
        const double x = g.x(n, 0), y = g.x(n, 1);
        u0.comp(0)[n] = std::sin(M_PI * x) * std::sin(2 * M_PI * y);
        u0.comp(1)[n] = std::sin(2 * M_PI * x) * std::sin(M_PI * y) * (1.0 + x);
    }
    const Vec force = 2.0 * u0.values;

    std::printf("mu'/mu  abscissa   sector sup   sector angle   C_meas\n");
    for (double m : {-0.5, 0.0, 1.0, 5.0}) {
        const LinearOperator l = assemble_lame(g, {1.0, m});
        const SectorReport s = sectoriality_scan(l, {0.0, 0.5, 1.0, 1.4}, {1.0, 10.0, 100.0});
        const HeatResult h =
            heat_maxreg_solve(l, 1.0, u0, [&](double t) -> Vec { return std::exp(-t) * force; }, 1.0, 64);
        std::printf("%6.2f  %9.4f  %10.4f  %12.2f  %7.4f\n", m, s.spectral_abscissa, s.sup_bound, s.sector_angle,
                    h.constants.ratio.value_or(0.0));
    }
    return 0;
}
