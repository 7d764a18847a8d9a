#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "nard/causal_filter.hpp"
#include "nard/kernel_solver.hpp"
#include "nard/rd_curve.hpp"
#include "nard/source_model.hpp"

namespace nard::csv {

/// Fixed 12-significant-digit float formatting so identical runs produce
/// byte-identical files.
inline std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline const char* flag(bool b) { return b ? "true" : "false"; }

/// Header: D,rate_nats,rate_bits,power,converged
inline void write_rd_curve(std::ostream& os, const std::vector<RDPoint>& points) {
    os << "D,rate_nats,rate_bits,power,converged\n";
    for (const RDPoint& pt : points)
        os << num(pt.distortion) << ',' << num(pt.rate_nats) << ',' << num(pt.rate_bits) << ','
           << num(pt.power) << ',' << flag(pt.converged) << '\n';
}

/// Header: t,distortion_t,power_t; closed by a summary row carrying the
/// time averages.
inline void write_simulation(std::ostream& os, const SimulationReport& rep) {
    os << "t,distortion_t,power_t\n";
    for (std::size_t t = 0; t < rep.steps; ++t)
        os << t << ',' << num(rep.distortion_trace[t]) << ',' << num(rep.power_trace[t]) << '\n';
    os << "summary," << num(rep.empirical_distortion) << ',' << num(rep.empirical_power) << '\n';
}

/// Header: s,rate_nats,distortion,iterations,converged (per-letter values).
inline void write_solver_result(std::ostream& os, const SolverResult& res) {
    os << "s,rate_nats,distortion,iterations,converged\n";
    os << num(res.s) << ',' << num(res.rate_per_letter_nats()) << ',' << num(res.avg_distortion)
       << ',' << res.iterations << ',' << flag(res.converged) << '\n';
}

/// Plain-text dump of the per-stage conditional tables for inspection.
inline void dump_kernel(std::ostream& os, const CausalKernel& kernel) {
    os << "causal kernel: |X|=" << kernel.x_alphabet << " |Y|=" << kernel.y_alphabet
       << " stages=" << kernel.horizon << "\n";
    for (std::size_t i = 0; i < kernel.horizon; ++i) {
        os << "stage " << i << "\n";
        for (std::size_t yh = 0; yh < kernel.y_hist_count(i); ++yh) {
            for (std::size_t xp = 0; xp < kernel.x_path_count(i); ++xp) {
                os << "  y_hist=";
                if (i == 0)
                    os << '-';
                else
                    for (std::size_t pos = 0; pos < i; ++pos)
                        os << path_digit(yh, pos, kernel.y_alphabet, i);
                os << " x_path=";
                for (std::size_t pos = 0; pos <= i; ++pos)
                    os << path_digit(xp, pos, kernel.x_alphabet, i + 1);
                os << " :";
                for (std::size_t y = 0; y < kernel.y_alphabet; ++y)
                    os << ' ' << num(kernel.at(i, yh, xp, y));
                os << "\n";
            }
        }
    }
}

} // namespace nard::csv
