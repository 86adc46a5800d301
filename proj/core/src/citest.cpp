#include "ljpcausal/citest.hpp"

#include <array>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

namespace ljp {

double chi_squared_sf(double x, int dof) {
    if (x <= 0) return 1.0;
    boost::math::chi_squared dist(static_cast<double>(dof));
    return boost::math::cdf(boost::math::complement(dist, x));
}

CiResult g2_test(const VarTable& data, int u, int v, const std::vector<int>& cond,
                 double alpha) {
    if (u == v) throw ValidationError("g2_test: u and v must differ");
    for (int s : cond) {
        if (s == u || s == v) throw ValidationError("g2_test: conditioning set contains u or v");
    }

    const int n = data.n_rows();
    const int n_strata = 1 << cond.size();
    // counts[stratum][u_val][v_val]
    std::vector<std::array<std::array<double, 2>, 2>> counts(
        n_strata, {{{0.0, 0.0}, {0.0, 0.0}}});
    const auto& cu = data.cols[u];
    const auto& cv = data.cols[v];
    for (int r = 0; r < n; ++r) {
        int stratum = 0;
        for (std::size_t k = 0; k < cond.size(); ++k) {
            stratum |= (data.cols[cond[k]][r] ? 1 : 0) << k;
        }
        counts[stratum][cu[r] ? 1 : 0][cv[r] ? 1 : 0] += 1.0;
    }

    CiResult result;
    double g2 = 0;
    int dof = 0;
    for (int s = 0; s < n_strata; ++s) {
        const auto& c = counts[s];
        const double row0 = c[0][0] + c[0][1];
        const double row1 = c[1][0] + c[1][1];
        const double col0 = c[0][0] + c[1][0];
        const double col1 = c[0][1] + c[1][1];
        const double total = row0 + row1;
        if (row0 == 0 || row1 == 0 || col0 == 0 || col1 == 0) continue;  // degenerate stratum
        dof += 1;
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                const double o = c[a][b];
                if (o == 0) continue;
                const double e = (a ? row1 : row0) * (b ? col1 : col0) / total;
                g2 += 2.0 * o * std::log(o / e);
            }
        }
    }

    result.statistic = g2;
    result.dof = dof;
    if (dof == 0) {
        result.untestable = true;
        result.independent = true;
        result.p_value = 1.0;
        return result;
    }
    result.p_value = chi_squared_sf(g2, dof);
    result.independent = result.p_value > alpha;
    return result;
}

}  // namespace ljp
