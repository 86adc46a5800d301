#pragma once

#include <vector>

#include "ljpcausal/factors.hpp"

namespace ljp {

struct CiResult {
    double statistic = 0;  // G²
    int dof = 0;
    double p_value = 1;
    bool independent = true;  // p_value > alpha
    bool untestable = false;  // every stratum degenerate
};

// G² conditional-independence test of binary u ⟂ v | S on the stratified
// 2x2x2^|S| table. Strata with a zero marginal are skipped and the degrees
// of freedom reduced accordingly; a fully degenerate table reports
// independent with the untestable flag.
CiResult g2_test(const VarTable& data, int u, int v, const std::vector<int>& cond,
                 double alpha);

// Upper-tail chi-square probability, exposed for test oracles.
double chi_squared_sf(double x, int dof);

}  // namespace ljp
