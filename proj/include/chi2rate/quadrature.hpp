#pragma once

#include <vector>

namespace chi2rate::quad {

// Nodes and weights for E f(Z), Z standard normal: sum_i weights[i] f(nodes[i]).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const GaussHermite& gauss_hermite(int order);

// Upper integration cutoff for the chi-square density: quantile at upper tail
// mass `tail`.
double chisq_upper_cutoff(int df, double tail);

}  // namespace chi2rate::quad
