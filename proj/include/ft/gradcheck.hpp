#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ft/net.hpp"

namespace ft {

struct GradCheckResult {
  std::string layer;
  double max_rel_err;
};

// Central finite differences in double precision against the analytic
// backward pass. Relative error is |a - n| / max(1, |a|, |n|).
// Known layer names: conv5x5-s1, conv5x5-s2, conv3x3-s1, conv3x3-s2,
// maxpool, relu, fc, concat, blend, euclidean-loss.
double grad_check_layer(const std::string& layer, std::uint64_t seed = 1,
                        double eps = 1e-4);
std::vector<GradCheckResult> grad_check_all(std::uint64_t seed = 1,
                                            double eps = 1e-4);
const std::vector<std::string>& grad_check_layer_names();

// Reduced single-stream graph (24x24 input, same layer kinds as the real
// networks) used for end-to-end gradient verification.
NetworkGraphT<double> build_reduced_single_stream(std::uint64_t seed);

// Max relative error of the end-to-end loss gradient over n_probes randomly
// chosen parameter entries of the reduced graph.
double grad_check_network(std::uint64_t seed = 1, int n_probes = 20,
                          double eps = 1e-4);

}  // namespace ft
