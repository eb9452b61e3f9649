#ifndef TRAJSIM_GRADCHECK_HPP_
#define TRAJSIM_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "trajsim/model.hpp"
#include "trajsim/nn/tape.hpp"

namespace trajsim {

struct GradCheckOptions {
  std::size_t n1 = 4;  // grid cells per trajectory
  std::size_t n2 = 6;  // points per trajectory
  std::uint64_t seed = 0;
  double eps = 1e-5;
  std::size_t max_entries = 1000;
  ModelConfig model{};
};

struct GradCheckResult {
  std::string block;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[index]" of the worst entry
};

// |a - n| / max(|a|, |n|, kGradCheckFloor)
inline constexpr double kGradCheckFloor = 1e-3;
double relative_error(double analytic, double numeric);

using LeafList = std::vector<std::pair<std::string, nn::Matrix*>>;
// Builds the block on a fresh tape; leaves[i] is the tape leaf of the i-th matrix.
using BlockBuilder = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>& leaves)>;

/// Compares reverse-mode gradients of sum(out .* W), W a fixed random
/// matrix, with central differences on up to max_entries entries sampled
/// from the leaves that receive a gradient. Leaves are perturbed in place and
/// restored. Throws DomainError naming the entry on a non-finite gradient.
GradCheckResult check_gradients(const std::string& block, const LeafList& leaves, const BlockBuilder& build,
                                const GradCheckOptions& opt);

std::vector<std::string> gradcheck_blocks();
// Runs one registered block ("all" is not accepted here).
GradCheckResult grad_check(const std::string& block, const GradCheckOptions& opt);

}  // namespace trajsim

#endif  // TRAJSIM_GRADCHECK_HPP_
