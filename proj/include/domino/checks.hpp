#pragma once

#include <cstdint>
#include <string>

#include "domino/fixtures.hpp"

namespace domino {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Compares prune_set with the brute-force oracle for every output channel of
/// every weight-bearing layer. With `flip_group_mapping` the dependency side
/// sees grouped convolutions with the opposite channel mapping (a fault
/// injection hook that must make the check fail).
CheckResult check_oracle(const Model& model, bool flip_group_mapping = false);
CheckResult check_oracle_random(std::size_t graphs, std::uint64_t seed, bool flip_group_mapping = false);

/// Central differences in double precision (h = 1e-3) against backward()
/// for every parameter of `nets` small nets; relative error <= 1e-3.
/// Parameters whose perturbation moves a ReLU or max-pool decision are
/// reported as skipped rather than compared.
CheckResult check_gradients(std::size_t nets, std::uint64_t seed);

/// For every candidate channel: prunes its set, checks the pruned maps are
/// exactly zero, and that randomising the dead input columns (rows zero), then
/// the dead rows (columns zero), leaves every logit bit-identical.
CheckResult check_dead_parameters(const Model& model, std::uint64_t seed);

}  // namespace domino
