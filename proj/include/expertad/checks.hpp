#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expertad/grad_check.hpp"
#include "expertad/model.hpp"

namespace expertad {

struct NamedReport {
  std::string name;
  GradReport report;
};

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

/// Finite-difference checks of every learnable op's backward on small
/// random problems (soft_topk, alignment, stub head, each embedding
/// modality, each attention pattern, gate, routing, mixture).
std::vector<NamedReport> check_learnable_ops(std::uint64_t seed);

/// d(L_total)/d(group) against central differences on `probe`, for every
/// parameter group of `model`. Checks the largest-magnitude analytic entry
/// plus `coords_per_group` random entries of each group. Router noise is
/// drawn from fixed per-example streams so each evaluation sees the same eta.
std::vector<NamedReport> check_end_to_end(const Model& model, const std::vector<const PreparedScenario*>& probe,
                                          std::size_t coords_per_group, std::uint64_t seed);

}  // namespace expertad
