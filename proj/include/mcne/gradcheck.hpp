#pragma once

// Finite-difference checks of every hand-written backward pass.

#include <cstdint>
#include <string>
#include <vector>

#include "mcne/param_store.hpp"

namespace mcne {

/// Names accepted by grad_check: dense_relu, attention_softmax, bpr_loss,
/// full_objective.
std::vector<std::string> gradcheck_ops();

/// Central differences against the analytic gradient on random inputs drawn
/// from `seed`. Inputs are redrawn until every ReLU pre-activation is at
/// least 1e-3 away from zero. Masks are excluded from the objective check:
/// their straight-through gradient is not a derivative of the forward pass.
/// Throws ConfigError for an unknown op.
GradCheckReport grad_check(const std::string& op, std::uint64_t seed, double epsilon = 1e-5,
                           double tolerance = 1e-4);

}  // namespace mcne
