#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lego/model/config.hpp"

namespace lego::test {

struct AuditCase {
  std::string name;
  double max_rel = 0.0;
  std::size_t entries = 0;
  std::string worst;
};

/// Randomized central-difference audit of every differentiable primitive,
/// `cases_per_op` random shapes each, at 64-bit.
std::vector<AuditCase> audit_primitives(std::uint64_t seed, int cases_per_op);

/// Audit of every parameter of a small model under the token-classification
/// loss on two random sequences.
AuditCase audit_model(const model::ModelConfig& config, std::uint64_t seed);

/// The 1-layer, d=8, h=2 configuration of the given variant.
model::ModelConfig tiny_config(model::Variant variant);

}  // namespace lego::test
