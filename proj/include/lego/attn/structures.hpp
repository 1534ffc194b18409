#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lego/autodiff/tensor.hpp"

namespace lego::attn {

enum class AttnKind {
  Association,
  BroadcastCls,
  BroadcastSep,
  ManipulationTarget,
  MimicAssociationTarget,
  Learned,
};

std::string_view to_string(AttnKind kind);

/// A T×T row-stochastic attention matrix, row-major.
struct AttnMap {
  int size = 0;
  std::vector<double> values;
  AttnKind kind = AttnKind::Learned;

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(size) +
                  static_cast<std::size_t>(col)];
  }
  std::span<const double> row(int r) const {
    return std::span<const double>(values).subspan(
        static_cast<std::size_t>(r) * static_cast<std::size_t>(size), static_cast<std::size_t>(size));
  }
};

/// Divides each row by its sum. All-zero rows become uniform. Throws on a
/// negative entry.
std::vector<double> row_normalize(std::span<const double> values, int cols);

/// Rows proportional to 1[u_i == u_j], diagonal included.
AttnMap build_association(std::span<const int> ids);

/// Every row proportional to 1[u_j == special_id]; uniform when the special
/// token is absent.
AttnMap build_broadcast(std::span<const int> ids, int special_id,
                        AttnKind kind = AttnKind::BroadcastCls);

/// Band (1,2,4,2,1) centered on the diagonal, truncated at the borders and
/// renormalized.
AttnMap build_manipulation_target(int size);

/// Rows proportional to 1[u_i == u_j and i != j]; rows without a match are
/// uniform.
AttnMap build_mimic_association_target(std::span<const int> ids);

/// Comma-separated rows, full precision.
std::string to_csv(std::span<const double> values, int rows, int cols);
void write_csv(const std::filesystem::path& path, std::span<const double> values, int rows, int cols);

/// Stacks maps of equal size into a constant [B, T, T] tensor.
template <typename S>
ad::Tensor<S> stack_maps(std::span<const AttnMap> maps);

}  // namespace lego::attn
