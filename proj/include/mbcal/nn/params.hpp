#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mbcal::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// A named trainable array together with its gradient accumulator.
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Ordered collection of parameter blocks owned by one model.
///
/// Layers refer to their blocks by index, so a ParamSet (and any model
/// holding one) can be copied freely: the copy is a fully independent model.
class ParamSet {
 public:
  /// Appends a zero-initialized block. Names must be unique.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  ParamBlock& operator[](std::size_t i) { return blocks_.at(i); }
  const ParamBlock& operator[](std::size_t i) const { return blocks_.at(i); }

  const ParamBlock* find(std::string_view name) const;
  ParamBlock* find(std::string_view name);

  std::size_t size() const noexcept { return blocks_.size(); }
  auto begin() noexcept { return blocks_.begin(); }
  auto end() noexcept { return blocks_.end(); }
  auto begin() const noexcept { return blocks_.begin(); }
  auto end() const noexcept { return blocks_.end(); }

  /// Total number of scalar parameters.
  std::size_t parameter_count() const noexcept;

  void zero_grad();
  void scale_grad(double factor);

  /// Copies values (not gradients) from a set with identical layout.
  void copy_values_from(const ParamSet& other);

 private:
  std::vector<ParamBlock> blocks_;
};

/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), fan_in = cols.
void init_glorot(Matrix& m, Rng& rng);
void init_uniform(Matrix& m, double bound, Rng& rng);

// Checkpoint format (JSON):
//   {"format": "mbcal-params", "version": 1,
//    "blocks": [{"name": ..., "shape": [rows, cols], "values": [row-major ...]}]}
inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const ParamSet& params);
/// Overwrites values in `params`; every block must be present with the same shape.
void from_json(const nlohmann::json& j, ParamSet& params);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
void load_checkpoint(const std::filesystem::path& path, ParamSet& params);

}  // namespace mbcal::nn
