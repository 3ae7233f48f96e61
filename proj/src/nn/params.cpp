#include "mbcal/nn/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mbcal/error.hpp"

namespace mbcal::nn {

std::size_t ParamSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw ShapeError("parameter block '" + name + "' must have positive dimensions");
  }
  if (find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter block '" + name + "'");
  }
  blocks_.push_back({std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return blocks_.size() - 1;
}

const ParamBlock* ParamSet::find(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

ParamBlock* ParamSet::find(std::string_view name) {
  for (auto& b : blocks_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::size_t ParamSet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& b : blocks_) b.grad.setZero();
}

void ParamSet::scale_grad(double factor) {
  for (auto& b : blocks_) b.grad *= factor;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size()) throw ShapeError("parameter sets have different layouts");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& src = other.blocks_[i];
    auto& dst = blocks_[i];
    if (src.name != dst.name || src.value.rows() != dst.value.rows() ||
        src.value.cols() != dst.value.cols()) {
      throw ShapeError("parameter block mismatch at '" + dst.name + "'");
    }
    dst.value = src.value;
  }
}

void init_glorot(Matrix& m, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  init_uniform(m, bound, rng);
}

void init_uniform(Matrix& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  // Row-major fill order so that the layout of Matrix does not leak into the
  // random stream.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
}

nlohmann::json to_json(const ParamSet& params) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : params) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(b.value.size()));
    for (Eigen::Index r = 0; r < b.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < b.value.cols(); ++c) values.push_back(b.value(r, c));
    }
    blocks.push_back({{"name", b.name},
                      {"shape", {b.value.rows(), b.value.cols()}},
                      {"values", std::move(values)}});
  }
  return {{"format", "mbcal-params"}, {"version", kCheckpointVersion}, {"blocks", blocks}};
}

void from_json(const nlohmann::json& j, ParamSet& params) {
  if (j.value("format", "") != "mbcal-params") throw FormatError("not an mbcal parameter checkpoint");
  if (j.value("version", -1) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  }
  const auto& blocks = j.at("blocks");
  if (blocks.size() != params.size()) {
    throw FormatError("checkpoint has " + std::to_string(blocks.size()) + " blocks, model expects " +
                      std::to_string(params.size()));
  }
  for (const auto& jb : blocks) {
    const auto name = jb.at("name").get<std::string>();
    ParamBlock* b = params.find(name);
    if (b == nullptr) throw FormatError("unknown parameter block '" + name + "'");
    const auto rows = jb.at("shape").at(0).get<Eigen::Index>();
    const auto cols = jb.at("shape").at(1).get<Eigen::Index>();
    if (rows != b->value.rows() || cols != b->value.cols()) {
      throw FormatError("shape mismatch for block '" + name + "'");
    }
    const auto& values = jb.at("values");
    if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
      throw FormatError("wrong value count for block '" + name + "'");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) b->value(r, c) = values[k++].get<double>();
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << to_json(params).dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, ParamSet& params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  from_json(nlohmann::json::parse(in), params);
}

}  // namespace mbcal::nn
