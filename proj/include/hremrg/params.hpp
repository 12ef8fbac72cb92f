#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "hremrg/tensor.hpp"

namespace hremrg {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named model parameters, ordered by name so every iteration (saving,
// optimizer sweeps, gradient checks) is deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t count() const { return params_.size(); }
  std::size_t total_elements() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Xavier-uniform matrix in +-sqrt(6/(fan_in+fan_out)).
  Tensor& add_matrix(const std::string& name, int rows, int cols, std::mt19937_64& rng);
  Tensor& add_zeros(const std::string& name, std::vector<int> shape);
  Tensor& add_ones(const std::string& name, std::vector<int> shape);

  // Checkpoint: "HRMG", version u32 LE, count u32 LE, then per parameter
  // name (u16 LE length + UTF-8), rank u32 LE, dims u32 LE, f64 LE payload.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

 private:
  std::map<std::string, Tensor> params_;
};

// Bind a stored parameter to the active tape (or pass it through untouched
// when no tape is running).
Tensor param(GradTape* t, const ParamStore& store, const std::string& name);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Central-difference check of d f / d theta for every coordinate of every
// parameter, against the tape gradients. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckResult grad_check(ParamStore& params,
                           const std::function<Tensor(GradTape*, const ParamStore&)>& f,
                           double eps = 1e-5);

}  // namespace hremrg
