// Parameter registry, AdamW with decoupled weight decay, cosine learning-rate
// schedule, and the JSON checkpoint format.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>

#include "lmot/tensor.hpp"

namespace lmot {

/// Named collection of trainable leaf tensors. Iteration order is the sorted
/// parameter path, which keeps optimizer updates and checkpoints deterministic.
class ParamStore {
 public:
  /// Registers a new rank-2 trainable leaf under `name`.
  Tensor create(const std::string& name, Eigen::MatrixXd init);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::map<std::string, Tensor>& mutable_all() { return params_; }
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(ParamStore& store, AdamWOptions opts = {});

  /// Applies one update to every parameter that accumulated a gradient and
  /// clears all gradients.
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t step_count() const { return t_; }

 private:
  ParamStore* store_;
  AdamWOptions opts_;
  double lr_;
  std::int64_t t_ = 0;
  std::map<std::string, Eigen::MatrixXd> m_;
  std::map<std::string, Eigen::MatrixXd> v_;
};

/// Cosine annealing from base_lr down to base_lr * min_ratio over total_steps.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps,
                 double min_ratio = 1e-3);

struct CheckpointMeta {
  std::string config_hash;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

/// Writes {"meta": {...}, "params": {path: {"shape": [...], "data": base64}}}.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const CheckpointMeta& meta);

/// Reads values into an already-constructed store; every stored parameter must
/// exist with a matching shape. Returns the checkpoint metadata.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& store);

/// Metadata-only read (config hash validation before building a model).
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace lmot
