#include "lmot/optim.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lmot/errors.hpp"
#include "lmot/serialize.hpp"

namespace lmot {

Tensor ParamStore::create(const std::string& name, Eigen::MatrixXd init) {
  if (params_.count(name)) throw InvalidConfig("duplicate parameter name: " + name);
  Tensor t = Tensor::matrix(std::move(init), /*requires_grad=*/true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidConfig("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) != 0; }

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.size());
  return n;
}

AdamW::AdamW(ParamStore& store, AdamWOptions opts)
    : store_(&store), opts_(opts), lr_(opts.lr) {}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : store_->mutable_all()) {
    if (!p.has_grad()) continue;
    const Eigen::MatrixXd& g = p.grad();
    Eigen::MatrixXd& m = m_.try_emplace(name, Eigen::MatrixXd::Zero(g.rows(), g.cols()))
                             .first->second;
    Eigen::MatrixXd& v = v_.try_emplace(name, Eigen::MatrixXd::Zero(g.rows(), g.cols()))
                             .first->second;
    m = opts_.beta1 * m + (1.0 - opts_.beta1) * g;
    v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
    Eigen::MatrixXd& value = p.mutable_value();
    const Eigen::ArrayXXd m_hat = m.array() / bc1;
    const Eigen::ArrayXXd v_hat = v.array() / bc2;
    value.array() -=
        lr_ * (m_hat / (v_hat.sqrt() + opts_.eps) + opts_.weight_decay * value.array());
    p.zero_grad();
  }
}

double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps, double min_ratio) {
  if (total_steps <= 0) return base_lr;
  const double frac =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  const double min_lr = base_lr * min_ratio;
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(M_PI * frac));
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const CheckpointMeta& meta) {
  nlohmann::json j;
  j["meta"] = {{"config_hash", meta.config_hash}, {"step", meta.step}, {"seed", meta.seed}};
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : store.all()) {
    params[name] = {{"shape", {t.rows(), t.cols()}}, {"data", pack_f64(t.flat())}};
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

namespace {
nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

CheckpointMeta parse_meta(const nlohmann::json& j) {
  CheckpointMeta meta;
  const auto& m = j.at("meta");
  meta.config_hash = m.at("config_hash").get<std::string>();
  meta.step = m.at("step").get<std::int64_t>();
  meta.seed = m.at("seed").get<std::uint64_t>();
  return meta;
}
}  // namespace

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& store) {
  const nlohmann::json j = read_json_file(path);
  const CheckpointMeta meta = parse_meta(j);
  const auto& params = j.at("params");
  for (auto& [name, t] : store.mutable_all()) {
    if (!params.contains(name)) throw IoError("checkpoint missing parameter: " + name);
    const auto& entry = params.at(name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw IoError("checkpoint shape mismatch for " + name);
    const std::vector<double> data = unpack_f64(entry.at("data").get<std::string>());
    if (static_cast<Eigen::Index>(data.size()) != t.size())
      throw IoError("checkpoint size mismatch for " + name);
    Eigen::MatrixXd& value = t.mutable_value();
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < value.rows(); ++r)
      for (Eigen::Index c = 0; c < value.cols(); ++c) value(r, c) = data[k++];
  }
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!store.contains(it.key())) throw IoError("checkpoint has unknown parameter: " + it.key());
  }
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  return parse_meta(read_json_file(path));
}

}  // namespace lmot
