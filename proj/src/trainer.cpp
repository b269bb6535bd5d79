#include "dynmia/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidSpec("epochs must be >= 1");
  if (lr_floor < 0.f || lr_init < lr_floor) throw InvalidSpec("need lr_init >= lr_floor >= 0");
  if (batch_size < 1) throw InvalidSpec("batch_size must be >= 1");
}

float TrainConfig::lr_at(int epoch) const {
  return lr_schedule == LrSchedule::kCosine ? cosine_lr(lr_init, lr_floor, epoch, epochs) : lr_init;
}

const char* finetune_mode_name(FinetuneMode mode) {
  switch (mode) {
    case FinetuneMode::kPolicy: return "ft-policy";
    case FinetuneMode::kMain: return "ft-main";
    case FinetuneMode::kBoth: return "ft-both";
  }
  return "?";
}

FinetuneMode parse_finetune_mode(const std::string& name) {
  if (name == "ft-policy") return FinetuneMode::kPolicy;
  if (name == "ft-main") return FinetuneMode::kMain;
  if (name == "ft-both") return FinetuneMode::kBoth;
  throw InvalidSpec("unknown finetune mode: " + name);
}

Mat make_batch(const Pool& pool, std::span<const uint32_t> indices, std::vector<int32_t>* labels) {
  const size_t d = pool.sample_bytes();
  Mat x(indices.size(), d);
  if (labels) labels->resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const uint8_t* src = pool.sample(indices[i]);
    for (size_t j = 0; j < d; ++j) x(i, j) = src[j] / 255.f;
    if (labels) (*labels)[i] = pool.labels[indices[i]];
  }
  return x;
}

namespace {

struct ParamSnapshot {
  std::vector<Mat> values;
  explicit ParamSnapshot(const std::vector<Param>& params) {
    for (auto& p : params) values.push_back(*p.value);
  }
  void check_unchanged(const std::vector<Param>& params, const char* what) const {
    for (size_t i = 0; i < params.size(); ++i) {
      const Mat& a = values[i];
      const Mat& b = *params[i].value;
      if (a.rows() != b.rows() || a.cols() != b.cols() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0)
        throw FrozenViolation(std::string(what) + ": frozen parameter '" + params[i].name +
                              "' changed during fine-tuning");
    }
  }
};

// Shared epoch loop for target training and shadow fine-tuning.
void run_training(DynamicNet& net, const Pool& pool, std::span<const uint32_t> train_ids,
                  std::span<const uint32_t> test_ids, const TrainConfig& cfg, bool train_main,
                  bool train_policy, std::ostream* log, const std::vector<Param>* frozen,
                  const char* what) {
  cfg.validate();
  if (train_ids.empty()) throw EmptySet(std::string(what) + ": empty training set");

  std::vector<Param> tuned;
  if (train_main) {
    auto p = net.main_params();
    tuned.insert(tuned.end(), p.begin(), p.end());
  }
  if (train_policy) {
    auto p = net.policy_params();
    tuned.insert(tuned.end(), p.begin(), p.end());
  }
  Adam adam;
  Sgd sgd;
  std::optional<ParamSnapshot> frozen_snapshot;
  if (frozen) frozen_snapshot.emplace(*frozen);

  std::vector<uint32_t> order(train_ids.begin(), train_ids.end());
  std::mt19937_64 shuffle_eng(stage_seed(cfg.seed, "trainer/shuffle"));
  std::vector<int32_t> labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    double loss_sum = 0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t n = std::min<size_t>(cfg.batch_size, order.size() - start);
      Mat x = make_batch(pool, {order.data() + start, n}, &labels);
      zero_grads(net.params());
      float loss = net.loss_backward(x, labels, cfg.gate_mode, train_main, train_policy);
      if (!std::isfinite(loss))
        throw DivergedTraining(std::string(what) + ": non-finite loss at epoch " + std::to_string(epoch));
      if (cfg.optimizer == OptimizerKind::kAdam)
        adam.step(tuned, lr);
      else
        sgd.step(tuned, lr);
      loss_sum += static_cast<double>(loss) * n;
      seen += n;
    }
    if (frozen_snapshot) frozen_snapshot->check_unchanged(*frozen, what);
    if (log) {
      const float train_acc = evaluate_accuracy(net, pool, train_ids);
      const float test_acc = test_ids.empty() ? 0.f : evaluate_accuracy(net, pool, test_ids);
      (*log) << epoch << '\t' << format_float(static_cast<float>(loss_sum / seen)) << '\t'
             << format_float(train_acc) << '\t' << format_float(test_acc) << '\t'
             << format_float(lr) << '\n';
    }
  }
}

}  // namespace

void train_target(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                  const TrainConfig& cfg, std::ostream* log) {
  run_training(net, pool, parts.target_train, parts.target_test, cfg, true, true, log, nullptr,
               "train_target");
}

void finetune_shadow(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                     FinetuneMode mode, const TrainConfig& cfg, std::ostream* log) {
  const bool tune_main = mode != FinetuneMode::kPolicy;
  const bool tune_policy = mode != FinetuneMode::kMain;
  std::vector<Param> frozen;
  if (!tune_main) frozen = net.main_params();
  if (!tune_policy) frozen = net.policy_params();
  run_training(net, pool, parts.shadow_train, parts.shadow_test, cfg, tune_main, tune_policy, log,
               frozen.empty() ? nullptr : &frozen, "finetune_shadow");
}

float evaluate_accuracy(DynamicNet& net, const Pool& pool, std::span<const uint32_t> indices) {
  if (indices.empty()) throw EmptySet("evaluate_accuracy: empty index set");
  size_t correct = 0;
  std::vector<int32_t> labels;
  constexpr size_t kBatch = 256;
  for (size_t start = 0; start < indices.size(); start += kBatch) {
    const size_t n = std::min(kBatch, indices.size() - start);
    Mat x = make_batch(pool, {indices.data() + start, n}, &labels);
    Mat logits = net.forward(x).logits;
    for (size_t i = 0; i < n; ++i) {
      Eigen::Index arg;
      logits.row(i).maxCoeff(&arg);
      correct += arg == labels[i];
    }
  }
  return static_cast<float>(correct) / indices.size();
}

}  // namespace dynmia
