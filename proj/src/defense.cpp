#include "dynmia/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynmia/attack.hpp"
#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

std::vector<uint32_t> leftover_indices(const DataPartitions& parts, size_t pool_size) {
  std::vector<bool> used(pool_size, false);
  for (const auto* part : {&parts.target_train, &parts.target_test, &parts.shadow_train, &parts.shadow_test})
    for (uint32_t id : *part)
      if (id < pool_size) used[id] = true;
  std::vector<uint32_t> out;
  for (size_t i = 0; i < pool_size; ++i)
    if (!used[i]) out.push_back(static_cast<uint32_t>(i));
  return out;
}

namespace {

// Cyclic seeded sampler over the defender's non-member pool.
class PoolSampler {
 public:
  PoolSampler(std::span<const uint32_t> ids, uint64_t seed)
      : ids_(ids.begin(), ids.end()), eng_(seed) {
    std::shuffle(ids_.begin(), ids_.end(), eng_);
  }
  std::vector<uint32_t> next(size_t n) {
    std::vector<uint32_t> out;
    out.reserve(n);
    while (out.size() < n) {
      if (cursor_ == ids_.size()) {
        std::shuffle(ids_.begin(), ids_.end(), eng_);
        cursor_ = 0;
      }
      out.push_back(ids_[cursor_++]);
    }
    return out;
  }

 private:
  std::vector<uint32_t> ids_;
  std::mt19937_64 eng_;
  size_t cursor_ = 0;
};

struct MinimaxLoop {
  DynamicNet& net;
  const Pool& pool;
  const DefenseConfig& cfg;
  AttackModel& adv;
  std::vector<Param> adv_params;
  Adam adv_adam;
  PoolSampler nonmember_sampler;
  std::mt19937_64 shuffle_eng;
  std::vector<uint32_t> order;

  MinimaxLoop(DynamicNet& n, const Pool& p, const DataPartitions& parts,
              std::span<const uint32_t> defender_nonmembers, const DefenseConfig& c,
              AttackModel& a)
      : net(n), pool(p), cfg(c), adv(a), adv_params(a.params()),
        nonmember_sampler(defender_nonmembers, stage_seed(c.seed, "defense/nonmember")),
        shuffle_eng(stage_seed(c.seed, "defense/shuffle")),
        order(parts.target_train.begin(), parts.target_train.end()) {}

  // One phase of alternating min-max training. joint=false trains the
  // main network on all-ones gates; joint=true fine-tunes main+policy
  // with the straight-through estimator.
  void run(bool joint, int epochs, std::ostream* log, const char* phase) {
    std::vector<Param> tuned = net.main_params();
    if (joint) {
      auto p = net.policy_params();
      tuned.insert(tuned.end(), p.begin(), p.end());
    }
    Adam tgt_adam;
    std::vector<int32_t> labels, nm_labels;
    const Eigen::Index gdim = net.gate_dim();

    for (int epoch = 0; epoch < epochs; ++epoch) {
      const float lr = cosine_lr(cfg.train.lr_init, cfg.train.lr_floor, epoch, epochs);
      std::shuffle(order.begin(), order.end(), shuffle_eng);
      double loss_sum = 0, adv_correct = 0, adv_total = 0;
      size_t seen = 0;
      for (size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
        const size_t bn = std::min<size_t>(cfg.train.batch_size, order.size() - start);
        Mat x = make_batch(pool, {order.data() + start, bn}, &labels);
        const Mat ones = Mat::Ones(bn, gdim);

        // (a) inference-model updates on member vs held-out non-member features
        for (int s = 0; s < cfg.inner_steps; ++s) {
          auto nm_ids = nonmember_sampler.next(bn);
          Mat xn = make_batch(pool, nm_ids, &nm_labels);
          auto fm = joint ? net.forward(x) : net.forward_with_gates(x, ones);
          auto fn = joint ? net.forward(xn) : net.forward_with_gates(xn, ones);
          Mat lg(2 * bn, net.num_classes()), b1;
          lg << fm.logits, fn.logits;
          if (cfg.fusion_adversary) {
            b1.resize(2 * bn, gdim);
            b1 << fm.gates, fn.gates;
          }
          Eigen::VectorXf y(2 * bn);
          y.head(bn).setOnes();
          y.tail(bn).setZero();
          zero_grads(adv_params);
          Mat z = adv.forward_logit(b1, lg, true);
          Mat dz;
          float adv_loss = bce_with_logit(z, y, &dz);
          if (!std::isfinite(adv_loss)) throw DivergedTraining("defense adversary diverged");
          adv.backward(dz);
          adv_adam.step(adv_params, 0.001f);
          for (Eigen::Index i = 0; i < z.rows(); ++i)
            adv_correct += (z(i, 0) >= 0.f) == (y(i) > 0.5f);
          adv_total += static_cast<double>(z.rows());
        }

        // (b) target update: task loss + lambda * member inference gain
        auto fr = joint ? net.forward(x, GateMode::kHardSte, true, true)
                        : net.forward_with_gates(x, ones, true);
        Mat dl;
        float loss = softmax_ce(fr.logits, labels, &dl);
        if (!std::isfinite(loss)) throw DivergedTraining(std::string(phase) + ": non-finite loss");
        {
          zero_grads(adv_params);  // coupling pass only; discard adversary grads
          Mat b1 = cfg.fusion_adversary ? fr.gates : Mat();
          Mat z = adv.forward_logit(b1, fr.logits, true);
          // d/dz of lambda * mean(log sigmoid(z))
          Mat dz(z.rows(), 1);
          for (Eigen::Index i = 0; i < z.rows(); ++i)
            dz(i, 0) = cfg.lambda * (1.f - sigmoidf(z(i, 0))) / static_cast<float>(z.rows());
          dl += adv.backward(dz);
        }
        zero_grads(net.params());
        net.backward_from_logits(dl, joint);
        tgt_adam.step(tuned, lr);
        loss_sum += static_cast<double>(loss) * bn;
        seen += bn;
      }
      if (log)
        (*log) << phase << '\t' << epoch << '\t'
               << format_float(static_cast<float>(loss_sum / seen)) << '\t'
               << format_float(static_cast<float>(adv_correct / std::max(adv_total, 1.0))) << '\t'
               << format_float(lr) << '\n';
    }
  }
};

}  // namespace

void train_defended_target(DynamicNet& net, const Pool& pool, const DataPartitions& parts,
                           std::span<const uint32_t> defender_nonmembers, const DefenseConfig& cfg,
                           std::ostream* log) {
  if (cfg.lambda < 0.f) throw InvalidSpec("defense lambda must be >= 0");
  if (cfg.inner_steps < 1) throw InvalidSpec("defense inner_steps must be >= 1");
  if (parts.target_train.empty()) throw EmptySet("defense training set is empty");
  cfg.train.validate();

  if (cfg.lambda == 0.f) {
    // regularizer off: identical trajectory to the undefended target
    TrainConfig t = cfg.train;
    t.epochs = cfg.epochs;
    train_target(net, pool, parts, t, log);
    return;
  }
  if (defender_nonmembers.empty())
    throw EmptySet("defense needs a defender-private non-member pool");

  AttackModel adv(cfg.fusion_adversary ? AttackVariant::kFusion : AttackVariant::kLogitsOnly,
                  net.gate_dim(), net.num_classes(), stage_seed(cfg.seed, "defense/adversary"));
  MinimaxLoop loop(net, pool, parts, defender_nonmembers, cfg, adv);
  loop.run(false, cfg.epochs, log, "main");
  const int joint = cfg.joint_epochs > 0 ? cfg.joint_epochs : std::max(1, cfg.epochs / 4);
  loop.run(true, joint, log, "joint");
}

}  // namespace dynmia
