#include "dynmia/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

const char* attack_variant_name(AttackVariant v) {
  switch (v) {
    case AttackVariant::kFusion: return "fusion";
    case AttackVariant::kLogitsOnly: return "logits-only";
    case AttackVariant::kGradient: return "gradient";
    case AttackVariant::kActivation: return "activation";
  }
  return "?";
}

AttackVariant parse_attack_variant(const std::string& name) {
  if (name == "fusion") return AttackVariant::kFusion;
  if (name == "logits-only") return AttackVariant::kLogitsOnly;
  if (name == "gradient") return AttackVariant::kGradient;
  if (name == "activation") return AttackVariant::kActivation;
  throw InvalidSpec("unknown attack variant: " + name);
}

AttackModel::AttackModel(AttackVariant variant, int branch1_dim, int num_classes, uint64_t seed,
                         bool softmax_inputs)
    : variant_(variant), branch1_dim_(branch1_dim), num_classes_(num_classes),
      softmax_inputs_(softmax_inputs) {
  Rng rng(stage_seed(seed, "attack/init"));
  const bool has_b1 = variant != AttackVariant::kLogitsOnly;
  if (has_b1) {
    if (branch1_dim < 1) throw InvalidSpec("branch1 input dimension must be >= 1");
    branch1_.add(std::make_unique<Linear>(branch1_dim, 128, rng));
    branch1_.add(std::make_unique<Relu>(128));
    branch1_.add(std::make_unique<Linear>(128, 64, rng));
    branch1_.add(std::make_unique<Relu>(64));
    branch1_.add(std::make_unique<Linear>(64, kBottleneck, rng));
    branch1_.add(std::make_unique<Relu>(kBottleneck));
  }
  const int in2 = num_classes + (has_b1 ? kBottleneck : 0);
  branch2_.add(std::make_unique<Linear>(in2, 128, rng));
  branch2_.add(std::make_unique<Relu>(128));
  branch2_.add(std::make_unique<Linear>(128, 64, rng));
  branch2_.add(std::make_unique<Relu>(64));
  branch2_.add(std::make_unique<Linear>(64, 1, rng));
}

Mat AttackModel::forward_logit(const Mat& branch1_in, const Mat& logits, bool train) {
  if (logits.cols() != num_classes_)
    throw DimensionMismatch("attack model expects " + std::to_string(num_classes_) +
                            " class logits, got " + std::to_string(logits.cols()));
  Mat in2;
  Mat lg = softmax_inputs_ ? softmax(logits) : logits;
  if (softmax_inputs_ && train) probs_ = lg;
  if (variant_ != AttackVariant::kLogitsOnly) {
    if (branch1_in.cols() != branch1_dim_ || branch1_in.rows() != logits.rows())
      throw DimensionMismatch("attack branch1 expects " + std::to_string(branch1_dim_) +
                              " inputs, got " + std::to_string(branch1_in.cols()));
    Mat z1 = branch1_.forward(branch1_in, train);
    in2.resize(logits.rows(), num_classes_ + kBottleneck);
    in2 << lg, z1;
  } else {
    in2 = lg;
  }
  return branch2_.forward(in2, train);
}

Mat AttackModel::backward(const Mat& gout) {
  Mat g2 = branch2_.backward(gout);
  Mat dlg = g2.leftCols(num_classes_);
  if (variant_ != AttackVariant::kLogitsOnly)
    branch1_.backward(g2.rightCols(kBottleneck));
  if (softmax_inputs_) {
    // chain through the softmax: dz = p .* (g - <g, p>)
    Mat dz(dlg.rows(), dlg.cols());
    for (Eigen::Index i = 0; i < dlg.rows(); ++i) {
      const float dot = dlg.row(i).dot(probs_.row(i));
      dz.row(i) = probs_.row(i).cwiseProduct(dlg.row(i).array().matrix() -
                                             Eigen::RowVectorXf::Constant(dlg.cols(), dot));
    }
    return dz;
  }
  return dlg;
}

std::vector<Param> AttackModel::params() {
  std::vector<Param> out;
  if (variant_ != AttackVariant::kLogitsOnly) branch1_.collect_params("branch1", out);
  branch2_.collect_params("branch2", out);
  return out;
}

namespace {

constexpr float kScoreEps = 1e-7f;

const std::vector<float>* side_vector(const FeatureRecord& rec, AttackVariant variant) {
  switch (variant) {
    case AttackVariant::kFusion: return &rec.control_flow;
    case AttackVariant::kGradient:
      if (!rec.gradient) throw MissingFeature("record has no gradient vector");
      return &*rec.gradient;
    case AttackVariant::kActivation:
      if (!rec.activation) throw MissingFeature("record has no activation vector");
      return &*rec.activation;
    case AttackVariant::kLogitsOnly: return nullptr;
  }
  return nullptr;
}

}  // namespace

float AttackModel::score(const FeatureRecord& rec) {
  Mat lg(1, rec.logits.size());
  std::copy(rec.logits.begin(), rec.logits.end(), lg.data());
  Mat b1;
  if (const std::vector<float>* side = side_vector(rec, variant_)) {
    b1.resize(1, side->size());
    std::copy(side->begin(), side->end(), b1.data());
  }
  const float z = forward_logit(b1, lg, false)(0, 0);
  return std::clamp(sigmoidf(z), kScoreEps, 1.f - kScoreEps);
}

Eigen::VectorXf AttackModel::scores(const FeatureFile& file) {
  Mat b1, lg;
  attack_inputs(file, variant_, &b1, &lg);
  Mat z = forward_logit(b1, lg, false);
  Eigen::VectorXf out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out(i) = std::clamp(sigmoidf(z(i, 0)), kScoreEps, 1.f - kScoreEps);
  return out;
}

void attack_inputs(const FeatureFile& file, AttackVariant variant, Mat* branch1, Mat* logits) {
  const size_t n = file.records.size();
  if (logits) {
    logits->resize(n, file.num_classes);
    for (size_t i = 0; i < n; ++i)
      std::copy(file.records[i].logits.begin(), file.records[i].logits.end(),
                logits->row(i).data());
  }
  if (branch1) {
    if (variant == AttackVariant::kLogitsOnly) {
      branch1->resize(0, 0);
    } else {
      const size_t d = n ? side_vector(file.records[0], variant)->size() : 0;
      branch1->resize(n, d);
      for (size_t i = 0; i < n; ++i) {
        const std::vector<float>* side = side_vector(file.records[i], variant);
        if (side->size() != d) throw DimensionMismatch("inconsistent side-feature dimension");
        std::copy(side->begin(), side->end(), branch1->row(i).data());
      }
    }
  }
}

AttackModel train_attack(const FeatureFile& members, const FeatureFile& nonmembers,
                         AttackVariant variant, const AttackTrainConfig& cfg, std::ostream* log) {
  if (members.gate_dim != nonmembers.gate_dim || members.num_classes != nonmembers.num_classes)
    throw DimensionMismatch("member/non-member feature files disagree on dimensions");
  if (members.records.empty() || nonmembers.records.empty())
    throw SingleClassData("attack training needs both member and non-member records");

  Mat b1_m, lg_m, b1_n, lg_n;
  attack_inputs(members, variant, &b1_m, &lg_m);
  attack_inputs(nonmembers, variant, &b1_n, &lg_n);
  if (variant != AttackVariant::kLogitsOnly && b1_m.cols() != b1_n.cols())
    throw DimensionMismatch("member/non-member side-feature dimensions differ");

  const Eigen::Index n = lg_m.rows() + lg_n.rows();
  Mat b1(variant == AttackVariant::kLogitsOnly ? 0 : n,
         variant == AttackVariant::kLogitsOnly ? 0 : b1_m.cols());
  Mat lg(n, lg_m.cols());
  Eigen::VectorXf y(n);
  lg << lg_m, lg_n;
  if (b1.rows()) b1 << b1_m, b1_n;
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureRecord& rec = i < lg_m.rows()
                                   ? members.records[i]
                                   : nonmembers.records[i - lg_m.rows()];
    y(i) = static_cast<float>(rec.membership);
    (rec.membership ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw SingleClassData("attack training data contains a single class");

  AttackModel model(variant, static_cast<int>(b1.cols()), static_cast<int>(lg.cols()), cfg.seed,
                    cfg.softmax_inputs);
  auto params = model.params();
  Adam adam;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_eng(stage_seed(cfg.seed, "attack/shuffle"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    double loss_sum = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bn = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Mat bb1(b1.rows() ? bn : 0, b1.cols());
      Mat blg(bn, lg.cols());
      Eigen::VectorXf by(bn);
      for (Eigen::Index i = 0; i < bn; ++i) {
        blg.row(i) = lg.row(order[start + i]);
        if (b1.rows()) bb1.row(i) = b1.row(order[start + i]);
        by(i) = y(order[start + i]);
      }
      zero_grads(params);
      Mat z = model.forward_logit(bb1, blg, true);
      Mat dz;
      float loss = bce_with_logit(z, by, &dz);
      if (!std::isfinite(loss)) throw DivergedTraining("attack training diverged");
      model.backward(dz);
      adam.step(params, cfg.lr);
      loss_sum += static_cast<double>(loss) * bn;
    }
    if (log) (*log) << epoch << '\t' << format_float(static_cast<float>(loss_sum / n)) << '\n';
  }
  return model;
}

Checkpoint attack_to_checkpoint(AttackModel& model) {
  Checkpoint ckpt;
  ckpt.set("kind", "attack");
  ckpt.set("variant", attack_variant_name(model.variant()));
  ckpt.set("branch1_dim", std::to_string(model.branch1_dim()));
  ckpt.set("num_classes", std::to_string(model.num_classes()));
  ckpt.set("softmax_inputs", model.softmax_inputs() ? "1" : "0");
  for (auto& p : model.params()) ckpt.tensors.emplace_back(p.name, *p.value);
  return ckpt;
}

AttackModel attack_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.get("kind") != "attack") throw CorruptRecord("checkpoint is not an attack checkpoint");
  AttackModel model(parse_attack_variant(ckpt.get("variant")),
                    static_cast<int>(parse_u64(ckpt.get("branch1_dim"))),
                    static_cast<int>(parse_u64(ckpt.get("num_classes"))), 0,
                    ckpt.get("softmax_inputs") == "1");
  for (auto& p : model.params()) {
    const Mat& t = ckpt.tensor(p.name);
    if (t.rows() != p.value->rows() || t.cols() != p.value->cols())
      throw CorruptRecord("attack checkpoint tensor shape mismatch for '" + p.name + "'");
    *p.value = t;
  }
  return model;
}

}  // namespace dynmia
