#include "dynmia/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "dynmia/attack.hpp"
#include "dynmia/checkpoint.hpp"
#include "dynmia/defense.hpp"
#include "dynmia/error.hpp"
#include "dynmia/feature.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace fs = std::filesystem;

namespace dynmia {

namespace {

constexpr const char* kMainAttackIds[] = {"fusion", "logits-only", "gradient", "activation"};

bool is_variant_id(const std::string& id) {
  for (auto* v : kMainAttackIds)
    if (id == v) return true;
  return false;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::string s;
  std::getline(f, s);
  return s;
}

}  // namespace

RunLock::RunLock(const std::string& dir) : path_((fs::path(dir) / ".lock").string()) {
  fs::create_directories(dir);
  if (fs::exists(path_))
    throw Error("run already in progress (stale lock? remove " + path_ + ")");
  std::ofstream f(path_, std::ios::binary);
  f << "locked\n";
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Pipeline::Pipeline(ExperimentConfig cfg, std::string out_dir, std::string data_root, bool force,
                   std::ostream* log)
    : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)), data_root_(std::move(data_root)),
      force_(force), log_(log) {
  cfg_.validate();
  fingerprint_ = config_fingerprint(cfg_);
  fs::create_directories(fs::path(out_dir_) / "logs");
}

std::string Pipeline::splits_path() const { return (fs::path(out_dir_) / "splits.txt").string(); }

std::string Pipeline::model_path(const std::string& model_id) const {
  return (fs::path(out_dir_) / (model_id + ".ckpt")).string();
}

std::string Pipeline::features_path(const std::string& model_id, const std::string& part) const {
  return (fs::path(out_dir_) / ("features-" + model_id + "-" + part + ".txt")).string();
}

std::string Pipeline::attack_path(const std::string& attack_id) const {
  return (fs::path(out_dir_) / ("attack-" + attack_id + ".ckpt")).string();
}

std::string Pipeline::scores_path(const std::string& attack_id) const {
  return (fs::path(out_dir_) / ("scores-" + attack_id + ".tsv")).string();
}

std::string Pipeline::report_path(const std::string& attack_id) const {
  return (fs::path(out_dir_) / ("report-" + attack_id + ".txt")).string();
}

std::string Pipeline::log_path(const std::string& stage) const {
  return (fs::path(out_dir_) / "logs" / (stage + ".log")).string();
}

void Pipeline::require(const std::string& path, const std::string& producer_stage) const {
  if (!fs::exists(path))
    throw MissingArtifact("missing " + path + "; run stage '" + producer_stage + "' first");
}

void Pipeline::check_fingerprint(const std::string& found, const std::string& path) const {
  if (found != fingerprint_)
    throw ConfigFingerprintMismatch(path + " was produced under config " + found +
                                    ", current config is " + fingerprint_);
}

bool Pipeline::done(const std::string& path) const { return !force_ && fs::exists(path); }

void Pipeline::note(const std::string& msg) const {
  if (log_) (*log_) << msg << '\n';
}

static void write_sidecar(const std::string& path, const std::string& fingerprint) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << fingerprint << '\n';
}

void Pipeline::prepare() {
  if (done(splits_path())) {
    check_fingerprint(read_text_file(splits_path() + ".fpr"), splits_path());
    note("[prepare] splits exist, skipping");
    return;
  }
  Pool pool = load_pool(cfg_.dataset, data_root_);
  SplitSpec spec = cfg_.split_spec();
  DataPartitions parts = make_partitions(spec, pool.size());
  write_manifest(parts, spec.seed, splits_path());
  write_sidecar(splits_path() + ".fpr", fingerprint_);
  note("[prepare] wrote " + splits_path());
}

namespace {

DataPartitions shadow_as_target(const DataPartitions& parts) {
  DataPartitions p;
  p.target_train = parts.shadow_train;
  p.target_test = parts.shadow_test;
  return p;
}

}  // namespace

void Pipeline::train_target() {
  if (done(model_path("target"))) {
    note("[train-target] checkpoint exists, skipping");
    return;
  }
  require(splits_path(), "prepare");
  check_fingerprint(read_text_file(splits_path() + ".fpr"), splits_path());
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  DynamicNet net(cfg_.model_config(pool.num_classes));
  TrainConfig t = cfg_.target_train;
  t.seed = stage_seed(cfg_.seed, "train-target");
  std::ofstream log(log_path("train-target"), std::ios::binary);
  dynmia::train_target(net, pool, manifest.parts, t, &log);
  const float train_acc = evaluate_accuracy(net, pool, manifest.parts.target_train);
  const float test_acc = evaluate_accuracy(net, pool, manifest.parts.target_test);
  save_model(net, "target",
             {{"fingerprint", fingerprint_},
              {"train_acc", format_float(train_acc)},
              {"test_acc", format_float(test_acc)}},
             model_path("target"));
  note("[train-target] train_acc=" + format_float(train_acc) +
       " test_acc=" + format_float(test_acc));
}

void Pipeline::run_shadow() {
  if (done(model_path("shadow"))) {
    note("[shadow] checkpoint exists, skipping");
    return;
  }
  require(model_path("target"), "train-target");
  Checkpoint header;
  auto net = load_model(model_path("target"), &header);
  check_fingerprint(header.get("fingerprint"), model_path("target"));
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  TrainConfig t = cfg_.shadow_train;
  t.seed = stage_seed(cfg_.seed, "shadow");
  std::ofstream log(log_path("shadow"), std::ios::binary);
  finetune_shadow(*net, pool, manifest.parts, cfg_.shadow_mode, t, &log);
  save_model(*net, "shadow",
             {{"fingerprint", fingerprint_},
              {"mode", finetune_mode_name(cfg_.shadow_mode)},
              {"base", "target"}},
             model_path("shadow"));
  note(std::string("[shadow] fine-tuned (") + finetune_mode_name(cfg_.shadow_mode) + ")");
}

void Pipeline::run_baseline_shadow() {
  if (done(model_path("baseline-shadow"))) {
    note("[baseline-shadow] checkpoint exists, skipping");
    return;
  }
  require(splits_path(), "prepare");
  check_fingerprint(read_text_file(splits_path() + ".fpr"), splits_path());
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  DynamicNetConfig mc = cfg_.model_config(pool.num_classes);
  mc.seed = stage_seed(cfg_.seed, "baseline-model");
  DynamicNet net(mc);
  TrainConfig t = cfg_.target_train;
  t.seed = stage_seed(cfg_.seed, "baseline");
  std::ofstream log(log_path("baseline-shadow"), std::ios::binary);
  DataPartitions swapped = shadow_as_target(manifest.parts);
  dynmia::train_target(net, pool, swapped, t, &log);
  save_model(net, "baseline-shadow", {{"fingerprint", fingerprint_}, {"base", "scratch"}},
             model_path("baseline-shadow"));
  note("[baseline-shadow] trained from scratch");
}

void Pipeline::run_defense() {
  if (done(model_path("defended")) && done(model_path("defended-shadow"))) {
    note("[defend] checkpoints exist, skipping");
    return;
  }
  require(splits_path(), "prepare");
  check_fingerprint(read_text_file(splits_path() + ".fpr"), splits_path());
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  if (force_ || !fs::exists(model_path("defended"))) {
    DynamicNetConfig mc = cfg_.model_config(pool.num_classes);
    mc.seed = stage_seed(cfg_.seed, "defense-model");
    DynamicNet net(mc);
    DefenseConfig d = cfg_.defense;
    d.seed = stage_seed(cfg_.seed, "defense");
    d.train = cfg_.target_train;
    d.train.seed = d.seed;
    auto leftovers = leftover_indices(manifest.parts, pool.size());
    std::ofstream log(log_path("defend"), std::ios::binary);
    train_defended_target(net, pool, manifest.parts, leftovers, d, &log);
    const float train_acc = evaluate_accuracy(net, pool, manifest.parts.target_train);
    const float test_acc = evaluate_accuracy(net, pool, manifest.parts.target_test);
    save_model(net, "defended",
               {{"fingerprint", fingerprint_},
                {"lambda", format_float(d.lambda)},
                {"train_acc", format_float(train_acc)},
                {"test_acc", format_float(test_acc)}},
               model_path("defended"));
    note("[defend] train_acc=" + format_float(train_acc) + " test_acc=" + format_float(test_acc));
  }
  if (force_ || !fs::exists(model_path("defended-shadow"))) {
    Checkpoint header;
    auto net = load_model(model_path("defended"), &header);
    check_fingerprint(header.get("fingerprint"), model_path("defended"));
    TrainConfig t = cfg_.shadow_train;
    t.seed = stage_seed(cfg_.seed, "defended-shadow");
    std::ofstream log(log_path("defended-shadow"), std::ios::binary);
    finetune_shadow(*net, pool, manifest.parts, cfg_.shadow_mode, t, &log);
    save_model(*net, "defended-shadow",
               {{"fingerprint", fingerprint_},
                {"mode", finetune_mode_name(cfg_.shadow_mode)},
                {"base", "defended"}},
               model_path("defended-shadow"));
    note("[defend] defended shadow fine-tuned");
  }
}

void Pipeline::extract(const std::string& model_id) {
  if (model_id != "target" && model_id != "shadow" && model_id != "baseline-shadow" &&
      model_id != "defended" && model_id != "defended-shadow")
    throw InvalidSpec("unknown model id '" + model_id + "'");
  const std::string mem_path = features_path(model_id, "members");
  const std::string non_path = features_path(model_id, "nonmembers");
  if (done(mem_path) && done(non_path)) {
    note("[extract " + model_id + "] features exist, skipping");
    return;
  }
  const std::string producer = model_id == "target"            ? "train-target"
                               : model_id == "shadow"          ? "shadow"
                               : model_id == "baseline-shadow" ? "baseline-shadow"
                                                               : "defend";
  require(model_path(model_id), producer);
  Checkpoint header;
  auto net = load_model(model_path(model_id), &header);
  check_fingerprint(header.get("fingerprint"), model_path(model_id));
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  // shadow-side models are featurized on the shadow splits (attack
  // training data), target-side models on the target splits (evaluation).
  const bool shadow_side = model_id == "shadow" || model_id == "baseline-shadow" ||
                           model_id == "defended-shadow";
  const auto& members = shadow_side ? manifest.parts.shadow_train : manifest.parts.target_train;
  const auto& nonmembers = shadow_side ? manifest.parts.shadow_test : manifest.parts.target_test;
  ExtractFlags flags{.with_gradients = true, .with_activations = true};
  FeatureFile fm = extract_features(*net, pool, members, 1, flags, model_id);
  FeatureFile fn = extract_features(*net, pool, nonmembers, 0, flags, model_id);
  fm.fingerprint = fingerprint_;
  fn.fingerprint = fingerprint_;
  write_features(fm, mem_path);
  write_features(fn, non_path);
  note("[extract " + model_id + "] " + std::to_string(fm.records.size()) + "+" +
       std::to_string(fn.records.size()) + " records");
}

namespace {

// attack_id -> (variant, shadow-side model whose features train it,
//               target-side model whose features it is evaluated on)
struct AttackPlanEntry {
  AttackVariant variant;
  const char* train_model;
  const char* eval_model;
};

AttackPlanEntry attack_plan(const ExperimentConfig& cfg, const std::string& attack_id) {
  if (is_variant_id(attack_id))
    return {parse_attack_variant(attack_id), "shadow", "target"};
  if (attack_id == "baseline") return {AttackVariant::kLogitsOnly, "baseline-shadow", "target"};
  if (attack_id == "defended") return {cfg.attack_variant, "defended-shadow", "defended"};
  throw InvalidSpec("unknown attack id '" + attack_id + "'");
}

}  // namespace

void Pipeline::run_attack(const std::string& attack_id) {
  if (done(attack_path(attack_id))) {
    note("[attack " + attack_id + "] checkpoint exists, skipping");
    return;
  }
  auto plan = attack_plan(cfg_, attack_id);
  const std::string producer = std::string("extract ") + plan.train_model;
  require(features_path(plan.train_model, "members"), producer);
  require(features_path(plan.train_model, "nonmembers"), producer);
  FeatureFile members = read_features(features_path(plan.train_model, "members"));
  FeatureFile nonmembers = read_features(features_path(plan.train_model, "nonmembers"));
  check_fingerprint(members.fingerprint, features_path(plan.train_model, "members"));
  check_fingerprint(nonmembers.fingerprint, features_path(plan.train_model, "nonmembers"));
  AttackTrainConfig at = cfg_.attack;
  at.seed = stage_seed(cfg_.seed, "attack/" + attack_id);
  std::ofstream log(log_path("attack-" + attack_id), std::ios::binary);
  AttackModel model = train_attack(members, nonmembers, plan.variant, at, &log);
  Checkpoint ckpt = attack_to_checkpoint(model);
  ckpt.set("fingerprint", fingerprint_);
  ckpt.set("attack_id", attack_id);
  write_checkpoint(ckpt, attack_path(attack_id));
  note("[attack " + attack_id + "] trained (" + attack_variant_name(plan.variant) + ")");
}

EvalReport Pipeline::run_eval(const std::string& attack_id) {
  auto plan = attack_plan(cfg_, attack_id);
  require(attack_path(attack_id), "attack " + attack_id);
  Checkpoint ckpt = read_checkpoint(attack_path(attack_id));
  check_fingerprint(ckpt.get("fingerprint"), attack_path(attack_id));
  AttackModel model = attack_from_checkpoint(ckpt);
  const std::string producer = std::string("extract ") + plan.eval_model;
  require(features_path(plan.eval_model, "members"), producer);
  require(features_path(plan.eval_model, "nonmembers"), producer);
  FeatureFile members = read_features(features_path(plan.eval_model, "members"));
  FeatureFile nonmembers = read_features(features_path(plan.eval_model, "nonmembers"));
  check_fingerprint(members.fingerprint, features_path(plan.eval_model, "members"));
  check_fingerprint(nonmembers.fingerprint, features_path(plan.eval_model, "nonmembers"));

  std::vector<uint32_t> mids, nids;
  std::unordered_map<uint32_t, const FeatureRecord*> index;
  for (const auto& r : members.records) {
    mids.push_back(r.sample_id);
    index[r.sample_id] = &r;
  }
  for (const auto& r : nonmembers.records) {
    nids.push_back(r.sample_id);
    index[r.sample_id] = &r;
  }
  const uint64_t eval_seed = stage_seed(cfg_.seed, "eval/" + attack_id);
  auto [sel_m, sel_n] = balanced_sample(mids, nids, eval_seed);
  std::vector<ScoredRecord> scored;
  for (int truth : {1, 0})
    for (uint32_t id : truth ? sel_m : sel_n) {
      const FeatureRecord* rec = index.at(id);
      const float s = model.score(*rec);
      scored.push_back({id, s, s >= 0.5f, truth != 0});
    }
  EvalReport report = compute_metrics(scored);
  report.seed = eval_seed;
  report.fingerprint = fingerprint_;
  write_scores(scored, scores_path(attack_id));
  write_report(report, report_path(attack_id));
  note("[eval " + attack_id + "] asr=" + std::to_string(report.asr));
  return report;
}

std::pair<float, float> Pipeline::model_accuracy(const std::string& model_id) {
  require(model_path(model_id), model_id);
  Checkpoint header;
  auto net = load_model(model_path(model_id), &header);
  check_fingerprint(header.get("fingerprint"), model_path(model_id));
  Pool pool = load_pool(cfg_.dataset, data_root_);
  auto manifest = read_manifest(splits_path());
  return {evaluate_accuracy(*net, pool, manifest.parts.target_train),
          evaluate_accuracy(*net, pool, manifest.parts.target_test)};
}

std::map<std::string, EvalReport> Pipeline::run_all(std::ostream& summary) {
  RunLock lock(out_dir_);
  prepare();
  train_target();
  run_shadow();
  extract("shadow");
  extract("target");
  const std::string main_id = attack_variant_name(cfg_.attack_variant);
  run_attack(main_id);
  std::map<std::string, EvalReport> reports;
  reports[main_id] = run_eval(main_id);

  run_baseline_shadow();
  extract("baseline-shadow");
  run_attack("baseline");
  reports["baseline"] = run_eval("baseline");

  if (cfg_.defense_enabled) {
    run_defense();
    extract("defended-shadow");
    extract("defended");
    run_attack("defended");
    reports["defended"] = run_eval("defended");
  }

  std::vector<std::pair<std::string, EvalReport>> rows(reports.begin(), reports.end());
  const std::string table = comparison_table(rows);
  {
    std::ofstream f((fs::path(out_dir_) / "comparison.txt").string(), std::ios::binary);
    f << table;
  }
  write_comparison_svg(rows, (fs::path(out_dir_) / "comparison.svg").string());

  for (const auto& [id, r] : reports) {
    summary << "RESULT attack=" << id << " fingerprint=" << fingerprint_ << " asr=" << r.asr
            << " precision=";
    if (r.precision)
      summary << *r.precision;
    else
      summary << "null";
    summary << " recall=" << r.recall << '\n';
  }
  return reports;
}

}  // namespace dynmia
