#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dynmia/pipeline.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string data_root;
  std::string mode;
  std::string variant;
  std::string model_id;
  std::string attack_id;
  bool force = false;
  bool seed_set = false;
  uint64_t seed = 0;
};

dynmia::Pipeline make_pipeline(const CliArgs& a) {
  dynmia::ExperimentConfig cfg = dynmia::load_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.mode.empty()) cfg.shadow_mode = dynmia::parse_finetune_mode(a.mode);
  if (!a.variant.empty()) cfg.attack_variant = dynmia::parse_attack_variant(a.variant);
  std::string root = a.data_root;
  if (root.empty())
    if (const char* env = std::getenv("DYNMIA_DATA_ROOT")) root = env;
  return dynmia::Pipeline(std::move(cfg), a.out_dir, root, a.force, &std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynmia: membership inference against dynamic neural networks"};
  app.require_subcommand(1);

  CliArgs a;
  app.add_option("--config", a.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", a.out_dir, "output directory for run artifacts");
  app.add_option("--data-root", a.data_root, "dataset root (default: $DYNMIA_DATA_ROOT)");
  app.add_flag("--force", a.force, "recompute stages even if their outputs exist");
  auto* seed_opt = app.add_option("--seed", a.seed, "override the config seed");

  app.add_subcommand("prepare", "build and write the four-way data split");
  app.add_subcommand("train-target", "train the target dynamic network");
  auto* sc_shadow = app.add_subcommand("shadow", "fine-tune the shadow model from the target");
  sc_shadow->add_option("--mode", a.mode, "ft-policy | ft-main | ft-both");
  app.add_subcommand("baseline-shadow", "train the baseline shadow model from scratch");
  auto* sc_extract = app.add_subcommand("extract", "extract attack features for a model");
  sc_extract
      ->add_option("--model", a.model_id,
                   "target | shadow | baseline-shadow | defended | defended-shadow")
      ->required();
  auto* sc_attack = app.add_subcommand("attack", "train an attack model on shadow features");
  sc_attack->add_option("--variant", a.attack_id,
                        "fusion | logits-only | gradient | activation | baseline | defended");
  auto* sc_eval = app.add_subcommand("eval", "score target features and report ASR metrics");
  sc_eval->add_option("--variant", a.attack_id, "attack to evaluate (default: config variant)");
  app.add_subcommand("defend", "train the adversarially regularized target and its shadow");
  auto* sc_all = app.add_subcommand("run-all", "run the full experiment end to end");
  sc_all->add_option("--mode", a.mode, "shadow fine-tuning mode override");
  sc_all->add_option("--variant", a.variant, "main attack variant override");

  CLI11_PARSE(app, argc, argv);
  a.seed_set = seed_opt->count() > 0;

  try {
    dynmia::Pipeline p = make_pipeline(a);
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "prepare") p.prepare();
    else if (sub == "train-target") p.train_target();
    else if (sub == "shadow") p.run_shadow();
    else if (sub == "baseline-shadow") p.run_baseline_shadow();
    else if (sub == "extract") p.extract(a.model_id);
    else if (sub == "defend") p.run_defense();
    else if (sub == "attack") {
      dynmia::ExperimentConfig cfg = dynmia::load_config(a.config_path);
      p.run_attack(a.attack_id.empty() ? dynmia::attack_variant_name(cfg.attack_variant)
                                       : a.attack_id);
    } else if (sub == "eval") {
      dynmia::ExperimentConfig cfg = dynmia::load_config(a.config_path);
      const std::string id = a.attack_id.empty()
                                 ? dynmia::attack_variant_name(cfg.attack_variant)
                                 : a.attack_id;
      dynmia::EvalReport r = p.run_eval(id);
      std::cout << "RESULT attack=" << id << " fingerprint=" << p.fingerprint()
                << " asr=" << r.asr << " precision="
                << (r.precision ? std::to_string(*r.precision) : "null")
                << " recall=" << r.recall << '\n';
    } else if (sub == "run-all") {
      p.run_all(std::cout);
    }
    return 0;
  } catch (const dynmia::InvalidSpec& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const dynmia::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return 3;
  } catch (const dynmia::ConfigFingerprintMismatch& e) {
    std::cerr << "fingerprint mismatch: " << e.what() << '\n';
    return 3;
  } catch (const dynmia::DatasetNotFound& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return 4;
  } catch (const dynmia::CorruptData& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
