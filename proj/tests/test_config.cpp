#include <doctest.h>

#include <cctype>
#include <filesystem>
#include <fstream>

#include "dynmia/config.hpp"
#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"

using namespace dynmia;
namespace fs = std::filesystem;

TEST_CASE("defaults form a valid, stable configuration") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.target_train.epochs == 40);
  CHECK(cfg.shadow_train.epochs == 15);
  CHECK(cfg.shadow_train.lr_init == doctest::Approx(0.002f));
  CHECK(cfg.shadow_mode == FinetuneMode::kBoth);
  CHECK(cfg.attack_variant == AttackVariant::kFusion);
  CHECK_FALSE(cfg.defense_enabled);

  // the canonical text parses back to an identical fingerprint
  ExperimentConfig back = parse_config(canonical_text(cfg));
  CHECK(canonical_text(back) == canonical_text(cfg));
  CHECK(config_fingerprint(back) == config_fingerprint(cfg));
}

TEST_CASE("fingerprints are 16 lowercase hex chars and key-order independent") {
  ExperimentConfig cfg;
  const std::string fp = config_fingerprint(cfg);
  CHECK(fp.size() == 16);
  for (char c : fp) CHECK((std::isdigit(c) || (c >= 'a' && c <= 'f')));

  // same settings written in a different order fingerprint identically
  ExperimentConfig a = parse_config("seed=9\ntrain.epochs=3\nmodel.stem_stride=1\n");
  ExperimentConfig b = parse_config("model.stem_stride=1\nseed=9\ntrain.epochs=3\n");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
}

TEST_CASE("every field participates in the fingerprint") {
  const std::string base = config_fingerprint(ExperimentConfig{});
  const char* overrides[] = {
      "seed=1",
      "dataset=synthetic-2class",
      "splits.n_target_train=5",
      "splits.n_target_test=5",
      "splits.n_shadow_train=5",
      "splits.n_shadow_test=5",
      "splits.overlap_fraction=0.5",
      "model.style=block-skipping",
      "model.gate_scope=all-stages",
      "model.stem_stride=1",
      "model.widths=8,8",
      "model.block_width=8",
      "model.n_blocks=2",
      "train.epochs=1",
      "train.optimizer=sgd",
      "train.lr_init=0.5",
      "train.lr_schedule=constant",
      "train.lr_floor=0",
      "train.batch_size=7",
      "shadow.mode=ft-policy",
      "shadow.epochs=1",
      "shadow.lr_init=0.5",
      "attack.variant=logits-only",
      "attack.epochs=3",
      "attack.lr=0.5",
      "attack.batch_size=9",
      "attack.softmax_inputs=true",
      "defense.enabled=true",
      "defense.lambda=2",
      "defense.inner_steps=3",
      "defense.epochs=5",
      "defense.joint_epochs=2",
      "defense.fusion_adversary=true",
  };
  for (const char* line : overrides) {
    CAPTURE(line);
    CHECK(config_fingerprint(parse_config(line + std::string("\n"))) != base);
  }
}

TEST_CASE("parsing tolerates comments, blank lines, and spacing") {
  ExperimentConfig cfg = parse_config(
      "# experiment settings\n"
      "\n"
      "  seed = 42   # trailing comment\n"
      "\tmodel.widths = 4,6,8\r\n"
      "dataset=synthetic-2class\n");
  CHECK(cfg.seed == 42);
  CHECK(cfg.widths == std::vector<int>{4, 6, 8});
  CHECK(cfg.dataset == "synthetic-2class");
}

TEST_CASE("malformed input is rejected with InvalidSpec") {
  CHECK_THROWS_AS(parse_config("nonsense.key=1\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("seed 42\n"), InvalidSpec);       // missing '='
  CHECK_THROWS_AS(parse_config("train.epochs=abc\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("train.epochs=3x\n"), InvalidSpec);  // trailing junk
  CHECK_THROWS_AS(parse_config("model.style=maybe\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("model.gate_scope=somewhere\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("shadow.mode=ft-everything\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("attack.variant=psychic\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("attack.softmax_inputs=yes\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("train.optimizer=rmsprop\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("train.lr_schedule=step\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("model.widths=\n"), InvalidSpec);
}

TEST_CASE("validate rejects out-of-range settings") {
  CHECK_THROWS_AS(parse_config("splits.n_target_train=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("splits.overlap_fraction=1.5\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("splits.overlap_fraction=-0.1\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("model.stem_stride=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("model.widths=4,-2\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("model.n_blocks=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("train.epochs=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("attack.lr=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("defense.lambda=-1\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("defense.inner_steps=0\n"), InvalidSpec);
  CHECK_THROWS_AS(parse_config("defense.epochs=0\n"), InvalidSpec);
}

TEST_CASE("derived specs use distinct stage seeds") {
  ExperimentConfig cfg;
  cfg.seed = 5;
  SplitSpec s = cfg.split_spec();
  CHECK(s.dataset_name == cfg.dataset);
  CHECK(s.n_target_train == cfg.n_target_train);
  CHECK(s.seed == stage_seed(5, "splits"));

  DynamicNetConfig m = cfg.model_config(10);
  CHECK(m.num_classes == 10);
  CHECK(m.widths == cfg.widths);
  CHECK(m.seed == stage_seed(5, "model"));
  CHECK(m.seed != s.seed);
}

TEST_CASE("enum names round-trip") {
  for (GateStyle s : {GateStyle::kChannelGating, GateStyle::kBlockSkipping})
    CHECK(parse_gate_style(gate_style_name(s)) == s);
  for (GateScope s : {GateScope::kLastStage, GateScope::kAllStages})
    CHECK(parse_gate_scope(gate_scope_name(s)) == s);
  for (AttackVariant v : {AttackVariant::kFusion, AttackVariant::kLogitsOnly,
                          AttackVariant::kGradient, AttackVariant::kActivation})
    CHECK(parse_attack_variant(attack_variant_name(v)) == v);
}

TEST_CASE("load_config reads from disk and reports a missing file") {
  const fs::path path = fs::temp_directory_path() / "dynmia_config_test.cfg";
  {
    std::ofstream f(path);
    f << "seed=11\nmodel.style=block-skipping\n";
  }
  ExperimentConfig cfg = load_config(path.string());
  CHECK(cfg.seed == 11);
  CHECK(cfg.style == GateStyle::kBlockSkipping);
  fs::remove(path);
  CHECK_THROWS_AS(load_config(path.string()), MissingArtifact);
}
