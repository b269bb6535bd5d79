#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dynmia/checkpoint.hpp"
#include "dynmia/error.hpp"

using namespace dynmia;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

DynamicNetConfig cfg_for(GateStyle style, uint64_t seed) {
  DynamicNetConfig cfg;
  cfg.style = style;
  cfg.num_classes = 4;
  cfg.in_h = 16;
  cfg.in_w = 16;
  cfg.stem_stride = 2;
  cfg.widths = {6, 8};
  cfg.block_width = 6;
  cfg.n_blocks = 2;
  cfg.seed = seed;
  return cfg;
}

Mat random_input(Rng& rng, int n = 3) {
  Mat x(n, 3 * 16 * 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("model checkpoints round-trip bitwise for both styles") {
  TempDir dir("dynmia_ckpt_roundtrip");
  for (GateStyle style : {GateStyle::kChannelGating, GateStyle::kBlockSkipping}) {
    DynamicNet net(cfg_for(style, 31));
    const std::string path = dir.file("model.ckpt");
    save_model(net, "m", {{"fingerprint", "abcd"}}, path);

    Checkpoint header;
    auto loaded = load_model(path, &header);
    CHECK(header.get("model_id") == "m");
    CHECK(header.get("fingerprint") == "abcd");
    CHECK(header.get("kind") == "model");

    auto pa = net.params(), pb = loaded->params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(*pa[i].value == *pb[i].value);
    }
    Rng rng(32);
    Mat x = random_input(rng);
    auto ya = net.forward(x), yb = loaded->forward(x);
    CHECK(ya.logits == yb.logits);
    CHECK(ya.gates == yb.gates);
  }
}

TEST_CASE("checkpoint writes are atomic (no stray temp file)") {
  TempDir dir("dynmia_ckpt_atomic");
  DynamicNet net(cfg_for(GateStyle::kChannelGating, 33));
  const std::string path = dir.file("model.ckpt");
  save_model(net, "m", {}, path);
  CHECK(fs::exists(path));
  CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("generic checkpoint container preserves field order and tensors") {
  TempDir dir("dynmia_ckpt_generic");
  Checkpoint ckpt;
  ckpt.set("kind", "attack");
  ckpt.set("note", "value with spaces");
  Mat t(2, 3);
  t << 1, 2, 3, 4, 5, 6;
  ckpt.tensors.emplace_back("w", t);
  const std::string path = dir.file("generic.ckpt");
  write_checkpoint(ckpt, path);

  Checkpoint back = read_checkpoint(path);
  CHECK(back.fields == ckpt.fields);
  CHECK(back.get("note") == "value with spaces");
  CHECK(back.tensor("w") == t);
  CHECK_THROWS_AS(back.tensor("missing"), CorruptRecord);
  CHECK_THROWS_AS(back.get("missing"), CorruptRecord);
  CHECK(back.find("missing") == nullptr);
}

TEST_CASE("corrupt checkpoints are rejected with precise errors") {
  TempDir dir("dynmia_ckpt_corrupt");
  CHECK_THROWS_AS(read_checkpoint(dir.file("absent.ckpt")), MissingArtifact);

  {
    std::ofstream f(dir.file("magic.ckpt"), std::ios::binary);
    f << "dynmia-ckpt v9\n";
  }
  CHECK_THROWS_AS(read_checkpoint(dir.file("magic.ckpt")), VersionMismatch);

  {
    std::ofstream f(dir.file("notensors.ckpt"), std::ios::binary);
    f << "dynmia-ckpt v1\nkind model\n";
  }
  CHECK_THROWS_AS(read_checkpoint(dir.file("notensors.ckpt")), CorruptRecord);

  {
    std::ofstream f(dir.file("truncated.ckpt"), std::ios::binary);
    f << "dynmia-ckpt v1\nkind model\ntensors 1\ntensor w 4 4\nxx";
  }
  CHECK_THROWS_AS(read_checkpoint(dir.file("truncated.ckpt")), CorruptRecord);
}

TEST_CASE("a tampered model checkpoint fails to rebuild") {
  TempDir dir("dynmia_ckpt_tamper");
  DynamicNet net(cfg_for(GateStyle::kChannelGating, 34));
  Checkpoint ckpt = model_to_checkpoint(net, "m");

  SUBCASE("missing tensor") {
    ckpt.tensors.pop_back();
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), CorruptRecord);
  }
  SUBCASE("renamed tensor") {
    ckpt.tensors.front().first = "main.stem.conv.weight_oops";
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), CorruptRecord);
  }
  SUBCASE("reshaped tensor") {
    ckpt.tensors.front().second = Mat::Zero(1, 1);
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), CorruptRecord);
  }
  SUBCASE("wrong kind") {
    ckpt.fields[0].second = "attack";
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), CorruptRecord);
  }
}
