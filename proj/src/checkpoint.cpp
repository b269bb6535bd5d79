#include "dynmia/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynmia/error.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

const std::string* Checkpoint::find(const std::string& key) const {
  for (auto& [k, v] : fields)
    if (k == key) return &v;
  return nullptr;
}

const std::string& Checkpoint::get(const std::string& key) const {
  if (const std::string* v = find(key)) return *v;
  throw CorruptRecord("checkpoint missing field '" + key + "'");
}

const Mat& Checkpoint::tensor(const std::string& name) const {
  for (auto& [n, t] : tensors)
    if (n == name) return t;
  throw CorruptRecord("checkpoint missing tensor '" + name + "'");
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot open for write: " + tmp);
    f << "dynmia-ckpt v1\n";
    for (auto& [k, v] : ckpt.fields) f << k << ' ' << v << '\n';
    f << "tensors " << ckpt.tensors.size() << '\n';
    for (auto& [name, t] : ckpt.tensors) {
      f << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
      f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!f) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("checkpoint not found: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "dynmia-ckpt v1")
    throw VersionMismatch("bad checkpoint header in " + path);

  Checkpoint ckpt;
  while (std::getline(f, line)) {
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw CorruptRecord("bad header line '" + line + "' in " + path);
    std::string key = line.substr(0, sp);
    std::string val = line.substr(sp + 1);
    if (key == "tensors") {
      size_t count = parse_u64(val);
      for (size_t i = 0; i < count; ++i) {
        if (!std::getline(f, line)) throw CorruptRecord("truncated checkpoint: " + path);
        auto fields = split(line, ' ');
        if (fields.size() != 4 || fields[0] != "tensor")
          throw CorruptRecord("bad tensor line '" + line + "' in " + path);
        Mat t(parse_u64(fields[2]), parse_u64(fields[3]));
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!f) throw CorruptRecord("truncated tensor data in " + path);
        ckpt.tensors.emplace_back(std::string(fields[1]), std::move(t));
      }
      return ckpt;
    }
    ckpt.fields.emplace_back(std::move(key), std::move(val));
  }
  throw CorruptRecord("checkpoint has no tensor section: " + path);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (auto tok : split(s, ',')) out.push_back(static_cast<int>(parse_u64(tok)));
  return out;
}

}  // namespace

Checkpoint model_to_checkpoint(DynamicNet& net, const std::string& model_id) {
  const DynamicNetConfig& c = net.config();
  Checkpoint ckpt;
  ckpt.set("kind", "model");
  ckpt.set("model_id", model_id);
  ckpt.set("style", c.style == GateStyle::kChannelGating ? "channel-gating" : "block-skipping");
  ckpt.set("num_classes", std::to_string(c.num_classes));
  ckpt.set("input", std::to_string(c.in_c) + "," + std::to_string(c.in_h) + "," + std::to_string(c.in_w));
  ckpt.set("stem_stride", std::to_string(c.stem_stride));
  ckpt.set("widths", join_ints(c.widths));
  ckpt.set("gate_scope", c.gate_scope == GateScope::kLastStage ? "last" : "all");
  ckpt.set("block_width", std::to_string(c.block_width));
  ckpt.set("n_blocks", std::to_string(c.n_blocks));
  ckpt.set("seed", std::to_string(c.seed));
  for (auto& p : net.params()) ckpt.tensors.emplace_back(p.name, *p.value);
  return ckpt;
}

std::unique_ptr<DynamicNet> model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.get("kind") != "model") throw CorruptRecord("checkpoint is not a model checkpoint");
  DynamicNetConfig c;
  c.style = ckpt.get("style") == "channel-gating" ? GateStyle::kChannelGating : GateStyle::kBlockSkipping;
  c.num_classes = static_cast<int>(parse_u64(ckpt.get("num_classes")));
  auto in = parse_ints(ckpt.get("input"));
  if (in.size() != 3) throw CorruptRecord("bad input dims in checkpoint");
  c.in_c = in[0];
  c.in_h = in[1];
  c.in_w = in[2];
  c.stem_stride = static_cast<int>(parse_u64(ckpt.get("stem_stride")));
  c.widths = parse_ints(ckpt.get("widths"));
  c.gate_scope = ckpt.get("gate_scope") == "all" ? GateScope::kAllStages : GateScope::kLastStage;
  c.block_width = static_cast<int>(parse_u64(ckpt.get("block_width")));
  c.n_blocks = static_cast<int>(parse_u64(ckpt.get("n_blocks")));
  c.seed = parse_u64(ckpt.get("seed"));

  auto net = std::make_unique<DynamicNet>(c);
  auto params = net->params();
  if (params.size() != ckpt.tensors.size())
    throw CorruptRecord("checkpoint tensor count mismatch");
  for (auto& p : params) {
    const Mat& t = ckpt.tensor(p.name);
    if (t.rows() != p.value->rows() || t.cols() != p.value->cols())
      throw CorruptRecord("checkpoint tensor shape mismatch for '" + p.name + "'");
    *p.value = t;
  }
  return net;
}

void save_model(DynamicNet& net, const std::string& model_id,
                const std::vector<std::pair<std::string, std::string>>& extra_fields,
                const std::string& path) {
  Checkpoint ckpt = model_to_checkpoint(net, model_id);
  // extra fields go before the tensors; keep kind first
  for (auto& [k, v] : extra_fields) ckpt.set(k, v);
  write_checkpoint(ckpt, path);
}

std::unique_ptr<DynamicNet> load_model(const std::string& path, Checkpoint* header) {
  Checkpoint ckpt = read_checkpoint(path);
  auto net = model_from_checkpoint(ckpt);
  if (header) {
    header->fields = ckpt.fields;
  }
  return net;
}

}  // namespace dynmia
