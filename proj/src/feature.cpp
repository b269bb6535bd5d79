#include "dynmia/feature.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dynmia/error.hpp"
#include "dynmia/textio.hpp"
#include "dynmia/trainer.hpp"

namespace dynmia {

FeatureFile extract_features(DynamicNet& net, const Pool& pool, std::span<const uint32_t> indices,
                             int membership_label, ExtractFlags flags,
                             const std::string& model_id) {
  if (membership_label != 0 && membership_label != 1)
    throw InvalidSpec("membership_label must be 0 or 1");
  if ((flags.with_gradients || flags.with_activations) && pool.labels.empty())
    throw MissingLabels("gradient/activation extraction needs true labels");

  FeatureFile file;
  file.model_id = model_id;
  file.gate_dim = net.gate_dim();
  file.num_classes = net.num_classes();
  file.with_activations = flags.with_activations;
  file.with_gradients = flags.with_gradients;

  std::vector<int32_t> labels;
  constexpr size_t kBatch = 256;
  for (size_t start = 0; start < indices.size(); start += kBatch) {
    const size_t n = std::min(kBatch, indices.size() - start);
    Mat x = make_batch(pool, {indices.data() + start, n}, &labels);
    auto fr = net.forward(x, GateMode::kHard);
    Mat act, grad;
    if (flags.with_gradients || flags.with_activations)
      net.extract_last_conv(x, labels, &act, &grad);
    for (size_t i = 0; i < n; ++i) {
      FeatureRecord rec;
      rec.sample_id = indices[start + i];
      rec.membership = membership_label;
      rec.control_flow.assign(fr.gates.row(i).data(), fr.gates.row(i).data() + fr.gates.cols());
      for (float g : rec.control_flow)
        if (g != 0.f && g != 1.f) throw Error("relaxed gate leaked into feature extraction");
      rec.logits.assign(fr.logits.row(i).data(), fr.logits.row(i).data() + fr.logits.cols());
      if (flags.with_activations)
        rec.activation.emplace(act.row(i).data(), act.row(i).data() + act.cols());
      if (flags.with_gradients)
        rec.gradient.emplace(grad.row(i).data(), grad.row(i).data() + grad.cols());
      file.records.push_back(std::move(rec));
    }
  }
  return file;
}

namespace {

void write_floats(std::ostream& os, const std::vector<float>& v) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << format_float(v[i]);
  }
}

std::vector<float> parse_floats(std::string_view s) {
  std::vector<float> out;
  for (auto tok : split(s, ',')) out.push_back(parse_float(tok));
  return out;
}

std::string_view field(std::string_view token, std::string_view key) {
  if (token.size() < key.size() + 1 || token.substr(0, key.size()) != key || token[key.size()] != '=')
    throw CorruptRecord("expected field '" + std::string(key) + "', got '" + std::string(token) + "'");
  return token.substr(key.size() + 1);
}

}  // namespace

void write_features(const FeatureFile& file, const std::string& path) {
  std::ostringstream os;
  os << "dynmia-features v1\n";
  os << "model " << file.model_id << " gate_dim " << file.gate_dim << " classes "
     << file.num_classes << " act " << int(file.with_activations) << " grad "
     << int(file.with_gradients) << " fingerprint " << file.fingerprint << " count "
     << file.records.size() << '\n';
  for (const auto& rec : file.records) {
    os << "id=" << rec.sample_id << " cf=";
    for (float g : rec.control_flow) os << (g != 0.f ? '1' : '0');
    os << " logits=";
    write_floats(os, rec.logits);
    if (rec.activation) {
      os << " act=";
      write_floats(os, *rec.activation);
    }
    if (rec.gradient) {
      os << " grad=";
      write_floats(os, *rec.gradient);
    }
    os << " y=" << rec.membership << '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot open for write: " + tmp);
    f << os.str();
    if (!f) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

FeatureFile read_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("feature file not found: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "dynmia-features v1")
    throw VersionMismatch("bad feature file header in " + path);
  if (!std::getline(f, line)) throw CorruptRecord("missing feature header line in " + path);

  auto h = split(line, ' ');
  if (h.size() != 14 || h[0] != "model" || h[2] != "gate_dim" || h[4] != "classes" ||
      h[6] != "act" || h[8] != "grad" || h[10] != "fingerprint" || h[12] != "count")
    throw CorruptRecord("bad feature header '" + line + "' in " + path);
  FeatureFile file;
  file.model_id = std::string(h[1]);
  file.gate_dim = static_cast<int>(parse_u64(h[3]));
  file.num_classes = static_cast<int>(parse_u64(h[5]));
  file.with_activations = parse_u64(h[7]) != 0;
  file.with_gradients = parse_u64(h[9]) != 0;
  file.fingerprint = std::string(h[11]);
  const size_t count = parse_u64(h[13]);

  std::unordered_set<uint32_t> seen_ids;
  size_t act_dim = 0, grad_dim = 0;
  while (std::getline(f, line)) {
    if (line.empty()) throw CorruptRecord("empty record line in " + path);
    auto tokens = split(line, ' ');
    const size_t expected = 3u + file.with_activations + file.with_gradients + 1u;
    if (tokens.size() != expected) throw CorruptRecord("bad record '" + line + "' in " + path);

    FeatureRecord rec;
    size_t t = 0;
    rec.sample_id = static_cast<uint32_t>(parse_u64(field(tokens[t++], "id")));
    if (!seen_ids.insert(rec.sample_id).second)
      throw CorruptRecord("duplicate sample id " + std::to_string(rec.sample_id) + " in " + path);
    auto cf = field(tokens[t++], "cf");
    if (static_cast<int>(cf.size()) != file.gate_dim)
      throw CorruptRecord("control-flow length " + std::to_string(cf.size()) +
                          " does not match gate_dim " + std::to_string(file.gate_dim) + " in " + path);
    for (char c : cf) {
      if (c != '0' && c != '1') throw CorruptRecord("non-binary control-flow bit in " + path);
      rec.control_flow.push_back(c == '1' ? 1.f : 0.f);
    }
    rec.logits = parse_floats(field(tokens[t++], "logits"));
    if (static_cast<int>(rec.logits.size()) != file.num_classes)
      throw CorruptRecord("logit count mismatch in " + path);
    for (float v : rec.logits)
      if (!std::isfinite(v)) throw CorruptRecord("non-finite logit in " + path);
    if (file.with_activations) rec.activation = parse_floats(field(tokens[t++], "act"));
    if (file.with_gradients) rec.gradient = parse_floats(field(tokens[t++], "grad"));
    uint64_t y = parse_u64(field(tokens[t++], "y"));
    if (y > 1) throw CorruptRecord("membership label out of range in " + path);
    rec.membership = static_cast<int>(y);

    // dimensions must be identical across records
    if (rec.activation) {
      if (act_dim == 0) act_dim = rec.activation->size();
      if (rec.activation->size() != act_dim) throw CorruptRecord("activation dim varies in " + path);
    }
    if (rec.gradient) {
      if (grad_dim == 0) grad_dim = rec.gradient->size();
      if (rec.gradient->size() != grad_dim) throw CorruptRecord("gradient dim varies in " + path);
    }
    file.records.push_back(std::move(rec));
  }
  if (file.records.size() != count)
    throw CorruptRecord("expected " + std::to_string(count) + " records, found " +
                        std::to_string(file.records.size()) + " in " + path);
  return file;
}

}  // namespace dynmia
