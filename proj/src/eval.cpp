#include "dynmia/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

std::pair<std::vector<uint32_t>, std::vector<uint32_t>> balanced_sample(
    std::span<const uint32_t> member_ids, std::span<const uint32_t> nonmember_ids, uint64_t seed) {
  if (member_ids.empty() || nonmember_ids.empty())
    throw EmptySet("balanced_sample: both id sets must be non-empty");
  std::vector<uint32_t> m(member_ids.begin(), member_ids.end());
  std::vector<uint32_t> nm(nonmember_ids.begin(), nonmember_ids.end());
  std::mt19937_64 eng_m(stage_seed(seed, "eval/balance-members"));
  std::mt19937_64 eng_n(stage_seed(seed, "eval/balance-nonmembers"));
  std::shuffle(m.begin(), m.end(), eng_m);
  std::shuffle(nm.begin(), nm.end(), eng_n);
  const size_t k = std::min(m.size(), nm.size());
  m.resize(k);
  nm.resize(k);
  return {std::move(m), std::move(nm)};
}

EvalReport compute_metrics(std::span<const ScoredRecord> scored) {
  if (scored.empty()) throw EmptySet("compute_metrics: no scored records");
  EvalReport r;
  for (const auto& s : scored) {
    if (s.truth) {
      ++r.n_members;
      (s.decision ? r.counts.tp : r.counts.fn)++;
    } else {
      ++r.n_nonmembers;
      (s.decision ? r.counts.fp : r.counts.tn)++;
    }
  }
  if (r.n_members != r.n_nonmembers)
    throw UnbalancedInput("compute_metrics: " + std::to_string(r.n_members) + " members vs " +
                          std::to_string(r.n_nonmembers) + " non-members");
  r.asr = static_cast<double>(r.counts.tp + r.counts.tn) / static_cast<double>(r.counts.total());
  if (r.counts.tp + r.counts.fp > 0)
    r.precision = static_cast<double>(r.counts.tp) / static_cast<double>(r.counts.tp + r.counts.fp);
  r.recall = static_cast<double>(r.counts.tp) / static_cast<double>(r.counts.tp + r.counts.fn);
  return r;
}

void write_scores(std::span<const ScoredRecord> scored, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << "sample_id\tscore\tdecision\ttruth\n";
  for (const auto& s : scored)
    f << s.sample_id << '\t' << format_float(s.score) << '\t' << s.decision << '\t' << s.truth
      << '\n';
}

std::vector<ScoredRecord> read_scores(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("score file not found: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "sample_id\tscore\tdecision\ttruth")
    throw CorruptRecord("bad score file header in " + path);
  std::vector<ScoredRecord> out;
  while (std::getline(f, line)) {
    auto t = split(line, '\t');
    if (t.size() != 4) throw CorruptRecord("bad score line '" + line + "' in " + path);
    out.push_back({static_cast<uint32_t>(parse_u64(t[0])), parse_float(t[1]),
                   static_cast<int>(parse_u64(t[2])), static_cast<int>(parse_u64(t[3]))});
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

void write_report(const EvalReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << "asr=" << format_double(r.asr) << '\n';
  f << "precision=" << (r.precision ? format_double(*r.precision) : "null") << '\n';
  f << "recall=" << format_double(r.recall) << '\n';
  f << "tp=" << r.counts.tp << '\n' << "fp=" << r.counts.fp << '\n';
  f << "fn=" << r.counts.fn << '\n' << "tn=" << r.counts.tn << '\n';
  f << "n=" << r.counts.total() << '\n';
  f << "seed=" << r.seed << '\n';
  f << "fingerprint=" << r.fingerprint << '\n';
}

EvalReport read_report(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("report not found: " + path);
  EvalReport r;
  std::string line;
  while (std::getline(f, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptRecord("bad report line '" + line + "' in " + path);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "asr") r.asr = std::stod(val);
    else if (key == "precision") r.precision = val == "null" ? std::nullopt : std::optional(std::stod(val));
    else if (key == "recall") r.recall = std::stod(val);
    else if (key == "tp") r.counts.tp = std::stoll(val);
    else if (key == "fp") r.counts.fp = std::stoll(val);
    else if (key == "fn") r.counts.fn = std::stoll(val);
    else if (key == "tn") r.counts.tn = std::stoll(val);
    else if (key == "seed") r.seed = parse_u64(val);
    else if (key == "fingerprint") r.fingerprint = val;
  }
  r.n_members = r.counts.tp + r.counts.fn;
  r.n_nonmembers = r.counts.fp + r.counts.tn;
  return r;
}

namespace {

std::vector<std::pair<std::string, EvalReport>> sorted_by_asr(
    std::vector<std::pair<std::string, EvalReport>> reports) {
  if (reports.size() < 2) throw InvalidSpec("comparison needs at least two reports");
  std::stable_sort(reports.begin(), reports.end(),
                   [](const auto& a, const auto& b) { return a.second.asr > b.second.asr; });
  return reports;
}

}  // namespace

std::string comparison_table(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  auto rows = sorted_by_asr(reports);
  size_t name_w = 4;
  for (auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "name" << std::setw(10) << "asr"
     << std::setw(12) << "precision" << "recall\n";
  os << std::fixed << std::setprecision(4);
  for (auto& [name, r] : rows) {
    os << std::setw(static_cast<int>(name_w) + 2) << name << std::setw(10) << r.asr
       << std::setw(12);
    if (r.precision)
      os << *r.precision;
    else
      os << "null";
    os << r.recall << '\n';
  }
  return os.str();
}

void write_comparison_svg(const std::vector<std::pair<std::string, EvalReport>>& reports,
                          const std::string& path) {
  auto rows = sorted_by_asr(reports);
  const int bar_w = 80, gap = 30, h = 260, base = 210, left = 50;
  const int width = left + static_cast<int>(rows.size()) * (bar_w + gap) + gap;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << h
     << "\">\n";
  os << "<line x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << width - 10 << "\" y2=\""
     << base << "\" stroke=\"black\"/>\n";
  int x = left + gap;
  os << std::fixed << std::setprecision(4);
  for (auto& [name, r] : rows) {
    const int bh = static_cast<int>(r.asr * 180.0);
    os << "<rect x=\"" << x << "\" y=\"" << base - bh << "\" width=\"" << bar_w << "\" height=\""
       << bh << "\" fill=\"#4477aa\"/>\n";
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << base - bh - 6
       << "\" text-anchor=\"middle\" font-size=\"12\">" << r.asr << "</text>\n";
    os << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << base + 18
       << "\" text-anchor=\"middle\" font-size=\"12\">" << name << "</text>\n";
    x += bar_w + gap;
  }
  os << "</svg>\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << os.str();
}

}  // namespace dynmia
