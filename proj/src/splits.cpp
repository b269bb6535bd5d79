#include "dynmia/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"
#include "dynmia/textio.hpp"

namespace dynmia {

namespace {

size_t overlap_count(const SplitSpec& spec) {
  return static_cast<size_t>(std::llround(spec.overlap_fraction * static_cast<double>(spec.n_shadow_train)));
}

// sort-then-seeded-shuffle, so list contents depend only on the chosen
// index set and the (seed, name) pair, not on construction order.
void canonical_shuffle(std::vector<uint32_t>& ids, uint64_t seed, std::string_view name) {
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 eng(stage_seed(seed, name));
  std::shuffle(ids.begin(), ids.end(), eng);
}

}  // namespace

size_t required_budget(const SplitSpec& spec) {
  return spec.n_target_train + spec.n_target_test + spec.n_shadow_train + spec.n_shadow_test - overlap_count(spec);
}

DataPartitions make_partitions(const SplitSpec& spec, size_t pool_size) {
  if (spec.overlap_fraction < 0.0 || spec.overlap_fraction > 1.0)
    throw InvalidSpec("overlap_fraction must be in [0,1]");
  if (spec.n_target_train < 1 || spec.n_target_test < 1 || spec.n_shadow_train < 1 || spec.n_shadow_test < 1)
    throw InvalidSpec("all partition counts must be >= 1");
  const size_t n_overlap = overlap_count(spec);
  if (n_overlap > spec.n_target_train)
    throw InvalidSpec("requested overlap exceeds n_target_train");
  if (required_budget(spec) > pool_size)
    throw BudgetExceeded("partition spec needs " + std::to_string(required_budget(spec)) +
                         " unique indices but pool has " + std::to_string(pool_size));

  std::vector<uint32_t> perm(pool_size);
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 eng(stage_seed(spec.seed, "splits/pool"));
  std::shuffle(perm.begin(), perm.end(), eng);

  auto take = [&perm](size_t& cursor, size_t n) {
    std::vector<uint32_t> out(perm.begin() + cursor, perm.begin() + cursor + n);
    cursor += n;
    return out;
  };

  size_t cursor = 0;
  DataPartitions p;
  p.target_train = take(cursor, spec.n_target_train);
  p.target_test = take(cursor, spec.n_target_test);
  p.shadow_test = take(cursor, spec.n_shadow_test);

  // shadow_train = exact overlap drawn from target_train + fresh indices
  std::vector<uint32_t> overlap_pool = p.target_train;
  canonical_shuffle(overlap_pool, spec.seed, "splits/overlap");
  p.shadow_train.assign(overlap_pool.begin(), overlap_pool.begin() + n_overlap);
  std::vector<uint32_t> fresh = take(cursor, spec.n_shadow_train - n_overlap);
  p.shadow_train.insert(p.shadow_train.end(), fresh.begin(), fresh.end());

  canonical_shuffle(p.target_train, spec.seed, "splits/target_train");
  canonical_shuffle(p.target_test, spec.seed, "splits/target_test");
  canonical_shuffle(p.shadow_train, spec.seed, "splits/shadow_train");
  canonical_shuffle(p.shadow_test, spec.seed, "splits/shadow_test");
  return p;
}

namespace {

void write_line(std::ostream& os, std::string_view name, uint64_t seed, const std::vector<uint32_t>& ids) {
  os << name << ' ' << seed << ' ';
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ',';
    os << ids[i];
  }
  os << '\n';
}

}  // namespace

void write_manifest(const DataPartitions& parts, uint64_t seed, const std::string& path) {
  std::ostringstream os;
  os << "dynmia-splits v1\n";
  write_line(os, "target_train", seed, parts.target_train);
  write_line(os, "target_test", seed, parts.target_test);
  write_line(os, "shadow_train", seed, parts.shadow_train);
  write_line(os, "shadow_test", seed, parts.shadow_test);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << os.str();
}

SplitManifest read_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("split manifest not found: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "dynmia-splits v1")
    throw VersionMismatch("bad split manifest header in " + path);

  SplitManifest m;
  bool seed_set = false;
  const std::vector<std::pair<std::string, std::vector<uint32_t>*>> order = {
      {"target_train", &m.parts.target_train},
      {"target_test", &m.parts.target_test},
      {"shadow_train", &m.parts.shadow_train},
      {"shadow_test", &m.parts.shadow_test},
  };
  for (auto& [name, dst] : order) {
    if (!std::getline(f, line)) throw CorruptRecord("truncated split manifest: " + path);
    auto fields = split(line, ' ');
    if (fields.size() != 3 || fields[0] != name)
      throw CorruptRecord("bad partition line '" + line + "' in " + path);
    uint64_t seed = parse_u64(fields[1]);
    if (seed_set && seed != m.seed) throw CorruptRecord("inconsistent seeds in " + path);
    m.seed = seed;
    seed_set = true;
    for (auto tok : split(fields[2], ','))
      dst->push_back(static_cast<uint32_t>(parse_u64(tok)));
  }
  return m;
}

}  // namespace dynmia
