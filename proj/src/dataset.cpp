#include "dynmia/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dynmia/error.hpp"
#include "dynmia/rng.hpp"

namespace fs = std::filesystem;

namespace dynmia {

namespace {

inline uint8_t clip_u8(float v) {
  return static_cast<uint8_t>(std::clamp(v, 0.f, 255.f));
}

// Sum of randomly placed signed Gaussian bumps, one field per channel.
void add_blobs(std::vector<float>& img, int c, int h, int w, int n_blobs, float amp, Rng& rng) {
  for (int b = 0; b < n_blobs; ++b) {
    int ch = static_cast<int>(rng.index(c));
    float cx = rng.uniform(0.f, static_cast<float>(w));
    float cy = rng.uniform(0.f, static_cast<float>(h));
    float sigma = rng.uniform(2.5f, 7.f);
    float a = amp * (rng.uniform() < 0.5f ? -1.f : 1.f) * rng.uniform(0.6f, 1.f);
    float inv2s2 = 1.f / (2.f * sigma * sigma);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img[(ch * h + y) * w + x] += a * std::exp(-d2 * inv2s2);
      }
  }
}

}  // namespace

Pool make_synthetic(const SyntheticParams& p) {
  const int C = 3, H = 32, W = 32;
  Pool pool;
  pool.name = "synthetic-" + std::to_string(p.num_classes) + "class";
  pool.num_classes = p.num_classes;
  pool.channels = C;
  pool.height = H;
  pool.width = W;
  pool.pixels.resize(p.n * C * H * W);
  pool.labels.resize(p.n);

  Rng class_rng(stage_seed(p.seed, "synthetic/classes"));
  std::vector<std::vector<float>> class_mean(p.num_classes, std::vector<float>(C * H * W, 128.f));
  for (auto& m : class_mean) add_blobs(m, C, H, W, 6, p.class_amp, class_rng);

  Rng rng(stage_seed(p.seed, "synthetic/samples"));
  std::vector<float> img(C * H * W);
  for (size_t i = 0; i < p.n; ++i) {
    int label = static_cast<int>(i % p.num_classes);
    pool.labels[i] = label;
    img = class_mean[label];
    add_blobs(img, C, H, W, 4, p.nuisance_amp, rng);
    uint8_t* dst = pool.pixels.data() + i * pool.sample_bytes();
    for (int j = 0; j < C * H * W; ++j)
      dst[j] = clip_u8(img[j] + rng.normal(0.f, p.noise_std));
  }
  return pool;
}

namespace {

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetNotFound("missing dataset file: " + path.string());
  f.seekg(0, std::ios::end);
  std::vector<uint8_t> buf(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return buf;
}

// CIFAR-style record stream: label_bytes of labels then 3072 pixel bytes
// (RRR GGG BBB, already CHW). label_index picks which label byte to keep.
void append_cifar_records(Pool& pool, const std::vector<uint8_t>& buf, const fs::path& path,
                          size_t label_bytes, size_t label_index, int num_classes) {
  const size_t rec = label_bytes + 3072;
  if (buf.empty() || buf.size() % rec != 0)
    throw CorruptData("bad record size in " + path.string());
  for (size_t off = 0; off < buf.size(); off += rec) {
    int label = buf[off + label_index];
    if (label >= num_classes) throw CorruptData("label out of range in " + path.string());
    pool.labels.push_back(label);
    pool.pixels.insert(pool.pixels.end(), buf.begin() + off + label_bytes, buf.begin() + off + rec);
  }
}

Pool load_cifar(const std::string& root, bool cifar100) {
  Pool pool;
  pool.name = cifar100 ? "cifar100" : "cifar10";
  pool.num_classes = cifar100 ? 100 : 10;
  std::vector<fs::path> files;
  if (cifar100) {
    fs::path base = fs::path(root) / "cifar-100-binary";
    files = {base / "train.bin", base / "test.bin"};
  } else {
    fs::path base = fs::path(root) / "cifar-10-batches-bin";
    for (int i = 1; i <= 5; ++i) files.push_back(base / ("data_batch_" + std::to_string(i) + ".bin"));
    files.push_back(base / "test_batch.bin");
  }
  for (auto& f : files)
    append_cifar_records(pool, read_file(f), f, cifar100 ? 2 : 1, cifar100 ? 1 : 0, pool.num_classes);
  return pool;
}

void bilinear_resize_chw(const std::vector<float>& src, int c, int sh, int sw,
                         std::vector<uint8_t>& dst, int dh, int dw) {
  dst.resize(static_cast<size_t>(c) * dh * dw);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < dh; ++y)
      for (int x = 0; x < dw; ++x) {
        float fy = (y + 0.5f) * sh / dh - 0.5f;
        float fx = (x + 0.5f) * sw / dw - 0.5f;
        int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, sh - 1);
        int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, sw - 1);
        int y1 = std::min(y0 + 1, sh - 1);
        int x1 = std::min(x0 + 1, sw - 1);
        float wy = std::clamp(fy - y0, 0.f, 1.f);
        float wx = std::clamp(fx - x0, 0.f, 1.f);
        auto at = [&](int yy, int xx) { return src[(ch * sh + yy) * sw + xx]; };
        float v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                  wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
        dst[(ch * dh + y) * dw + x] = clip_u8(v);
      }
}

Pool load_stl10(const std::string& root) {
  Pool pool;
  pool.name = "stl10";
  pool.num_classes = 10;
  fs::path base = fs::path(root) / "stl10_binary";
  const int S = 96;
  for (auto&& [xs, ys] : {std::pair{"train_X.bin", "train_y.bin"}, std::pair{"test_X.bin", "test_y.bin"}}) {
    auto xbuf = read_file(base / xs);
    auto ybuf = read_file(base / ys);
    const size_t rec = static_cast<size_t>(3) * S * S;
    if (xbuf.size() % rec != 0 || xbuf.size() / rec != ybuf.size())
      throw CorruptData("stl10 image/label size mismatch in " + base.string());
    std::vector<float> img(rec);
    std::vector<uint8_t> small;
    for (size_t i = 0; i < ybuf.size(); ++i) {
      int label = ybuf[i] - 1;  // stl10 labels are 1-based
      if (label < 0 || label >= 10) throw CorruptData("stl10 label out of range");
      // stl10 stores each channel column-major
      const uint8_t* s = xbuf.data() + i * rec;
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x)
            img[(ch * S + y) * S + x] = s[ch * S * S + x * S + y];
      bilinear_resize_chw(img, 3, S, S, small, 32, 32);
      pool.pixels.insert(pool.pixels.end(), small.begin(), small.end());
      pool.labels.push_back(label);
    }
  }
  return pool;
}

// Minimal P5/P6 PNM reader, maxval 255.
void read_pnm(const fs::path& path, std::vector<float>& img, int& c, int& h, int& w) {
  auto buf = read_file(path);
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < buf.size() && (std::isspace(buf[pos]) || buf[pos] == '#')) {
      if (buf[pos] == '#')
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      else
        ++pos;
    }
    size_t start = pos;
    while (pos < buf.size() && !std::isspace(buf[pos])) ++pos;
    return std::string(buf.begin() + start, buf.begin() + pos);
  };
  auto int_token = [&]() {
    try {
      size_t used = 0;
      std::string t = token();
      int v = std::stoi(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw CorruptData("bad PNM header field in " + path.string());
    }
  };
  std::string magic = token();
  if (magic != "P6" && magic != "P5") throw CorruptData("unsupported PNM magic in " + path.string());
  c = magic == "P6" ? 3 : 1;
  w = int_token();
  h = int_token();
  int maxval = int_token();
  if (maxval != 255 || w <= 0 || h <= 0) throw CorruptData("unsupported PNM header in " + path.string());
  ++pos;  // single whitespace after maxval
  size_t need = static_cast<size_t>(c) * h * w;
  if (buf.size() - pos < need) throw CorruptData("truncated PNM data in " + path.string());
  img.resize(need);
  // interleaved -> CHW
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        img[(ch * h + y) * w + x] = buf[pos + (static_cast<size_t>(y) * w + x) * c + ch];
}

Pool load_gtsrb(const std::string& root) {
  Pool pool;
  pool.name = "gtsrb";
  fs::path base = fs::path(root) / "gtsrb";
  if (!fs::is_directory(base)) throw DatasetNotFound("missing dataset directory: " + base.string());

  std::vector<std::pair<int, fs::path>> images;  // (class, file)
  int max_class = -1;
  for (auto& split : fs::directory_iterator(base)) {
    if (!split.is_directory()) continue;
    for (auto& cls : fs::directory_iterator(split.path())) {
      if (!cls.is_directory()) continue;
      int label;
      try {
        label = std::stoi(cls.path().filename().string());
      } catch (...) {
        throw CorruptData("non-numeric class directory: " + cls.path().string());
      }
      max_class = std::max(max_class, label);
      for (auto& f : fs::directory_iterator(cls.path())) {
        auto ext = f.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm") images.emplace_back(label, f.path());
      }
    }
  }
  if (images.empty()) throw DatasetNotFound("no .ppm images under " + base.string());
  std::sort(images.begin(), images.end());

  pool.num_classes = max_class + 1;
  std::vector<float> img, rgb;
  std::vector<uint8_t> small;
  for (auto& [label, path] : images) {
    int c, h, w;
    read_pnm(path, img, c, h, w);
    if (c == 1) {  // replicate grayscale
      rgb.resize(static_cast<size_t>(3) * h * w);
      for (int ch = 0; ch < 3; ++ch)
        std::copy(img.begin(), img.end(), rgb.begin() + static_cast<size_t>(ch) * h * w);
    } else {
      rgb = img;
    }
    bilinear_resize_chw(rgb, 3, h, w, small, 32, 32);
    pool.pixels.insert(pool.pixels.end(), small.begin(), small.end());
    pool.labels.push_back(label);
  }
  return pool;
}

}  // namespace

Pool load_pool(const std::string& dataset_name, const std::string& root) {
  if (dataset_name == "synthetic-2class")
    return make_synthetic({.num_classes = 2, .n = 2000, .seed = fnv1a64(dataset_name)});
  if (dataset_name == "synthetic-10class")
    return make_synthetic({.num_classes = 10, .n = 12000, .seed = fnv1a64(dataset_name)});
  if (dataset_name == "cifar10") return load_cifar(root, false);
  if (dataset_name == "cifar100") return load_cifar(root, true);
  if (dataset_name == "stl10") return load_stl10(root);
  if (dataset_name == "gtsrb") return load_gtsrb(root);
  throw DatasetNotFound("unknown dataset: " + dataset_name);
}

}  // namespace dynmia
