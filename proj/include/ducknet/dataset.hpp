#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ducknet/image_io.hpp"
#include "ducknet/resize.hpp"
#include "ducknet/rng.hpp"
#include "ducknet/tensor.hpp"

namespace ducknet {

// One image/mask pair. Image values are scaled to [0,1]; the mask is
// strictly binary, with image and mask spatial dims equal.
struct Sample {
  std::string id;
  Tensor4<float> image;  // (1, 3, h, w)
  Tensor4<float> mask;   // (1, 1, h, w)
};

inline float binarize_u8(std::uint8_t v) {
  return (double(v) / 255.0 >= 0.5) ? 1.0f : 0.0f;
}

inline Sample load_sample(const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path) {
  const ImageU8 img = to_rgb(read_image(image_path));
  const ImageU8 msk = read_image(mask_path);
  if (img.width != msk.width || img.height != msk.height)
    throw std::runtime_error(
        "sample: image " + std::to_string(img.width) + "x" +
        std::to_string(img.height) + " and mask " + std::to_string(msk.width) +
        "x" + std::to_string(msk.height) + " dimensions differ (" +
        image_path.string() + ")");
  Sample s;
  s.id = image_path.stem().string();
  s.image = Tensor4<float>(1, 3, img.height, img.width);
  s.mask = Tensor4<float>(1, 1, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c)
        s.image.at(0, c, y, x) = float(img.at(y, x, c)) / 255.0f;
      // gray masks binarize directly; rgb masks binarize their mean
      if (msk.channels == 1) {
        s.mask.at(0, 0, y, x) = binarize_u8(msk.at(y, x, 0));
      } else {
        const int m = (msk.at(y, x, 0) + msk.at(y, x, 1) + msk.at(y, x, 2)) / 3;
        s.mask.at(0, 0, y, x) = binarize_u8(std::uint8_t(m));
      }
    }
  return s;
}

// Resizes a sample to the network input size: Lanczos for the image,
// nearest + re-binarize for the mask.
inline Sample resize_sample(const Sample& s, int h, int w) {
  if (s.image.shape.h == h && s.image.shape.w == w) return s;
  Sample out;
  out.id = s.id;
  out.image = lanczos_resize(s.image, h, w);
  for (auto& v : out.image.data) v = std::clamp(v, 0.0f, 1.0f);
  out.mask = nearest_resize(s.mask, h, w);
  for (auto& v : out.mask.data) v = v >= 0.5f ? 1.0f : 0.0f;
  return out;
}

// Dataset layout: root/images/<id>.(png|ppm), root/masks/<id>.(png|pgm).
struct DatasetDir {
  std::filesystem::path root;

  explicit DatasetDir(std::filesystem::path r) : root(std::move(r)) {}

  std::filesystem::path image_path(const std::string& id) const {
    for (const char* ext : {".png", ".ppm"}) {
      auto p = root / "images" / (id + ext);
      if (std::filesystem::exists(p)) return p;
    }
    throw std::runtime_error("dataset: no image file for id '" + id + "' in " +
                             (root / "images").string());
  }

  std::filesystem::path mask_path(const std::string& id) const {
    for (const char* ext : {".png", ".pgm"}) {
      auto p = root / "masks" / (id + ext);
      if (std::filesystem::exists(p)) return p;
    }
    throw std::runtime_error("dataset: no mask file for id '" + id + "' in " +
                             (root / "masks").string());
  }

  // sorted image ids; every id must have a mask
  std::vector<std::string> list_ids() const {
    const auto img_dir = root / "images";
    if (!std::filesystem::is_directory(img_dir))
      throw std::runtime_error("dataset: missing directory " + img_dir.string());
    if (!std::filesystem::is_directory(root / "masks"))
      throw std::runtime_error("dataset: missing directory " +
                               (root / "masks").string());
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(img_dir)) {
      if (!e.is_regular_file()) continue;
      const auto ext = e.path().extension().string();
      if (ext == ".png" || ext == ".ppm") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) mask_path(id);  // throws if absent
    return ids;
  }

  Sample load(const std::string& id) const {
    return load_sample(image_path(id), mask_path(id));
  }

  Sample load_resized(const std::string& id, int h, int w) const {
    return resize_sample(load(id), h, w);
  }
};

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train, val, test;

  const std::vector<std::string>& section(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("split: unknown section '" + name + "'");
  }
};

// Seeded uniform shuffle, then floor(n/10) ids to val and test each; the
// remainder (first segment of the shuffled order) trains.
inline SplitManifest split_dataset(std::vector<std::string> ids,
                                   std::uint64_t seed) {
  if (ids.size() < 3)
    throw std::invalid_argument("split: need at least 3 ids, got " +
                                std::to_string(ids.size()));
  std::sort(ids.begin(), ids.end());
  Rng rng(hash_str(seed, "split"));
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const std::size_t n_val = n / 10, n_test = n / 10;
  const std::size_t n_train = n - n_val - n_test;
  SplitManifest m;
  m.seed = seed;
  m.train.assign(ids.begin(), ids.begin() + std::ptrdiff_t(n_train));
  m.val.assign(ids.begin() + std::ptrdiff_t(n_train),
               ids.begin() + std::ptrdiff_t(n_train + n_val));
  m.test.assign(ids.begin() + std::ptrdiff_t(n_train + n_val), ids.end());
  return m;
}

inline std::string split_to_text(const SplitManifest& m) {
  std::string out = "SPLIT 1 seed=" + std::to_string(m.seed) + "\n";
  const std::pair<const char*, const std::vector<std::string>*> sections[] = {
      {"train", &m.train}, {"val", &m.val}, {"test", &m.test}};
  for (const auto& [name, ids] : sections) {
    out += std::string(name) + ":\n";
    for (const auto& id : *ids) out += id + "\n";
  }
  return out;
}

inline void write_split(const std::filesystem::path& path,
                        const SplitManifest& m) {
  atomic_write_file(path, split_to_text(m));
}

inline SplitManifest read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("SPLIT 1 seed=", 0) != 0)
    throw std::runtime_error("split: bad header in " + path.string());
  SplitManifest m;
  m.seed = std::strtoull(line.c_str() + 13, nullptr, 10);
  std::vector<std::string>* cur = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "train:") cur = &m.train;
    else if (line == "val:") cur = &m.val;
    else if (line == "test:") cur = &m.test;
    else if (cur) cur->push_back(line);
    else throw std::runtime_error("split: id before section in " + path.string());
  }
  return m;
}

}  // namespace ducknet
