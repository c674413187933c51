#include "unetkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>

#include "unetkit/errors.hpp"
#include "unetkit/rng.hpp"

namespace fs = std::filesystem;

namespace unetkit {

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

bool has_ext(const fs::path& p, const std::vector<std::string>& exts) {
  const std::string e = lower(p.extension().string());
  return std::find(exts.begin(), exts.end(), e) != exts.end();
}

std::map<std::string, std::string> stems_in(const fs::path& dir,
                                            const std::vector<std::string>& exts) {
  if (!fs::is_directory(dir)) {
    throw ManifestError("dataset directory missing: " + dir.string());
  }
  std::map<std::string, std::string> out;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file() || !has_ext(de.path(), exts)) continue;
    const std::string stem = de.path().stem().string();
    auto [it, inserted] = out.emplace(stem, de.path().string());
    if (!inserted) {
      throw ManifestError("duplicate stem '" + stem + "' in " + dir.string() + " (" +
                          it->second + " vs " + de.path().string() + ")");
    }
  }
  return out;
}

float bilinear_at(const Tensor& t, int ci, double sy, double sx) {
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double fy = sy - y0;
  const double fx = sx - x0;
  auto sample = [&](int y, int x) -> double {
    if (y < 0 || y >= t.h || x < 0 || x >= t.w) return 0.0;
    return t.at(0, ci, y, x);
  };
  const double top = sample(y0, x0) * (1.0 - fx) + sample(y0, x0 + 1) * fx;
  const double bot = sample(y0 + 1, x0) * (1.0 - fx) + sample(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

}  // namespace

Manifest scan_dataset(const std::string& root) {
  const fs::path base(root);
  auto images = stems_in(base / "images", {".png", ".jpg", ".jpeg", ".bmp"});
  auto masks = stems_in(base / "masks", {".png", ".tif", ".tiff"});
  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) {
      throw ManifestError("image '" + stem + "' has no matching mask (" + path + ")");
    }
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) {
      throw ManifestError("mask '" + stem + "' has no matching image (" + path + ")");
    }
  }
  Manifest m;
  for (const auto& [stem, path] : images) {
    m.entries.push_back(ManifestEntry{stem, path, masks.at(stem)});
  }
  // std::map iteration is already stem-sorted
  return m;
}

Tensor image_to_tensor(const ImageU8& img) {
  Tensor t(1, img.channels, img.h, img.w);
  for (int ci = 0; ci < img.channels; ++ci) {
    float* plane = t.plane(0, ci);
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        plane[static_cast<long>(y) * img.w + x] =
            static_cast<float>(img.at(y, x, ci)) / 255.0f;
      }
    }
  }
  return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
  if (t.n != 1) throw DimensionError("tensor_to_image expects batch 1, got " + t.shape_str());
  ImageU8 img;
  img.h = t.h;
  img.w = t.w;
  img.channels = t.c;
  img.data.resize(static_cast<std::size_t>(t.h) * t.w * t.c);
  for (int ci = 0; ci < t.c; ++ci) {
    const float* plane = t.plane(0, ci);
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        const long v = std::lround(plane[static_cast<long>(y) * t.w + x] * 255.0f);
        img.at(y, x, ci) = static_cast<unsigned char>(std::clamp(v, 0L, 255L));
      }
    }
  }
  return img;
}

Tensor mask_to_tensor(const ImageU8& img) {
  if (img.channels != 1) {
    throw DimensionError("mask_to_tensor expects 1 channel, got " +
                         std::to_string(img.channels));
  }
  Tensor t(1, 1, img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      t.at(0, 0, y, x) = img.at(y, x, 0) >= 128 ? 1.0f : 0.0f;
    }
  }
  return t;
}

ImageU8 mask_to_image(const Tensor& t) {
  if (t.n != 1 || t.c != 1) {
    throw DimensionError("mask_to_image expects shape (1,1,H,W), got " + t.shape_str());
  }
  ImageU8 img;
  img.h = t.h;
  img.w = t.w;
  img.channels = 1;
  img.data.resize(static_cast<std::size_t>(t.h) * t.w);
  for (int y = 0; y < t.h; ++y) {
    for (int x = 0; x < t.w; ++x) {
      img.at(y, x, 0) = t.at(0, 0, y, x) > 0.5f ? 255 : 0;
    }
  }
  return img;
}

SamplePair load_sample(const ManifestEntry& entry, int target_h, int target_w) {
  ImageU8 img = read_image(entry.image_path, 3);
  ImageU8 msk = read_image(entry.mask_path, 1);
  img = resize_bilinear(img, target_h, target_w);
  msk = resize_nearest(msk, target_h, target_w);
  SamplePair p;
  p.id = entry.id;
  p.image = image_to_tensor(img);
  p.mask = mask_to_tensor(msk);
  return p;
}

namespace {

Tensor flip_tensor(const Tensor& t, bool horizontal) {
  Tensor out(t.n, t.c, t.h, t.w);
  for (int ni = 0; ni < t.n; ++ni) {
    for (int ci = 0; ci < t.c; ++ci) {
      for (int y = 0; y < t.h; ++y) {
        for (int x = 0; x < t.w; ++x) {
          const int sy = horizontal ? y : t.h - 1 - y;
          const int sx = horizontal ? t.w - 1 - x : x;
          out.at(ni, ci, y, x) = t.at(ni, ci, sy, sx);
        }
      }
    }
  }
  return out;
}

}  // namespace

SamplePair hflip(const SamplePair& p) {
  return SamplePair{p.id, flip_tensor(p.image, true), flip_tensor(p.mask, true)};
}

SamplePair vflip(const SamplePair& p) {
  return SamplePair{p.id, flip_tensor(p.image, false), flip_tensor(p.mask, false)};
}

SamplePair rotate(const SamplePair& p, double degrees) {
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const Tensor& img = p.image;
  const double cy = (img.h - 1) / 2.0;
  const double cx = (img.w - 1) / 2.0;

  SamplePair out;
  out.id = p.id;
  out.image = Tensor(img.n, img.c, img.h, img.w);
  out.mask = Tensor(p.mask.n, p.mask.c, p.mask.h, p.mask.w);

  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      // inverse mapping: rotate the destination coordinate back by -theta
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      for (int ci = 0; ci < img.c; ++ci) {
        out.image.at(0, ci, y, x) = bilinear_at(img, ci, sy, sx);
      }
      const long ny = std::lround(sy);
      const long nx = std::lround(sx);
      float mv = 0.0f;
      if (ny >= 0 && ny < p.mask.h && nx >= 0 && nx < p.mask.w) {
        mv = p.mask.at(0, 0, static_cast<int>(ny), static_cast<int>(nx));
      }
      out.mask.at(0, 0, y, x) = mv >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

AugmentResult augment_dataset(const Manifest& manifest, const std::string& out_root,
                              const AugmentOptions& options) {
  const fs::path base(out_root);
  std::error_code ec;
  fs::create_directories(base / "images", ec);
  fs::create_directories(base / "masks", ec);
  if (!fs::is_directory(base / "images") || !fs::is_directory(base / "masks")) {
    throw IoError("cannot create output directories under: " + out_root);
  }

  AugmentResult result;
  result.source_pairs = static_cast<int>(manifest.size());
  for (const auto& entry : manifest.entries) {
    const SamplePair orig = load_sample(entry, options.target_h, options.target_w);
    std::vector<std::pair<std::string, SamplePair>> variants;
    variants.emplace_back("orig", orig);
    if (options.enabled) {
      variants.emplace_back("hflip", hflip(orig));
      variants.emplace_back("vflip", vflip(orig));
      variants.emplace_back("rot", rotate(orig, options.angle));
    }
    for (const auto& [tag, pair] : variants) {
      const std::string stem = entry.id + "_" + tag;
      const std::string img_path = (base / "images" / (stem + ".png")).string();
      const std::string msk_path = (base / "masks" / (stem + ".png")).string();
      write_image_png(img_path, tensor_to_image(pair.image));
      write_image_png(msk_path, mask_to_image(pair.mask));
      result.manifest.entries.push_back(ManifestEntry{stem, img_path, msk_path});
      ++result.written_pairs;
    }
  }
  std::sort(result.manifest.entries.begin(), result.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return result;
}

std::pair<Manifest, Manifest> split_train_val(const Manifest& manifest, double ratio,
                                              std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must be inside (0,1), got " + std::to_string(ratio));
  }
  if (manifest.empty()) throw ConfigError("cannot split an empty manifest");
  std::vector<ManifestEntry> pool = manifest.entries;
  Rng rng(seed);
  rng.shuffle(pool);
  const long k = std::lround(ratio * static_cast<double>(pool.size()));
  if (k < 1 || k >= static_cast<long>(pool.size())) {
    throw ConfigError("split ratio " + std::to_string(ratio) + " leaves an empty side for " +
                      std::to_string(pool.size()) + " pairs");
  }
  auto by_id = [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; };
  Manifest train, val;
  train.entries.assign(pool.begin(), pool.begin() + k);
  val.entries.assign(pool.begin() + k, pool.end());
  std::sort(train.entries.begin(), train.entries.end(), by_id);
  std::sort(val.entries.begin(), val.entries.end(), by_id);
  return {std::move(train), std::move(val)};
}

}  // namespace unetkit
