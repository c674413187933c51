#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unetkit/image_io.hpp"
#include "unetkit/tensor.hpp"

namespace unetkit {

// One image/mask pair in tensor form: image (1, 3, H, W) scaled to [0,1],
// mask (1, 1, H, W) strictly {0,1}.
struct SamplePair {
  std::string id;
  Tensor image;
  Tensor mask;
};

struct ManifestEntry {
  std::string id;  // filename stem shared by image and mask
  std::string image_path;
  std::string mask_path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Expects <root>/images/*.{png,jpg,jpeg,bmp} and <root>/masks/*.{png,tif,tiff}
// with matching stems; entries come back sorted by stem.
Manifest scan_dataset(const std::string& root);

// Image: bilinear resize, 1/255 scaling, channels-first. Mask: nearest
// resize, thresholded at >= 128 of 255.
SamplePair load_sample(const ManifestEntry& entry, int target_h, int target_w);

SamplePair hflip(const SamplePair& p);
SamplePair vflip(const SamplePair& p);

// Rotation about the image center, bilinear for the image, nearest for the
// mask, zero fill outside, mask re-binarized at 0.5.
SamplePair rotate(const SamplePair& p, double degrees);

Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor& t);
Tensor mask_to_tensor(const ImageU8& img);
ImageU8 mask_to_image(const Tensor& t);

struct AugmentOptions {
  bool enabled = true;
  double angle = 45.0;
  int target_h = 512;
  int target_w = 512;
};

struct AugmentResult {
  int source_pairs = 0;
  int written_pairs = 0;
  Manifest manifest;  // the output directory's manifest
};

// Writes {orig, hflip, vflip, rot} variants per source pair when enabled,
// just {orig} otherwise, as PNGs under <out_root>/images and <out_root>/masks.
AugmentResult augment_dataset(const Manifest& manifest, const std::string& out_root,
                              const AugmentOptions& options);

// Deterministic shuffled split; both sides sorted by stem again. Throws
// ConfigError when the ratio is outside (0,1) or either side ends up empty.
std::pair<Manifest, Manifest> split_train_val(const Manifest& manifest, double ratio,
                                              std::uint64_t seed);

}  // namespace unetkit
