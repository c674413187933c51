#pragma once

#include <string>
#include <vector>

namespace unetkit {

// Interleaved 8-bit image, RGB for 3 channels. Decode/encode/resize are the
// only things delegated to the imaging library; all tensor math stays in-tree.
struct ImageU8 {
  int h = 0, w = 0, channels = 0;
  std::vector<unsigned char> data;  // h * w * channels

  ImageU8() = default;
  ImageU8(int h_, int w_, int channels_)
      : h(h_), w(w_), channels(channels_),
        data(static_cast<std::size_t>(h_) * w_ * channels_, 0) {}

  unsigned char& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  unsigned char at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
};

// want_channels: 1 decodes/collapses to grayscale, 3 to RGB.
ImageU8 read_image(const std::string& path, int want_channels);

void write_image_png(const std::string& path, const ImageU8& img);

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);
ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w);

}  // namespace unetkit
