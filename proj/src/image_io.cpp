#include "unetkit/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "unetkit/errors.hpp"

namespace unetkit {

namespace {

ImageU8 from_mat(const cv::Mat& m) {
  ImageU8 out;
  out.h = m.rows;
  out.w = m.cols;
  out.channels = m.channels();
  out.data.resize(static_cast<std::size_t>(m.rows) * m.cols * m.channels());
  if (m.isContinuous()) {
    std::copy(m.data, m.data + out.data.size(), out.data.begin());
  } else {
    for (int y = 0; y < m.rows; ++y) {
      const unsigned char* row = m.ptr<unsigned char>(y);
      std::copy(row, row + static_cast<std::size_t>(m.cols) * m.channels(),
                out.data.begin() + static_cast<std::size_t>(y) * m.cols * m.channels());
    }
  }
  return out;
}

cv::Mat to_mat(const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ValueError("image must have 1 or 3 channels, got " + std::to_string(img.channels));
  }
  cv::Mat m(img.h, img.w, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  std::copy(img.data.begin(), img.data.end(), m.data);
  return m;
}

}  // namespace

ImageU8 read_image(const std::string& path, int want_channels) {
  if (want_channels != 1 && want_channels != 3) {
    throw ValueError("read_image: want_channels must be 1 or 3, got " +
                     std::to_string(want_channels));
  }
  cv::Mat m = cv::imread(path, want_channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read or decode image: " + path);
  if (m.rows < 1 || m.cols < 1) throw FormatError("decoded image has zero size: " + path);
  if (want_channels == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  return from_mat(m);
}

void write_image_png(const std::string& path, const ImageU8& img) {
  cv::Mat m = to_mat(img);
  if (img.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  bool ok = false;
  try {
    ok = cv::imwrite(path, m, params);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write image '" + path + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write image: " + path);
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ValueError("resize target must be positive, got (" + std::to_string(out_h) + ", " +
                     std::to_string(out_w) + ")");
  }
  if (out_h == img.h && out_w == img.w) return img;
  cv::Mat dst;
  cv::resize(to_mat(img), dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  return from_mat(dst);
}

ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ValueError("resize target must be positive, got (" + std::to_string(out_h) + ", " +
                     std::to_string(out_w) + ")");
  }
  if (out_h == img.h && out_w == img.w) return img;
  cv::Mat dst;
  cv::resize(to_mat(img), dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_NEAREST);
  return from_mat(dst);
}

}  // namespace unetkit
