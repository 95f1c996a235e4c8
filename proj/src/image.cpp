#include "seedloop/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace seedloop {

namespace {

cv::Mat to_bgr_mat(const Image& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3, out.rgb.data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  return out;
}

} // namespace

Image read_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot read image '" + path.string() + "'");
  return from_bgr_mat(m);
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw std::invalid_argument("cannot write an empty image");
  if (!cv::imwrite(path.string(), to_bgr_mat(image)))
    throw std::runtime_error("cannot write image '" + path.string() + "'");
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_bgr_mat(image), buf)) throw std::runtime_error("png encoding failed");
  return buf;
}

Image resize(const Image& image, int width, int height) {
  if (image.width == width && image.height == height) return image;
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat dst;
  const bool shrink = width < image.width && height < image.height;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  Image out(width, height);
  for (int y = 0; y < height; ++y)
    std::copy_n(dst.ptr<std::uint8_t>(y), static_cast<std::size_t>(width) * 3, out.rgb.data() + static_cast<std::size_t>(y) * width * 3);
  return out;
}

Image crop(const Image& image, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > image.width || y + h > image.height)
    throw std::out_of_range("crop rectangle outside image");
  Image out(w, h);
  for (int r = 0; r < h; ++r) {
    const auto* src = image.rgb.data() + (static_cast<std::size_t>(y + r) * image.width + x) * 3;
    std::copy_n(src, static_cast<std::size_t>(w) * 3, out.rgb.data() + static_cast<std::size_t>(r) * w * 3);
  }
  return out;
}

Image hconcat(std::span<const Image> images) {
  int width = 0, height = 0;
  for (const auto& im : images) {
    width += im.width;
    height = std::max(height, im.height);
  }
  Image out(width, height, 255);
  int x0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = im.at(x, y, c);
    x0 += im.width;
  }
  return out;
}

void to_chw(const Image& image, std::span<float> out) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  if (out.size() != plane * 3) throw std::invalid_argument("to_chw: output size mismatch");
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = image.rgb[i * 3 + c] * (1.0f / 255.0f);
}

Image from_chw(std::span<const float> chw, int width, int height) {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (chw.size() != plane * 3) throw std::invalid_argument("from_chw: input size mismatch");
  Image out(width, height);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(chw[c * plane + i], 0.0f, 1.0f);
      out.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

} // namespace seedloop
