#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace seedloop {

/// 8-bit RGB image, row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

  bool empty() const { return width == 0 || height == 0; }

  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& image);

/// Bilinear resize; returns a copy when the size already matches.
Image resize(const Image& image, int width, int height);

/// Copies the rectangle [x, x+w) x [y, y+h). The rectangle must be inside the image.
Image crop(const Image& image, int x, int y, int w, int h);

/// Writes `images` side by side into one strip.
Image hconcat(std::span<const Image> images);

/// CHW float layout in [0,1], the layout the neural network code consumes.
void to_chw(const Image& image, std::span<float> out);
Image from_chw(std::span<const float> chw, int width, int height);

} // namespace seedloop
