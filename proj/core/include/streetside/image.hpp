#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace streetside {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Row-major interleaved RGB8 raster.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const noexcept {
    const std::uint8_t* p = &data_[index(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    std::uint8_t* p = &data_[index(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::uint8_t* row(int y) noexcept { return data_.data() + std::size_t(y) * width_ * 3; }
  const std::uint8_t* row(int y) const noexcept {
    return data_.data() + std::size_t(y) * width_ * 3;
  }
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  /// Copies the block [x, x+w) x [y, y+h); the block must lie inside the image.
  Image crop(int x, int y, int w, int h) const;
  /// Writes `src` with its top-left corner at (x, y); must fit.
  void paste(const Image& src, int x, int y);

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return (std::size_t(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Decodes PNG or JPEG bytes.
Image decode_image(std::span<const std::uint8_t> bytes);
/// Encodes as PNG (lossless).
std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 95);

Image read_image(const std::filesystem::path& path);
/// Format chosen from the extension (.png, .jpg/.jpeg).
void write_image(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace streetside
