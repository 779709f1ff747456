#include "streetside/image.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "streetside/error.hpp"

namespace streetside {
namespace {

cv::Mat to_bgr_mat(const Image& img) {
  cv::Mat rgb(img.height(), img.width(), CV_8UC3,
              const_cast<std::uint8_t*>(img.bytes().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_bgr_mat(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(img.row(y), rgb.ptr<std::uint8_t>(y), std::size_t(rgb.cols) * 3);
  }
  return img;
}

std::vector<std::uint8_t> encode(const Image& img, const std::string& ext,
                                 const std::vector<int>& params) {
  if (img.empty()) throw Error(Errc::kInvalidImage, "cannot encode an empty image");
  std::vector<std::uint8_t> out;
  if (!cv::imencode(ext, to_bgr_mat(img), out, params)) {
    throw Error(Errc::kImageCodec, "failed to encode " + ext);
  }
  return out;
}

}  // namespace

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(Errc::kInvalidImage, "negative image size");
  data_.resize(std::size_t(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Image Image::crop(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > width_ || y + h > height_) {
    throw Error(Errc::kPixelOutOfBounds,
                fmt::format("crop [{},{} {}x{}] outside {}x{}", x, y, w, h, width_, height_));
  }
  Image out(w, h);
  for (int r = 0; r < h; ++r) {
    std::memcpy(out.row(r), row(y + r) + std::size_t(x) * 3, std::size_t(w) * 3);
  }
  return out;
}

void Image::paste(const Image& src, int x, int y) {
  if (x < 0 || y < 0 || x + src.width() > width_ || y + src.height() > height_) {
    throw Error(Errc::kPixelOutOfBounds, "paste outside destination");
  }
  for (int r = 0; r < src.height(); ++r) {
    std::memcpy(row(y + r) + std::size_t(x) * 3, src.row(r), std::size_t(src.width()) * 3);
  }
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(Errc::kImageCodec, "empty image buffer");
  const cv::Mat buf(1, int(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  const cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(Errc::kImageCodec, "undecodable image");
  return from_bgr_mat(bgr);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  // fixed compression keeps outputs byte-stable across runs
  return encode(img, ".png", {cv::IMWRITE_PNG_COMPRESSION, 3});
}

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
  return encode(img, ".jpg", {cv::IMWRITE_JPEG_QUALITY, quality});
}

Image read_image(const std::filesystem::path& path) {
  return decode_image(read_file_bytes(path));
}

void write_image(const std::filesystem::path& path, const Image& img) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    write_file_bytes(path, encode_png(img));
  } else if (ext == ".jpg" || ext == ".jpeg") {
    write_file_bytes(path, encode_jpeg(img));
  } else {
    throw Error(Errc::kImageCodec, "unsupported image extension: " + ext);
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(Errc::kIo, "short write to " + path.string());
}

}  // namespace streetside
