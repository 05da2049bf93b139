#include "relprop/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "relprop/error.hpp"
#include "relprop/nnwb.hpp"

namespace relprop::pgm {
namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > UINT32_MAX) throw FormatError(std::string("PGM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PGM header: expected ") + what, start);
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("PGM header: expected whitespace before raster", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("not a binary PGM (expected P5 magic)", 0);
  }
  HeaderParser p(bytes.subspan(2));
  const auto width = p.number("width");
  const auto height = p.number("height");
  const std::size_t maxval_at = p.offset() + 2;
  const auto maxval = p.number("maxval");
  if (maxval != 255) {
    throw FormatError("unsupported PGM maxval " + std::to_string(maxval) + " (need 255)", maxval_at);
  }
  if (width == 0 || height == 0) throw FormatError("PGM with zero width or height", 2);
  p.single_whitespace();
  const std::size_t raster = p.offset() + 2;
  const std::uint64_t count = width * height;
  if (bytes.size() - raster < count) {
    throw FormatError("PGM raster shorter than " + std::to_string(width) + "x" +
                          std::to_string(height),
                      bytes.size());
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<float>(bytes[raster + i]);
  return Tensor({height, width, 1}, std::move(data));
}

Tensor load(const std::filesystem::path& path) { return decode(nnwb::read_file(path)); }

std::vector<std::uint8_t> encode(const Tensor& image) {
  const bool ok = image.rank() == 2 || (image.rank() == 3 && image.dim(2) == 1);
  if (!ok) throw InvalidInput("PGM export needs an H x W or H x W x 1 tensor");
  const std::string header =
      "P5\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + image.size());
  for (float v : image.values()) {
    const double r = std::floor(static_cast<double>(v) + 0.5);
    out.push_back(static_cast<std::uint8_t>(std::isnan(r) ? 0.0 : std::clamp(r, 0.0, 255.0)));
  }
  return out;
}

void save(const Tensor& image, const std::filesystem::path& path) {
  nnwb::write_file(path, encode(image));
}

}  // namespace relprop::pgm
