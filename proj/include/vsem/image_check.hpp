#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace vsem {

enum class ImageFormat { Png, Jpeg, Gif, Bmp };

enum class ImageCheck {
  Ok,
  Empty,
  UnknownFormat,  // not a supported raster container (audio, text, ...)
  Truncated,      // stream ends before the format's terminator
  Corrupt,        // structurally invalid: bad CRC, bad header fields, bad compressed data
};

struct ImageValidation {
  ImageCheck status = ImageCheck::Empty;
  std::optional<ImageFormat> format;

  bool ok() const noexcept { return status == ImageCheck::Ok; }
};

std::string_view image_check_name(ImageCheck c) noexcept;
std::string_view image_format_name(ImageFormat f) noexcept;

/// Detects the container by magic bytes, then walks it to the end. PNG image
/// data is fully inflated and size-checked; JPEG, GIF and BMP are walked
/// segment by segment.
ImageValidation validate_image(std::span<const std::uint8_t> bytes);

/// Filter i of the cascade.
inline bool filter_valid_image(std::span<const std::uint8_t> bytes) {
  return validate_image(bytes).ok();
}

}  // namespace vsem
