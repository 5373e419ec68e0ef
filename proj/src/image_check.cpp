#include "vsem/image_check.hpp"

#include <zlib.h>

#include <array>
#include <cstring>
#include <vector>

namespace vsem {

namespace {

using ByteSpan = std::span<const std::uint8_t>;

std::uint32_t be32(ByteSpan b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}
std::uint16_t be16(ByteSpan b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}
std::uint16_t le16(ByteSpan b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
std::uint32_t le32(ByteSpan b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) |
         (std::uint32_t{b[at + 2]} << 16) | (std::uint32_t{b[at + 3]} << 24);
}

// ---- PNG ------------------------------------------------------------------

constexpr std::array<std::uint8_t, 8> kPngMagic = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct PngHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  unsigned bit_depth = 0;
  unsigned color_type = 0;
  bool interlaced = false;
};

unsigned png_channels(unsigned color_type) {
  switch (color_type) {
    case 0: return 1;
    case 2: return 3;
    case 3: return 1;
    case 4: return 2;
    case 6: return 4;
    default: return 0;
  }
}

bool png_depth_allowed(unsigned color_type, unsigned depth) {
  switch (color_type) {
    case 0: return depth == 1 || depth == 2 || depth == 4 || depth == 8 || depth == 16;
    case 3: return depth == 1 || depth == 2 || depth == 4 || depth == 8;
    case 2:
    case 4:
    case 6: return depth == 8 || depth == 16;
    default: return false;
  }
}

std::uint64_t png_pass_bytes(std::uint64_t w, std::uint64_t h, std::uint64_t bits_per_pixel) {
  if (w == 0 || h == 0) return 0;
  return h * (1 + (w * bits_per_pixel + 7) / 8);
}

std::uint64_t png_expected_raw_size(const PngHeader& hdr) {
  const std::uint64_t bpp = std::uint64_t{png_channels(hdr.color_type)} * hdr.bit_depth;
  if (!hdr.interlaced) return png_pass_bytes(hdr.width, hdr.height, bpp);
  static constexpr std::array<std::array<unsigned, 4>, 7> kAdam7 = {{
      {0, 0, 8, 8}, {4, 0, 8, 8}, {0, 4, 4, 8}, {2, 0, 4, 4}, {0, 2, 2, 4}, {1, 0, 2, 2}, {0, 1, 1, 2},
  }};
  std::uint64_t total = 0;
  for (const auto& p : kAdam7) {
    const std::uint64_t w = hdr.width > p[0] ? (hdr.width - p[0] + p[2] - 1) / p[2] : 0;
    const std::uint64_t h = hdr.height > p[1] ? (hdr.height - p[1] + p[3] - 1) / p[3] : 0;
    total += png_pass_bytes(w, h, bpp);
  }
  return total;
}

// Inflates the concatenated IDAT payload without materialising it and checks
// it yields exactly the expected number of filtered scanline bytes.
ImageCheck png_inflate_check(const std::vector<std::uint8_t>& idat, std::uint64_t expected) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) return ImageCheck::Corrupt;
  zs.next_in = const_cast<Bytef*>(idat.data());
  zs.avail_in = static_cast<uInt>(idat.size());
  std::array<std::uint8_t, 16384> chunk{};
  std::uint64_t produced = 0;
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    produced += chunk.size() - zs.avail_out;
    if (produced > expected) break;
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
  }
  inflateEnd(&zs);
  if (produced > expected) return ImageCheck::Corrupt;
  if (rc == Z_STREAM_END) return produced == expected ? ImageCheck::Ok : ImageCheck::Corrupt;
  if (rc == Z_BUF_ERROR || rc == Z_OK) return ImageCheck::Truncated;
  return ImageCheck::Corrupt;
}

ImageCheck check_png(ByteSpan b) {
  std::size_t pos = kPngMagic.size();
  PngHeader hdr;
  bool have_header = false;
  bool have_palette = false;
  std::vector<std::uint8_t> idat;
  while (true) {
    if (pos + 12 > b.size()) return ImageCheck::Truncated;
    const std::uint32_t len = be32(b, pos);
    if (len > 0x7fffffffu) return ImageCheck::Corrupt;
    if (pos + 12 + std::uint64_t{len} > b.size()) return ImageCheck::Truncated;
    const std::uint8_t* type = b.data() + pos + 4;
    const std::uint8_t* data = type + 4;
    const std::uint32_t stored_crc = be32(b, pos + 8 + len);
    const auto crc = static_cast<std::uint32_t>(crc32(crc32(0, nullptr, 0), type, 4 + len));
    if (crc != stored_crc) return ImageCheck::Corrupt;

    if (!have_header) {
      if (std::memcmp(type, "IHDR", 4) != 0 || len != 13) return ImageCheck::Corrupt;
      ByteSpan d(data, len);
      hdr.width = be32(d, 0);
      hdr.height = be32(d, 4);
      hdr.bit_depth = d[8];
      hdr.color_type = d[9];
      if (hdr.width == 0 || hdr.height == 0) return ImageCheck::Corrupt;
      if (!png_depth_allowed(hdr.color_type, hdr.bit_depth)) return ImageCheck::Corrupt;
      if (d[10] != 0 || d[11] != 0 || d[12] > 1) return ImageCheck::Corrupt;
      hdr.interlaced = d[12] == 1;
      have_header = true;
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      if (len == 0 || len % 3 != 0 || len > 768) return ImageCheck::Corrupt;
      have_palette = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      if (hdr.color_type == 3 && !have_palette) return ImageCheck::Corrupt;
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      if (idat.empty()) return ImageCheck::Corrupt;
      return png_inflate_check(idat, png_expected_raw_size(hdr));
    }
    pos += 12 + std::size_t{len};
  }
}

// ---- JPEG -----------------------------------------------------------------

bool is_sof(std::uint8_t m) {
  return m >= 0xc0 && m <= 0xcf && m != 0xc4 && m != 0xc8 && m != 0xcc;
}

ImageCheck check_jpeg(ByteSpan b) {
  std::size_t pos = 2;
  bool have_frame = false;
  bool have_scan = false;
  while (true) {
    if (pos >= b.size()) return ImageCheck::Truncated;
    if (b[pos] != 0xff) return ImageCheck::Corrupt;
    while (pos < b.size() && b[pos] == 0xff) ++pos;
    if (pos >= b.size()) return ImageCheck::Truncated;
    const std::uint8_t marker = b[pos++];
    if (marker == 0xd9) {
      return have_frame && have_scan ? ImageCheck::Ok : ImageCheck::Corrupt;
    }
    if (marker == 0x00 || marker == 0xd8) return ImageCheck::Corrupt;
    if (marker == 0x01 || (marker >= 0xd0 && marker <= 0xd7)) continue;

    if (pos + 2 > b.size()) return ImageCheck::Truncated;
    const std::uint16_t len = be16(b, pos);
    if (len < 2) return ImageCheck::Corrupt;
    if (pos + len > b.size()) return ImageCheck::Truncated;
    ByteSpan seg = b.subspan(pos + 2, len - 2u);

    if (is_sof(marker)) {
      if (seg.size() < 6) return ImageCheck::Corrupt;
      const std::uint16_t width = be16(seg, 3);
      const unsigned components = seg[5];
      if (width == 0 || components == 0 || seg.size() < 6 + 3u * components) {
        return ImageCheck::Corrupt;
      }
      have_frame = true;
    }
    pos += len;

    if (marker == 0xda) {
      if (!have_frame || seg.empty() || seg[0] == 0) return ImageCheck::Corrupt;
      have_scan = true;
      // Entropy-coded data runs until a marker that is neither a stuffed zero
      // nor a restart marker.
      while (true) {
        if (pos + 1 >= b.size()) return ImageCheck::Truncated;
        if (b[pos] == 0xff) {
          const std::uint8_t next = b[pos + 1];
          if (next == 0x00 || (next >= 0xd0 && next <= 0xd7) || next == 0xff) {
            pos += next == 0xff ? 1 : 2;
            continue;
          }
          break;
        }
        ++pos;
      }
    }
  }
}

// ---- GIF ------------------------------------------------------------------

// Returns the position after a chain of data sub-blocks, or nullopt when the
// chain runs off the end of the buffer.
std::optional<std::size_t> skip_sub_blocks(ByteSpan b, std::size_t pos) {
  while (true) {
    if (pos >= b.size()) return std::nullopt;
    const std::size_t n = b[pos++];
    if (n == 0) return pos;
    pos += n;
  }
}

ImageCheck check_gif(ByteSpan b) {
  if (b.size() < 13) return ImageCheck::Truncated;
  if (le16(b, 6) == 0 || le16(b, 8) == 0) return ImageCheck::Corrupt;
  const std::uint8_t packed = b[10];
  std::size_t pos = 13;
  if (packed & 0x80) pos += 3u * (1u << ((packed & 0x07) + 1));
  std::size_t frames = 0;
  while (true) {
    if (pos >= b.size()) return ImageCheck::Truncated;
    const std::uint8_t block = b[pos++];
    if (block == 0x3b) return frames > 0 ? ImageCheck::Ok : ImageCheck::Corrupt;
    if (block == 0x21) {
      if (pos >= b.size()) return ImageCheck::Truncated;
      auto next = skip_sub_blocks(b, pos + 1);
      if (!next) return ImageCheck::Truncated;
      pos = *next;
    } else if (block == 0x2c) {
      if (pos + 9 > b.size()) return ImageCheck::Truncated;
      if (le16(b, pos + 4) == 0 || le16(b, pos + 6) == 0) return ImageCheck::Corrupt;
      const std::uint8_t local = b[pos + 8];
      pos += 9;
      if (local & 0x80) pos += 3u * (1u << ((local & 0x07) + 1));
      if (pos >= b.size()) return ImageCheck::Truncated;
      const std::uint8_t min_code = b[pos++];
      if (min_code < 2 || min_code > 11) return ImageCheck::Corrupt;
      auto next = skip_sub_blocks(b, pos);
      if (!next) return ImageCheck::Truncated;
      pos = *next;
      ++frames;
    } else {
      return ImageCheck::Corrupt;
    }
  }
}

// ---- BMP ------------------------------------------------------------------

ImageCheck check_bmp(ByteSpan b) {
  if (b.size() < 26) return ImageCheck::Truncated;
  const std::uint32_t declared_size = le32(b, 2);
  const std::uint32_t pixel_offset = le32(b, 10);
  const std::uint32_t dib_size = le32(b, 14);
  std::int64_t width = 0;
  std::int64_t height = 0;
  unsigned planes = 0;
  unsigned bpp = 0;
  std::uint32_t compression = 0;
  std::uint32_t image_size = 0;
  if (dib_size == 12) {
    width = le16(b, 18);
    height = le16(b, 20);
    planes = le16(b, 22);
    bpp = le16(b, 24);
  } else if (dib_size == 40 || dib_size == 52 || dib_size == 56 || dib_size == 64 ||
             dib_size == 108 || dib_size == 124) {
    if (b.size() < 14u + 40u) return ImageCheck::Truncated;
    width = static_cast<std::int32_t>(le32(b, 18));
    height = static_cast<std::int32_t>(le32(b, 22));
    planes = le16(b, 26);
    bpp = le16(b, 28);
    compression = le32(b, 30);
    image_size = le32(b, 34);
  } else {
    return ImageCheck::Corrupt;
  }
  if (planes != 1 || width <= 0 || height == 0) return ImageCheck::Corrupt;
  if (bpp != 1 && bpp != 4 && bpp != 8 && bpp != 16 && bpp != 24 && bpp != 32) {
    return ImageCheck::Corrupt;
  }
  if (pixel_offset < 14u + dib_size) return ImageCheck::Corrupt;
  if (declared_size != 0 && declared_size > b.size()) return ImageCheck::Truncated;

  std::uint64_t needed = 0;
  if (compression == 0 || compression == 3 || compression == 6) {
    const std::uint64_t stride = ((static_cast<std::uint64_t>(width) * bpp + 31) / 32) * 4;
    needed = stride * static_cast<std::uint64_t>(height < 0 ? -height : height);
  } else if (compression == 1 || compression == 2) {
    if (image_size == 0) return ImageCheck::Corrupt;
    needed = image_size;
  } else {
    return ImageCheck::Corrupt;
  }
  if (pixel_offset + needed > b.size()) return ImageCheck::Truncated;
  return ImageCheck::Ok;
}

}  // namespace

std::string_view image_check_name(ImageCheck c) noexcept {
  switch (c) {
    case ImageCheck::Ok: return "ok";
    case ImageCheck::Empty: return "empty";
    case ImageCheck::UnknownFormat: return "unknown_format";
    case ImageCheck::Truncated: return "truncated";
    case ImageCheck::Corrupt: return "corrupt";
  }
  return "";
}

std::string_view image_format_name(ImageFormat f) noexcept {
  switch (f) {
    case ImageFormat::Png: return "png";
    case ImageFormat::Jpeg: return "jpeg";
    case ImageFormat::Gif: return "gif";
    case ImageFormat::Bmp: return "bmp";
  }
  return "";
}

ImageValidation validate_image(std::span<const std::uint8_t> bytes) {
  ImageValidation out;
  if (bytes.empty()) return out;
  auto starts_with = [&](std::string_view magic) {
    return bytes.size() >= magic.size() && std::memcmp(bytes.data(), magic.data(), magic.size()) == 0;
  };
  if (bytes.size() >= kPngMagic.size() &&
      std::memcmp(bytes.data(), kPngMagic.data(), kPngMagic.size()) == 0) {
    out.format = ImageFormat::Png;
    out.status = check_png(bytes);
  } else if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff) {
    out.format = ImageFormat::Jpeg;
    out.status = check_jpeg(bytes);
  } else if (starts_with("GIF87a") || starts_with("GIF89a")) {
    out.format = ImageFormat::Gif;
    out.status = check_gif(bytes);
  } else if (starts_with("BM")) {
    out.format = ImageFormat::Bmp;
    out.status = check_bmp(bytes);
  } else {
    out.status = ImageCheck::UnknownFormat;
  }
  return out;
}

}  // namespace vsem
