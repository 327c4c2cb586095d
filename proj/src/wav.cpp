#include "remaster/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace remaster {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct ParsedHeader {
  WavInfo info;
  std::streamoff data_offset = 0;
  std::size_t data_bytes = 0;
};

[[noreturn]] void fail(WavErrorKind kind, const std::filesystem::path& path, const char* what) {
  throw WavError(kind, std::string(what) + ": " + path.string());
}

ParsedHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 12> riff{};
  if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size()))
    fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (not a RIFF/WAVE file)");
  if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
    fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (not a RIFF/WAVE file)");

  ParsedHeader h;
  bool have_fmt = false;
  std::uint16_t format = 0;
  for (;;) {
    std::array<unsigned char, 8> chunk{};
    if (!in.read(reinterpret_cast<char*>(chunk.data()), chunk.size())) {
      if (!have_fmt) fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (no fmt chunk)");
      fail(WavErrorKind::truncated, path, "truncated chunk (no data chunk)");
    }
    const std::uint32_t size = read_u32(chunk.data() + 4);
    if (std::memcmp(chunk.data(), "fmt ", 4) == 0) {
      if (size < 16) fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (short fmt chunk)");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
        fail(WavErrorKind::truncated, path, "truncated chunk (fmt)");
      format = read_u16(fmt.data());
      h.info.channels = read_u16(fmt.data() + 2);
      h.info.sample_rate = read_u32(fmt.data() + 4);
      h.info.bits_per_sample = read_u16(fmt.data() + 14);
      if (format == kFormatExtensible && size >= 26) format = read_u16(fmt.data() + 24);
      have_fmt = true;
      if (size % 2) in.ignore(1);
    } else if (std::memcmp(chunk.data(), "data", 4) == 0) {
      if (!have_fmt) fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (data before fmt)");
      h.data_offset = in.tellg();
      h.data_bytes = size;
      break;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
      if (!in) fail(WavErrorKind::truncated, path, "truncated chunk");
    }
  }

  const bool pcm_ok = format == kFormatPcm &&
                      (h.info.bits_per_sample == 16 || h.info.bits_per_sample == 24);
  const bool float_ok = format == kFormatFloat && h.info.bits_per_sample == 32;
  if (!pcm_ok && !float_ok) fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth");
  if (h.info.channels != 1 && h.info.channels != 2)
    fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (channel count)");
  if (h.info.sample_rate <= 0) fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (sample rate)");
  h.info.is_float = float_ok;

  const std::size_t frame_bytes = h.info.channels * (h.info.bits_per_sample / 8);
  in.seekg(0, std::ios::end);
  const auto file_end = static_cast<std::size_t>(in.tellg());
  const auto available = file_end - static_cast<std::size_t>(h.data_offset);
  if (available < h.data_bytes || h.data_bytes % frame_bytes != 0)
    fail(WavErrorKind::truncated, path, "truncated chunk (data)");
  h.info.frames = h.data_bytes / frame_bytes;
  if (h.info.frames == 0) fail(WavErrorKind::truncated, path, "truncated chunk (empty data)");
  return h;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(WavErrorKind::missing_file, path, "missing file");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(WavErrorKind::missing_file, path, "missing file");
  return in;
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::int32_t quantize(double x, int bits) {
  const double scale = std::ldexp(1.0, bits - 1);
  const double code = std::round(x * scale);
  return static_cast<std::int32_t>(std::clamp(code, -scale, scale - 1.0));
}

}  // namespace

WavInfo probe_wav(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return parse_header(in, path).info;
}

StereoWaveform load_wav(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const ParsedHeader h = parse_header(in, path);
  std::vector<unsigned char> raw(h.data_bytes);
  in.seekg(h.data_offset);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    fail(WavErrorKind::truncated, path, "truncated chunk (data)");

  const std::size_t n = h.info.frames;
  const std::size_t ch = h.info.channels;
  const std::size_t width = h.info.bits_per_sample / 8;
  std::vector<double> left(n), right(n);
  auto sample_at = [&](std::size_t frame, std::size_t c) -> double {
    const unsigned char* p = raw.data() + (frame * ch + c) * width;
    if (h.info.is_float) return static_cast<double>(std::bit_cast<float>(read_u32(p)));
    if (width == 2) return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
    if (v & 0x800000) v -= 0x1000000;
    return v / 8388608.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = sample_at(i, 0);
    right[i] = ch == 2 ? sample_at(i, 1) : left[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(left[i]) || !std::isfinite(right[i]))
      fail(WavErrorKind::unsupported_format, path, "unsupported codec/bit depth (non-finite float sample)");
  return StereoWaveform(std::move(left), std::move(right), h.info.sample_rate);
}

void save_wav(const StereoWaveform& wf, const std::filesystem::path& path, BitDepth depth) {
  const std::uint16_t bits = depth == BitDepth::pcm16 ? 16 : depth == BitDepth::pcm24 ? 24 : 32;
  const std::uint16_t format = depth == BitDepth::float32 ? kFormatFloat : kFormatPcm;
  const std::uint16_t channels = 2;
  const std::uint32_t block_align = channels * bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(wf.size() * block_align);
  const auto rate = static_cast<std::uint32_t>(std::lround(wf.sample_rate()));

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * block_align);
  put_u16(out, static_cast<std::uint16_t>(block_align));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);

  for (std::size_t i = 0; i < wf.size(); ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double x = wf.channel(c)[i];
      if (depth == BitDepth::float32) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
      } else if (depth == BitDepth::pcm16) {
        put_u16(out, static_cast<std::uint16_t>(quantize(x, 16)));
      } else {
        const auto v = static_cast<std::uint32_t>(quantize(x, 24));
        out.push_back(static_cast<unsigned char>(v & 0xFF));
        out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw WavError(WavErrorKind::unwritable, "cannot write: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw WavError(WavErrorKind::unwritable, "write failed: " + path.string());
}

BitDepth parse_bit_depth(const std::string& text) {
  if (text == "16") return BitDepth::pcm16;
  if (text == "24") return BitDepth::pcm24;
  if (text == "32f" || text == "32") return BitDepth::float32;
  throw InvalidArgument("bit depth must be 16, 24 or 32f, got '" + text + "'");
}

}  // namespace remaster
