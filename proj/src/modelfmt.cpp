#include "erpq/modelfmt.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "erpq/binio.hpp"
#include "erpq/errors.hpp"

namespace erpq {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'Q', 'M'};

// Offset applied to 4-bit codes so the stored nibble is unsigned.
constexpr int kInt4Bias = 8;

bool is_int4(QuantScheme s) {
  return s == QuantScheme::sym_max_int4 || s == QuantScheme::affine_minmax_int4;
}

bool is_signed_int8(QuantScheme s) {
  return s == QuantScheme::sym_max_int8 || s == QuantScheme::affine_minmax_int8;
}

// Unsigned storage value for one code.
std::uint32_t storage_code(QuantScheme scheme, std::int16_t code) {
  if (is_int4(scheme)) return std::uint32_t(code + kInt4Bias);
  if (is_signed_int8(scheme))
    return std::uint32_t(std::uint8_t(static_cast<std::int8_t>(code)));
  return std::uint32_t(code);  // hist256 and codebook indices
}

std::int16_t logical_code(QuantScheme scheme, std::uint32_t stored) {
  if (is_int4(scheme)) return std::int16_t(int(stored) - kInt4Bias);
  if (is_signed_int8(scheme))
    return std::int16_t(static_cast<std::int8_t>(std::uint8_t(stored)));
  return std::int16_t(stored);
}

void append_payload(std::vector<std::uint8_t>& out, const QuantizedTensor& t) {
  const int width = bits_per_weight(t.scheme);
  if (t.scheme == QuantScheme::float64) {
    for (const double v : t.raw) detail::put_f64(out, v);
    return;
  }
  if (width == 8) {
    for (const std::int16_t c : t.codes)
      out.push_back(std::uint8_t(storage_code(t.scheme, c)));
    return;
  }
  // 1/2/3/4-bit: LSB-first bitstream, zero padding in the last byte
  std::uint32_t acc = 0;
  int filled = 0;
  for (const std::int16_t c : t.codes) {
    acc |= storage_code(t.scheme, c) << filled;
    filled += width;
    while (filled >= 8) {
      out.push_back(std::uint8_t(acc & 0xFF));
      acc >>= 8;
      filled -= 8;
    }
  }
  if (filled > 0) out.push_back(std::uint8_t(acc & 0xFF));
}

void read_payload(detail::ByteReader& in, QuantizedTensor& t,
                  const std::string& where) {
  const std::uint64_t n = t.element_count();
  const int width = bits_per_weight(t.scheme);
  const std::uint64_t nbytes = payload_byte_count(n, t.scheme);
  const std::uint8_t* p = in.bytes(nbytes, where.c_str());

  if (t.scheme == QuantScheme::float64) {
    t.raw.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= std::uint64_t(p[i * 8 + b]) << (8 * b);
      std::memcpy(&t.raw[i], &bits, 8);
    }
    return;
  }

  t.codes.resize(n);
  if (width == 8) {
    for (std::uint64_t i = 0; i < n; ++i)
      t.codes[i] = logical_code(t.scheme, p[i]);
    return;
  }

  const std::uint32_t mask = (1u << width) - 1u;
  std::uint64_t bitpos = 0;
  for (std::uint64_t i = 0; i < n; ++i, bitpos += width) {
    const std::uint64_t byte = bitpos >> 3;
    const int shift = int(bitpos & 7);
    std::uint32_t v = p[byte] >> shift;
    if (shift + width > 8) v |= std::uint32_t(p[byte + 1]) << (8 - shift);
    t.codes[i] = logical_code(t.scheme, v & mask);
  }
  // padding bits beyond the last code must be zero
  const std::uint64_t used_bits = n * std::uint64_t(width);
  if (used_bits < nbytes * 8) {
    const std::uint64_t byte = used_bits >> 3;
    const int shift = int(used_bits & 7);
    if ((p[byte] >> shift) != 0)
      throw FormatError("nonzero padding bits in " + where);
  }
}

}  // namespace

std::string_view section_kind_name(SectionKind kind) {
  switch (kind) {
    case SectionKind::xdawn_filters: return "xdawn_filters";
    case SectionKind::blda: return "blda";
    case SectionKind::elm_input: return "elm_input";
    case SectionKind::elm_bias: return "elm_bias";
    case SectionKind::elm_output: return "elm_output";
    case SectionKind::standardizer: return "standardizer";
  }
  throw FormatError("unknown section kind " + std::to_string(int(kind)));
}

std::uint64_t payload_byte_count(std::uint64_t element_count,
                                 QuantScheme scheme) {
  const std::uint64_t bits =
      element_count * std::uint64_t(bits_per_weight(scheme));
  return (bits + 7) / 8;
}

std::vector<std::uint8_t> encode_model(
    const std::vector<ModelSection>& sections) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  detail::put_u16(out, kModelFormatVersion);
  if (sections.size() > 0xFFFF)
    throw ConfigError("too many sections for the model container");
  detail::put_u16(out, std::uint16_t(sections.size()));

  for (const ModelSection& s : sections) {
    const QuantizedTensor& t = s.tensor;
    if (t.element_count() == 0)
      throw ConfigError("cannot serialize an empty section");
    const std::size_t expect =
        t.scheme == QuantScheme::float64 ? t.raw.size() : t.codes.size();
    if (expect != t.element_count())
      throw ConfigError("section dims do not match its payload length");
    if (t.norm_params.size() != std::size_t(norm_param_count(t.scheme)))
      throw ConfigError("section normalization parameter count is wrong for " +
                        std::string(scheme_name(t.scheme)));

    detail::put_u8(out, std::uint8_t(s.kind));
    detail::put_u8(out, std::uint8_t(t.scheme));
    detail::put_u32(out, t.rows);
    detail::put_u32(out, t.cols);
    detail::put_u32(out, std::uint32_t(t.norm_params.size()));
    for (const double v : t.norm_params) detail::put_f64(out, v);
    append_payload(out, t);
  }
  return out;
}

std::vector<ModelSection> decode_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes.data(), bytes.size());

  const std::uint8_t* magic = in.bytes(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic at byte 0: not a PTQM model file");
  const std::uint16_t version = in.u16("version");
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " +
                      std::to_string(version) + " at byte 4");
  const std::uint16_t count = in.u16("section count");

  std::vector<ModelSection> sections;
  sections.reserve(count);
  for (std::uint16_t k = 0; k < count; ++k) {
    const std::string where = "section " + std::to_string(k);
    ModelSection s;
    const std::uint8_t kind = in.u8("section kind");
    if (kind > std::uint8_t(SectionKind::standardizer))
      throw FormatError("unknown section kind " + std::to_string(kind) +
                        " at byte " + std::to_string(in.offset() - 1));
    s.kind = SectionKind(kind);

    const std::uint8_t scheme = in.u8("section scheme");
    if (scheme > std::uint8_t(QuantScheme::codebook3))
      throw FormatError("unknown scheme tag " + std::to_string(scheme) +
                        " at byte " + std::to_string(in.offset() - 1));
    s.tensor.scheme = QuantScheme(scheme);

    s.tensor.rows = in.u32("rows");
    s.tensor.cols = in.u32("cols");
    if (s.tensor.element_count() == 0)
      throw FormatError(where + " has zero elements");

    const std::uint32_t nnorm = in.u32("norm param count");
    if (nnorm != std::uint32_t(norm_param_count(s.tensor.scheme)))
      throw FormatError(where + " declares " + std::to_string(nnorm) +
                        " normalization parameters; scheme " +
                        std::string(scheme_name(s.tensor.scheme)) +
                        " stores " +
                        std::to_string(norm_param_count(s.tensor.scheme)));
    s.tensor.norm_params.resize(nnorm);
    for (std::uint32_t i = 0; i < nnorm; ++i)
      s.tensor.norm_params[i] = in.f64("norm param");

    read_payload(in, s.tensor, where + " payload");
    sections.push_back(std::move(s));
  }
  if (in.remaining() != 0)
    throw FormatError("trailing bytes after last section at byte " +
                      std::to_string(in.offset()));
  return sections;
}

std::size_t save_model(const std::vector<ModelSection>& sections,
                       const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_model(sections);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
  return bytes.size();
}

std::vector<ModelSection> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 &&
      !in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw IoError("read failed for " + path.string());
  return decode_model(bytes);
}

}  // namespace erpq
