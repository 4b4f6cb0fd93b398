#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "erpq/quant.hpp"

namespace erpq {

// "PTQM" model container. Little-endian throughout. Layout:
//   magic "PTQM", version u16, section_count u16
//   per section: kind u8, scheme u8, rows u32, cols u32,
//                norm_param_count u32, norm_params f64[],
//                payload ceil(rows*cols*bits_per_weight/8) bytes
// Payload packing, by scheme width:
//   64-bit  float64 values verbatim
//   8-bit   signed bytes (hist256 indices unsigned)
//   4-bit   offset-binary code+8, two per byte, low nibble = even index
//   1/2/3-bit  codes packed LSB-first as a continuous bitstream
// Padding bits in the final payload byte must be zero.

inline constexpr std::uint16_t kModelFormatVersion = 1;

enum class SectionKind : std::uint8_t {
  xdawn_filters = 0,
  blda = 1,
  elm_input = 2,
  elm_bias = 3,
  elm_output = 4,
  standardizer = 5,
};

std::string_view section_kind_name(SectionKind kind);

struct ModelSection {
  SectionKind kind;
  QuantizedTensor tensor;
};

std::vector<std::uint8_t> encode_model(const std::vector<ModelSection>& sections);
std::vector<ModelSection> decode_model(const std::vector<std::uint8_t>& bytes);

// Returns the byte count written.
std::size_t save_model(const std::vector<ModelSection>& sections,
                       const std::filesystem::path& path);
std::vector<ModelSection> load_model(const std::filesystem::path& path);

// Exact payload byte count for a section body, the ceil rule above.
std::uint64_t payload_byte_count(std::uint64_t element_count, QuantScheme scheme);

}  // namespace erpq
