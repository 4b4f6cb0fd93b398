#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace erpq {

// Storage schemes for model parameters. The integer schemes map weights to
// signed codes with float64 normalization parameters; the codebook schemes
// are the fixed level tables used for randomly initialized hidden layers;
// hist256 stores 8-bit bin indices plus a 256-entry bin-mean table.
enum class QuantScheme : std::uint8_t {
  float64 = 0,
  sym_max_int4 = 1,
  sym_max_int8 = 2,
  affine_minmax_int4 = 3,
  affine_minmax_int8 = 4,
  hist256 = 5,
  codebook1_pm = 6,  // {-1, 1}
  codebook1_01 = 7,  // {0, 1}
  codebook2 = 8,     // {-1, -0.33, 0.33, 1}
  codebook3 = 9,     // 8 levels between -1 and 1, 2/7 apart
};

std::string_view scheme_name(QuantScheme scheme);

// Storage cost of one weight under the scheme, in bits.
int bits_per_weight(QuantScheme scheme);

// Number of float64 normalization parameters the scheme stores per tensor.
// Codebook level tables are compile-time constants and cost nothing.
int norm_param_count(QuantScheme scheme);

bool is_codebook(QuantScheme scheme);

// Level table for the codebook schemes.
std::span<const double> codebook_levels(QuantScheme scheme);

struct QuantizedTensor {
  QuantScheme scheme = QuantScheme::float64;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  // Codes in column-major element order. int4: [-8,7]; int8: [-128,127];
  // hist256: [0,255]; codebookN: level index. Empty for float64.
  std::vector<std::int16_t> codes;
  // sym: [s]; affine: [vmin, vmax]; hist256: the 256 bin values.
  std::vector<double> norm_params;
  // float64 scheme keeps the values verbatim (column-major).
  std::vector<double> raw;

  std::uint64_t element_count() const {
    return std::uint64_t(rows) * std::uint64_t(cols);
  }
};

// Codecs. All are total on finite non-empty input; non-finite values raise
// NumericError and an empty tensor raises ConfigError. Rounding is
// half-away-from-zero throughout.
QuantizedTensor quantize_sym_max(Eigen::Ref<const Eigen::MatrixXd> weights,
                                 int bits);
QuantizedTensor quantize_affine_minmax(
    Eigen::Ref<const Eigen::MatrixXd> weights, int bits);
QuantizedTensor quantize_hist256(Eigen::Ref<const Eigen::MatrixXd> weights);
QuantizedTensor quantize_codebook(Eigen::Ref<const Eigen::MatrixXd> weights,
                                  QuantScheme scheme);

// Dispatch on the scheme tag; float64 is the identity encoding.
QuantizedTensor quantize(Eigen::Ref<const Eigen::MatrixXd> weights,
                         QuantScheme scheme);

Eigen::MatrixXd dequantize(const QuantizedTensor& t);

// quantize then dequantize, the storage round trip applied in evaluation.
Eigen::MatrixXd quantize_dequantize(Eigen::Ref<const Eigen::MatrixXd> weights,
                                    QuantScheme scheme);

// --- size accounting -------------------------------------------------------

struct SizeBreakdown {
  std::uint64_t filter_bits = 0;
  std::uint64_t classifier_bits = 0;
  std::uint64_t total_bits = 0;
};

// (element_count, scheme)
using TensorDesc = std::pair<std::uint64_t, QuantScheme>;

// Logical storage cost: element_count * bits_per_weight + 64 bits per
// normalization parameter. Unpadded; file padding is accounted separately.
std::uint64_t tensor_size_bits(std::uint64_t element_count, QuantScheme scheme);

SizeBreakdown model_size_bits(const std::vector<TensorDesc>& filter_parts,
                              const std::vector<TensorDesc>& classifier_parts);

}  // namespace erpq
