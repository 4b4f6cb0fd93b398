#include "erpq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "erpq/errors.hpp"

namespace erpq {

namespace {

constexpr std::array<double, 2> kLevelsPm = {-1.0, 1.0};
constexpr std::array<double, 2> kLevels01 = {0.0, 1.0};
// The 2-bit table uses the literal decimals -0.33/0.33, not thirds.
constexpr std::array<double, 4> kLevels2 = {-1.0, -0.33, 0.33, 1.0};
constexpr std::array<double, 8> kLevels3 = {
    -1.0, -5.0 / 7.0, -3.0 / 7.0, -1.0 / 7.0, 1.0 / 7.0, 3.0 / 7.0, 5.0 / 7.0,
    1.0};

void require_valid_input(Eigen::Ref<const Eigen::MatrixXd> w) {
  if (w.size() == 0) throw ConfigError("cannot quantize an empty tensor");
  if (!w.allFinite())
    throw NumericError("cannot quantize non-finite weights");
}

// std::round rounds halfway cases away from zero, the rule used everywhere.
double round_half_away(double x) { return std::round(x); }

QuantizedTensor make_tensor(Eigen::Ref<const Eigen::MatrixXd> w,
                            QuantScheme scheme) {
  QuantizedTensor t;
  t.scheme = scheme;
  t.rows = static_cast<std::uint32_t>(w.rows());
  t.cols = static_cast<std::uint32_t>(w.cols());
  return t;
}

int sym_bits(QuantScheme s) {
  return s == QuantScheme::sym_max_int4 ? 4 : 8;
}

}  // namespace

std::string_view scheme_name(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::float64: return "float64";
    case QuantScheme::sym_max_int4: return "sym_max_int4";
    case QuantScheme::sym_max_int8: return "sym_max_int8";
    case QuantScheme::affine_minmax_int4: return "affine_minmax_int4";
    case QuantScheme::affine_minmax_int8: return "affine_minmax_int8";
    case QuantScheme::hist256: return "hist256";
    case QuantScheme::codebook1_pm: return "codebook1_pm";
    case QuantScheme::codebook1_01: return "codebook1_01";
    case QuantScheme::codebook2: return "codebook2";
    case QuantScheme::codebook3: return "codebook3";
  }
  throw ConfigError("unknown quantization scheme tag " +
                    std::to_string(int(scheme)));
}

int bits_per_weight(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::float64: return 64;
    case QuantScheme::sym_max_int4:
    case QuantScheme::affine_minmax_int4: return 4;
    case QuantScheme::sym_max_int8:
    case QuantScheme::affine_minmax_int8:
    case QuantScheme::hist256: return 8;
    case QuantScheme::codebook1_pm:
    case QuantScheme::codebook1_01: return 1;
    case QuantScheme::codebook2: return 2;
    case QuantScheme::codebook3: return 3;
  }
  throw ConfigError("unknown quantization scheme tag " +
                    std::to_string(int(scheme)));
}

int norm_param_count(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::float64: return 0;
    case QuantScheme::sym_max_int4:
    case QuantScheme::sym_max_int8: return 1;
    case QuantScheme::affine_minmax_int4:
    case QuantScheme::affine_minmax_int8: return 2;
    case QuantScheme::hist256: return 256;
    case QuantScheme::codebook1_pm:
    case QuantScheme::codebook1_01:
    case QuantScheme::codebook2:
    case QuantScheme::codebook3: return 0;
  }
  throw ConfigError("unknown quantization scheme tag " +
                    std::to_string(int(scheme)));
}

bool is_codebook(QuantScheme scheme) {
  return scheme == QuantScheme::codebook1_pm ||
         scheme == QuantScheme::codebook1_01 ||
         scheme == QuantScheme::codebook2 || scheme == QuantScheme::codebook3;
}

std::span<const double> codebook_levels(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::codebook1_pm: return kLevelsPm;
    case QuantScheme::codebook1_01: return kLevels01;
    case QuantScheme::codebook2: return kLevels2;
    case QuantScheme::codebook3: return kLevels3;
    default:
      throw ConfigError(std::string("scheme ") +
                        std::string(scheme_name(scheme)) +
                        " has no codebook");
  }
}

QuantizedTensor quantize_sym_max(Eigen::Ref<const Eigen::MatrixXd> w,
                                 int bits) {
  require_valid_input(w);
  if (bits != 4 && bits != 8)
    throw ConfigError("symmetric quantization supports 4 or 8 bits");
  QuantizedTensor t = make_tensor(
      w, bits == 4 ? QuantScheme::sym_max_int4 : QuantScheme::sym_max_int8);

  double s = w.cwiseAbs().maxCoeff();
  if (s == 0.0) s = 1.0;  // all-zero input: unit scale, all-zero codes
  const double q = double((1 << (bits - 1)) - 1);

  t.codes.resize(w.size());
  const double* p = w.data();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double c = round_half_away(p[i] * q / s);
    t.codes[i] = static_cast<std::int16_t>(std::clamp(c, -q, q));
  }
  t.norm_params = {s};
  return t;
}

QuantizedTensor quantize_affine_minmax(Eigen::Ref<const Eigen::MatrixXd> w,
                                       int bits) {
  require_valid_input(w);
  if (bits != 4 && bits != 8)
    throw ConfigError("affine quantization supports 4 or 8 bits");
  QuantizedTensor t = make_tensor(w, bits == 4
                                         ? QuantScheme::affine_minmax_int4
                                         : QuantScheme::affine_minmax_int8);

  const double vmin = w.minCoeff();
  const double vmax = w.maxCoeff();
  const double qmin = -double(1 << (bits - 1));
  const double qmax = double((1 << (bits - 1)) - 1);

  t.codes.resize(w.size());
  const double* p = w.data();
  if (vmax > vmin) {
    const double scale = (qmax - qmin) / (vmax - vmin);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double c = qmin + round_half_away((p[i] - vmin) * scale);
      t.codes[i] = static_cast<std::int16_t>(std::clamp(c, qmin, qmax));
    }
  } else {
    std::fill(t.codes.begin(), t.codes.end(),
              static_cast<std::int16_t>(qmin));
  }
  t.norm_params = {vmin, vmax};
  return t;
}

QuantizedTensor quantize_hist256(Eigen::Ref<const Eigen::MatrixXd> w) {
  require_valid_input(w);
  QuantizedTensor t = make_tensor(w, QuantScheme::hist256);
  t.codes.resize(w.size());
  t.norm_params.assign(256, 0.0);

  const double mn = w.minCoeff();
  const double mx = w.maxCoeff();
  const double* p = w.data();

  if (mx == mn) {
    std::fill(t.codes.begin(), t.codes.end(), std::int16_t(0));
    std::fill(t.norm_params.begin(), t.norm_params.end(), mn);
    return t;
  }

  std::array<double, 256> sum{};
  std::array<std::uint64_t, 256> count{};
  const double inv_width = 256.0 / (mx - mn);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    int b = static_cast<int>(std::floor((p[i] - mn) * inv_width));
    b = std::clamp(b, 0, 255);
    t.codes[i] = static_cast<std::int16_t>(b);
    sum[std::size_t(b)] += p[i];
    ++count[std::size_t(b)];
  }
  for (int b = 0; b < 256; ++b) {
    t.norm_params[std::size_t(b)] =
        count[std::size_t(b)] > 0
            ? sum[std::size_t(b)] / double(count[std::size_t(b)])
            : mn + (b + 0.5) * (mx - mn) / 256.0;  // empty bin: bin center
  }
  return t;
}

QuantizedTensor quantize_codebook(Eigen::Ref<const Eigen::MatrixXd> w,
                                  QuantScheme scheme) {
  require_valid_input(w);
  const std::span<const double> levels = codebook_levels(scheme);
  QuantizedTensor t = make_tensor(w, scheme);
  t.codes.resize(w.size());
  const double* p = w.data();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    // nearest level, ties to the lower index
    std::size_t best = 0;
    double best_d = std::abs(p[i] - levels[0]);
    for (std::size_t k = 1; k < levels.size(); ++k) {
      const double d = std::abs(p[i] - levels[k]);
      if (d < best_d) {
        best = k;
        best_d = d;
      }
    }
    t.codes[i] = static_cast<std::int16_t>(best);
  }
  return t;
}

QuantizedTensor quantize(Eigen::Ref<const Eigen::MatrixXd> w,
                         QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::float64: {
      require_valid_input(w);
      QuantizedTensor t = make_tensor(w, scheme);
      t.raw.assign(w.data(), w.data() + w.size());
      return t;
    }
    case QuantScheme::sym_max_int4: return quantize_sym_max(w, 4);
    case QuantScheme::sym_max_int8: return quantize_sym_max(w, 8);
    case QuantScheme::affine_minmax_int4: return quantize_affine_minmax(w, 4);
    case QuantScheme::affine_minmax_int8: return quantize_affine_minmax(w, 8);
    case QuantScheme::hist256: return quantize_hist256(w);
    case QuantScheme::codebook1_pm:
    case QuantScheme::codebook1_01:
    case QuantScheme::codebook2:
    case QuantScheme::codebook3: return quantize_codebook(w, scheme);
  }
  throw ConfigError("unknown quantization scheme tag " +
                    std::to_string(int(scheme)));
}

namespace {

void require_code_range(const QuantizedTensor& t, int lo, int hi) {
  for (const std::int16_t c : t.codes) {
    if (c < lo || c > hi)
      throw FormatError("code " + std::to_string(c) + " out of range [" +
                        std::to_string(lo) + "," + std::to_string(hi) +
                        "] for scheme " + std::string(scheme_name(t.scheme)));
  }
}

}  // namespace

Eigen::MatrixXd dequantize(const QuantizedTensor& t) {
  Eigen::MatrixXd out(t.rows, t.cols);
  switch (t.scheme) {
    case QuantScheme::float64: {
      if (t.raw.size() != t.element_count())
        throw FormatError("float64 tensor value count mismatch");
      std::copy(t.raw.begin(), t.raw.end(), out.data());
      return out;
    }
    case QuantScheme::sym_max_int4:
    case QuantScheme::sym_max_int8: {
      const int bits = sym_bits(t.scheme);
      const int q = (1 << (bits - 1)) - 1;
      require_code_range(t, -(q + 1), q);
      if (t.norm_params.size() != 1)
        throw FormatError("symmetric tensor needs one normalization value");
      const double s = t.norm_params[0];
      for (std::size_t i = 0; i < t.codes.size(); ++i)
        out.data()[i] = double(t.codes[i]) * s / double(q);
      return out;
    }
    case QuantScheme::affine_minmax_int4:
    case QuantScheme::affine_minmax_int8: {
      const int bits = t.scheme == QuantScheme::affine_minmax_int4 ? 4 : 8;
      const int qmin = -(1 << (bits - 1));
      const int qmax = (1 << (bits - 1)) - 1;
      require_code_range(t, qmin, qmax);
      if (t.norm_params.size() != 2)
        throw FormatError("affine tensor needs [vmin, vmax]");
      const double vmin = t.norm_params[0];
      const double vmax = t.norm_params[1];
      if (vmax > vmin) {
        const double step = (vmax - vmin) / double(qmax - qmin);
        for (std::size_t i = 0; i < t.codes.size(); ++i)
          out.data()[i] = vmin + double(t.codes[i] - qmin) * step;
      } else {
        out.setConstant(vmin);
      }
      return out;
    }
    case QuantScheme::hist256: {
      require_code_range(t, 0, 255);
      if (t.norm_params.size() != 256)
        throw FormatError("hist256 tensor needs a 256-entry table");
      for (std::size_t i = 0; i < t.codes.size(); ++i)
        out.data()[i] = t.norm_params[std::size_t(t.codes[i])];
      return out;
    }
    case QuantScheme::codebook1_pm:
    case QuantScheme::codebook1_01:
    case QuantScheme::codebook2:
    case QuantScheme::codebook3: {
      const std::span<const double> levels = codebook_levels(t.scheme);
      require_code_range(t, 0, int(levels.size()) - 1);
      for (std::size_t i = 0; i < t.codes.size(); ++i)
        out.data()[i] = levels[std::size_t(t.codes[i])];
      return out;
    }
  }
  throw ConfigError("unknown quantization scheme tag " +
                    std::to_string(int(t.scheme)));
}

Eigen::MatrixXd quantize_dequantize(Eigen::Ref<const Eigen::MatrixXd> w,
                                    QuantScheme scheme) {
  if (scheme == QuantScheme::float64) return w;
  return dequantize(quantize(w, scheme));
}

std::uint64_t tensor_size_bits(std::uint64_t element_count,
                               QuantScheme scheme) {
  if (element_count == 0) throw ConfigError("tensor element count must be positive");
  return element_count * std::uint64_t(bits_per_weight(scheme)) +
         std::uint64_t(norm_param_count(scheme)) * 64u;
}

SizeBreakdown model_size_bits(const std::vector<TensorDesc>& filter_parts,
                              const std::vector<TensorDesc>& classifier_parts) {
  SizeBreakdown b;
  for (const auto& [count, scheme] : filter_parts)
    b.filter_bits += tensor_size_bits(count, scheme);
  for (const auto& [count, scheme] : classifier_parts)
    b.classifier_bits += tensor_size_bits(count, scheme);
  b.total_bits = b.filter_bits + b.classifier_bits;
  return b;
}

}  // namespace erpq
