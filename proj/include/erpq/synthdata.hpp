#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace erpq {

enum class Label : std::uint8_t { nontarget = 0, target = 1 };

// One trial: channels x samples, plus its class.
struct Epoch {
  Eigen::MatrixXd data;
  Label label = Label::nontarget;
};

struct EpochSet {
  std::string subject_id;
  std::vector<Epoch> epochs;
  std::uint64_t seed = 0;

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (const Epoch& e : epochs)
      if (e.label == l) ++n;
    return n;
  }
};

struct Event {
  std::uint64_t sample_index = 0;
  Label label = Label::nontarget;
};

struct ContinuousRecording {
  double sample_rate_hz = 0.0;
  Eigen::MatrixXd data;  // channels x total_samples
  std::vector<Event> events;  // sample indices strictly increasing
};

// A smooth unit-norm channel weighting concentrated on a mid-array patch,
// the stand-in scalp topography of the evoked response.
Eigen::VectorXd default_spatial_profile(int channels);

struct GeneratorConfig {
  int n_subjects = 19;
  int channels = 32;
  int samples_per_epoch = 128;
  double sample_rate_hz = 128.0;
  int n_targets = 160;
  int n_nontargets = 1440;
  double erp_amplitude = 1.6;  // calibrated; see README
  double noise_std = 1.0;
  double erp_latency_s = 0.3;
  double erp_width_s = 0.1;
  Eigen::VectorXd spatial_profile = default_spatial_profile(32);
  std::uint64_t seed = 29;  // calibrated default; see README
};

// Throws ConfigError on bad dimensions, non-positive scales, or a profile
// that is the wrong length / not unit norm.
void validate(const GeneratorConfig& config);

// Deterministic in (config, subject_index). Target epochs are noise plus the
// spatially projected temporal bump; non-targets are noise only. The noise
// stream does not depend on labels or amplitude, so erp_amplitude = 0 makes
// the two classes identically distributed.
EpochSet generate_subject(const GeneratorConfig& config, int subject_index);

// Windowed-sinc (Hamming) band-pass taps at the given sample rate. The
// high-pass edge is realized by subtracting a DC-normalized low-pass, so the
// response at DC is exactly zero whenever low_hz > 0. Odd length, symmetric.
std::vector<double> design_bandpass_fir(double sample_rate_hz, double low_hz,
                                        double high_hz);

// Zero-phase FIR band-pass then integer decimation; event indices are
// divided by the decimation factor.
ContinuousRecording preprocess(const ContinuousRecording& rec, double low_hz,
                               double high_hz, double target_rate_hz);

// One epoch of window_s seconds per event, label copied from the event.
EpochSet extract_epochs(const ContinuousRecording& rec, double window_s);

// Binary epoch file (little-endian): magic "ERPQ", version u16, channels u16,
// samples u16, epoch_count u32, seed u64; per epoch a label byte then
// channels*samples float64, channel-major. A sidecar <path>.json carries the
// subject id. Returns bytes written.
std::size_t save_epochs(const EpochSet& set, const std::filesystem::path& path);
EpochSet load_epochs(const std::filesystem::path& path);

}  // namespace erpq
