#include "erpq/synthdata.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "erpq/binio.hpp"
#include "erpq/errors.hpp"
#include "erpq/rng.hpp"

namespace erpq {

namespace {

constexpr double kAr1 = 0.9;  // temporal smoothing coefficient
constexpr double kPi = 3.14159265358979323846;

// Substream keys; arbitrary fixed constants, distinct and > 2^32 so they
// cannot collide with small index keys.
constexpr std::uint64_t kMixKey = 0x4D49584D41545249ull;
constexpr std::uint64_t kSubjectKey = 0x5355424A45435453ull;
constexpr std::uint64_t kLabelKey = 0x4C4142454C4F5244ull;
constexpr std::uint64_t kEpochKey = 0x45504F43484E5345ull;

// Random orthogonal channel mixing, fixed per master seed: QR of a Gaussian
// matrix with the sign of each R diagonal folded into Q.
Eigen::MatrixXd mixing_matrix(int channels, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd g(channels, channels);
  for (int c = 0; c < channels; ++c)
    for (int r = 0; r < channels; ++r) g(r, c) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int j = 0; j < channels; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// DC-normalized Hamming-windowed sinc low-pass (sum of taps = 1).
std::vector<double> lowpass_taps(int n_taps, double cutoff_hz, double rate_hz) {
  const int mid = (n_taps - 1) / 2;
  const double fc = cutoff_hz / rate_hz;
  std::vector<double> h(static_cast<std::size_t>(n_taps));
  double sum = 0.0;
  for (int k = 0; k < n_taps; ++k) {
    const int m = k - mid;
    const double sinc =
        m == 0 ? 2.0 * fc
               : std::sin(2.0 * kPi * fc * m) / (kPi * m);
    const double win =
        0.54 - 0.46 * std::cos(2.0 * kPi * k / (n_taps - 1));
    h[std::size_t(k)] = sinc * win;
    sum += h[std::size_t(k)];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

Eigen::VectorXd default_spatial_profile(int channels) {
  if (channels <= 0) throw ConfigError("channel count must be positive");
  Eigen::VectorXd v(channels);
  const double center = 0.45 * (channels - 1);
  const double width = std::max(1.0, 0.12 * channels);
  for (int c = 0; c < channels; ++c) {
    const double z = (c - center) / width;
    v[c] = std::exp(-0.5 * z * z);
  }
  return v / v.norm();
}

void validate(const GeneratorConfig& config) {
  if (config.n_subjects <= 0)
    throw ConfigError("n_subjects must be positive");
  if (config.channels <= 0 || config.samples_per_epoch <= 0)
    throw ConfigError("epoch dimensions must be positive");
  if (config.sample_rate_hz <= 0.0)
    throw ConfigError("sample rate must be positive");
  if (config.n_targets < 1 || config.n_nontargets < 1)
    throw ConfigError("need at least one epoch of each class");
  if (config.erp_amplitude < 0.0)
    throw ConfigError("erp_amplitude must be non-negative");
  if (config.noise_std <= 0.0 || config.erp_width_s <= 0.0)
    throw ConfigError("noise_std and erp_width_s must be positive");
  if (config.erp_latency_s < 0.0)
    throw ConfigError("erp_latency_s must be non-negative");
  if (config.spatial_profile.size() != config.channels)
    throw ConfigError("spatial_profile length must equal channel count");
  if (std::abs(config.spatial_profile.norm() - 1.0) > 1e-6)
    throw ConfigError("spatial_profile must have unit norm");
}

EpochSet generate_subject(const GeneratorConfig& config, int subject_index) {
  validate(config);
  if (subject_index < 0 || subject_index >= config.n_subjects)
    throw ConfigError("subject_index out of range");

  const int ch = config.channels;
  const int ns = config.samples_per_epoch;
  const int total = config.n_targets + config.n_nontargets;
  const std::uint64_t subject_seed =
      stream_seed(config.seed, kSubjectKey, std::uint64_t(subject_index));

  const Eigen::MatrixXd mix = mixing_matrix(ch, stream_seed(config.seed, kMixKey));

  std::vector<Label> labels(std::size_t(total), Label::nontarget);
  std::fill(labels.begin(), labels.begin() + config.n_targets, Label::target);
  Rng label_rng(stream_seed(subject_seed, kLabelKey));
  label_rng.shuffle(labels.begin(), labels.end());

  // evoked template: amplitude * profile (channels) x temporal bump (samples)
  Eigen::VectorXd bump(ns);
  for (int t = 0; t < ns; ++t) {
    const double z =
        (t / config.sample_rate_hz - config.erp_latency_s) / config.erp_width_s;
    bump[t] = std::exp(-0.5 * z * z);
  }
  const Eigen::MatrixXd erp =
      config.erp_amplitude * config.spatial_profile * bump.transpose();

  const double innov = config.noise_std * std::sqrt(1.0 - kAr1 * kAr1);
  const std::uint64_t epoch_base = stream_seed(subject_seed, kEpochKey);

  EpochSet set;
  set.subject_id = "S" + std::string(subject_index + 1 < 10 ? "0" : "") +
                   std::to_string(subject_index + 1);
  set.seed = config.seed;
  set.epochs.reserve(std::size_t(total));

  Eigen::MatrixXd raw(ch, ns);
  for (int e = 0; e < total; ++e) {
    Rng rng(stream_seed(epoch_base, std::uint64_t(e)));
    // stationary AR(1) per channel, channel-major draw order
    for (int c = 0; c < ch; ++c) {
      raw(c, 0) = config.noise_std * rng.gaussian();
      for (int t = 1; t < ns; ++t)
        raw(c, t) = kAr1 * raw(c, t - 1) + innov * rng.gaussian();
    }
    Epoch ep;
    ep.label = labels[std::size_t(e)];
    ep.data = mix * raw;
    if (ep.label == Label::target) ep.data += erp;
    set.epochs.push_back(std::move(ep));
  }
  return set;
}

std::vector<double> design_bandpass_fir(double sample_rate_hz, double low_hz,
                                        double high_hz) {
  if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0))
    throw ConfigError("band edges must satisfy 0 <= low < high < rate/2");

  const double transition = std::max(1.0, 0.05 * (high_hz - low_hz));
  int n_taps = int(std::ceil(3.3 * sample_rate_hz / transition));
  if (n_taps % 2 == 0) ++n_taps;

  std::vector<double> h = lowpass_taps(n_taps, high_hz, sample_rate_hz);
  if (low_hz > 0.0) {
    // band-pass as the difference of two unit-DC low-passes, which nulls DC
    const std::vector<double> lo = lowpass_taps(n_taps, low_hz, sample_rate_hz);
    for (int k = 0; k < n_taps; ++k) h[std::size_t(k)] -= lo[std::size_t(k)];
  }
  return h;
}

ContinuousRecording preprocess(const ContinuousRecording& rec, double low_hz,
                               double high_hz, double target_rate_hz) {
  if (rec.data.rows() == 0 || rec.data.cols() == 0)
    throw ConfigError("empty recording");
  if (target_rate_hz <= 0.0) throw ConfigError("target rate must be positive");
  const double ratio = rec.sample_rate_hz / target_rate_hz;
  const int factor = int(std::lround(ratio));
  if (factor < 1 || std::abs(ratio - factor) > 1e-9)
    throw ConfigError("sample rate must be an integer multiple of the target rate");

  const std::vector<double> h =
      design_bandpass_fir(rec.sample_rate_hz, low_hz, high_hz);
  const int n_taps = int(h.size());
  const int mid = (n_taps - 1) / 2;
  const Eigen::Index n_in = rec.data.cols();
  const Eigen::Index n_out = n_in / factor;

  ContinuousRecording out;
  out.sample_rate_hz = target_rate_hz;
  out.data.resize(rec.data.rows(), n_out);
  // symmetric taps centered on each kept sample: zero-phase, zero padded
  for (Eigen::Index j = 0; j < n_out; ++j) {
    const Eigen::Index center = j * factor;
    const Eigen::Index k_lo = std::max<Eigen::Index>(0, center - mid);
    const Eigen::Index k_hi = std::min<Eigen::Index>(n_in - 1, center + mid);
    out.data.col(j).setZero();
    for (Eigen::Index k = k_lo; k <= k_hi; ++k)
      out.data.col(j) += h[std::size_t(mid + k - center)] * rec.data.col(k);
  }

  out.events.reserve(rec.events.size());
  for (const Event& ev : rec.events)
    out.events.push_back({ev.sample_index / std::uint64_t(factor), ev.label});
  return out;
}

EpochSet extract_epochs(const ContinuousRecording& rec, double window_s) {
  const double w = window_s * rec.sample_rate_hz;
  const auto window = Eigen::Index(std::lround(w));
  if (window < 1 || std::abs(w - double(window)) > 1e-9)
    throw ConfigError("window_s times sample rate must be a positive integer");

  EpochSet set;
  set.epochs.reserve(rec.events.size());
  std::uint64_t prev = 0;
  bool first = true;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const Event& ev = rec.events[i];
    if (!first && ev.sample_index <= prev)
      throw DataError("event sample indices must be strictly increasing");
    first = false;
    prev = ev.sample_index;
    if (Eigen::Index(ev.sample_index) + window > rec.data.cols())
      throw DataError("event " + std::to_string(i) + " at sample " +
                      std::to_string(ev.sample_index) +
                      " leaves no room for the epoch window");
    Epoch ep;
    ep.label = ev.label;
    ep.data = rec.data.middleCols(Eigen::Index(ev.sample_index), window);
    set.epochs.push_back(std::move(ep));
  }
  return set;
}

std::size_t save_epochs(const EpochSet& set, const std::filesystem::path& path) {
  Eigen::Index ch = 0, ns = 0;
  if (!set.epochs.empty()) {
    ch = set.epochs.front().data.rows();
    ns = set.epochs.front().data.cols();
  }
  if (ch > 0xFFFF || ns > 0xFFFF)
    throw ConfigError("epoch dimensions exceed the file format's u16 range");

  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + set.epochs.size() * (1 + std::size_t(ch * ns) * 8));
  bytes.insert(bytes.end(), {'E', 'R', 'P', 'Q'});
  detail::put_u16(bytes, 1);
  detail::put_u16(bytes, std::uint16_t(ch));
  detail::put_u16(bytes, std::uint16_t(ns));
  detail::put_u32(bytes, std::uint32_t(set.epochs.size()));
  detail::put_u64(bytes, set.seed);

  for (const Epoch& ep : set.epochs) {
    if (ep.data.rows() != ch || ep.data.cols() != ns)
      throw ConfigError("all epochs in a file must share one shape");
    detail::put_u8(bytes, ep.label == Label::target ? 1 : 0);
    for (Eigen::Index c = 0; c < ch; ++c)
      for (Eigen::Index t = 0; t < ns; ++t) detail::put_f64(bytes, ep.data(c, t));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());

  nlohmann::json side;
  side["subject_id"] = set.subject_id;
  side["seed"] = set.seed;
  side["epochs"] = set.epochs.size();
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  if (js) js << side.dump(2) << "\n";

  return bytes.size();
}

EpochSet load_epochs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw IoError("read failed for " + path.string());

  detail::ByteReader r(bytes.data(), bytes.size());
  const std::uint8_t* magic = r.bytes(4, "magic");
  if (std::memcmp(magic, "ERPQ", 4) != 0)
    throw FormatError("bad magic at byte 0: not an epoch file");
  const std::uint16_t version = r.u16("version");
  if (version != 1)
    throw FormatError("unsupported epoch file version " +
                      std::to_string(version) + " at byte 4");
  const std::uint16_t ch = r.u16("channel count");
  const std::uint16_t ns = r.u16("sample count");
  const std::uint32_t count = r.u32("epoch count");
  const std::uint64_t seed = r.u64("seed");
  if (count > 0 && (ch == 0 || ns == 0))
    throw FormatError("epoch file declares epochs with zero dimensions");

  EpochSet set;
  set.seed = seed;
  set.epochs.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string what = "epoch " + std::to_string(e);
    const std::uint8_t label = r.u8("label");
    if (label > 1)
      throw FormatError("bad label byte " + std::to_string(label) + " in " +
                        what + " at byte " + std::to_string(r.offset() - 1));
    Epoch ep;
    ep.label = label == 1 ? Label::target : Label::nontarget;
    ep.data.resize(ch, ns);
    const std::uint8_t* p =
        r.bytes(std::size_t(ch) * ns * 8, (what + " samples").c_str());
    for (Eigen::Index c = 0; c < ch; ++c)
      for (Eigen::Index t = 0; t < ns; ++t) {
        const std::uint8_t* q = p + (std::size_t(c) * ns + std::size_t(t)) * 8;
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(q[b]) << (8 * b);
        double v;
        std::memcpy(&v, &bits, 8);
        ep.data(c, t) = v;
      }
    set.epochs.push_back(std::move(ep));
  }
  if (r.remaining() != 0)
    throw FormatError("trailing bytes after last epoch at byte " +
                      std::to_string(r.offset()));

  std::ifstream js(path.string() + ".json");
  if (js) {
    try {
      nlohmann::json side = nlohmann::json::parse(js);
      if (side.contains("subject_id"))
        set.subject_id = side["subject_id"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // sidecar is advisory; ignore a malformed one
    }
  }
  return set;
}

}  // namespace erpq
