#include "erpq/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <thread>

#include "erpq/errors.hpp"
#include "erpq/rng.hpp"
#include "erpq/spatial.hpp"

namespace erpq {

namespace {

constexpr int kWilcoxonExactMax = 20;

// substream keys (see rng.hpp); fixed and distinct
constexpr std::uint64_t kFoldKey = 0x464F4C4453504C54ull;
constexpr std::uint64_t kElmKey = 0x454C4D494E495457ull;
constexpr std::uint64_t kGridKey = 0x4752494453554246ull;

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

QuantScheme scheme_for_digit(char d) { return QuantScheme(d - '0'); }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// average 1-based ranks of v, ties sharing the group mean
std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * double(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double normal_sf_two_sided(double z) {
  // 2 * (1 - Phi(z)) for z >= 0
  return std::erfc(z / std::sqrt(2.0));
}

}  // namespace

std::string_view classifier_name(ClassifierKind kind) {
  return kind == ClassifierKind::blda ? "blda" : "elm";
}

ClassifierKind parse_classifier(const std::string& name) {
  if (name == "blda") return ClassifierKind::blda;
  if (name == "elm") return ClassifierKind::elm;
  throw UsageError("unknown classifier '" + name + "' (expected blda or elm)");
}

std::vector<std::string> default_condition_labels(ClassifierKind kind) {
  if (kind == ClassifierKind::blda)
    return {"0/0", "1/0", "2/0", "3/0", "4/0",
            "0/1", "0/2", "0/3", "0/4", "1/1"};
  return {"1", "2", "3", "4", "5", "11", "12", "13", "14", "15"};
}

ConditionId parse_condition(ClassifierKind kind, const std::string& label) {
  ConditionId c;
  c.label = label;
  if (kind == ClassifierKind::blda) {
    if (label.size() == 3 && label[1] == '/' && label[0] >= '0' &&
        label[0] <= '4' && label[2] >= '0' && label[2] <= '4') {
      c.filter_scheme = scheme_for_digit(label[0]);
      c.classifier_scheme = scheme_for_digit(label[2]);
      return c;
    }
    throw UsageError(
        "unknown condition label '" + label +
        "' for blda; valid labels are f/c with digits 0-4 on each side "
        "(0 none, 1 max+int4, 2 max+int8, 3 min-max+int4, 4 min-max+int8), "
        "e.g. " + join(default_condition_labels(kind), " "));
  }
  const std::vector<std::string> valid = default_condition_labels(kind);
  if (std::find(valid.begin(), valid.end(), label) != valid.end()) {
    c.elm_init = label.back() - '0';
    c.classifier_scheme =
        label.size() == 2 ? QuantScheme::hist256 : QuantScheme::float64;
    return c;
  }
  throw UsageError("unknown condition label '" + label +
                   "' for elm; valid labels: " + join(valid, " "));
}

double compute_auc(const std::vector<double>& scores, const Labels& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("score and label counts differ");
  std::size_t n_pos = 0, n_neg = 0;
  for (const int l : labels) (l == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw EvalError("AUC needs scores from both classes");

  const std::vector<double> ranks = average_ranks(scores);
  double r_pos = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == 1) r_pos += ranks[i];
  const double u = r_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

double compute_auc(const Eigen::VectorXd& scores, const Labels& labels) {
  return compute_auc(
      std::vector<double>(scores.data(), scores.data() + scores.size()),
      labels);
}

std::vector<int> stratified_folds(const Labels& labels, int k,
                                  std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.size() < std::size_t(k) || neg.size() < std::size_t(k))
    throw EvalError("each class needs at least k members for k folds");

  Rng rng(seed);
  rng.shuffle(pos.begin(), pos.end());
  rng.shuffle(neg.begin(), neg.end());
  std::vector<int> fold(labels.size(), 0);
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = int(i % std::size_t(k));
  for (std::size_t i = 0; i < neg.size(); ++i) fold[neg[i]] = int(i % std::size_t(k));
  return fold;
}

namespace {

Eigen::VectorXd quantized_vector(const Eigen::VectorXd& v, QuantScheme scheme) {
  if (scheme == QuantScheme::float64) return v;
  const Eigen::Map<const Eigen::MatrixXd> m(v.data(), v.size(), 1);
  return quantize_dequantize(m, scheme).col(0);
}

struct FoldSplit {
  EpochSet train, test;
  Labels train_labels, test_labels;
};

FoldSplit split_fold(const EpochSet& set, const std::vector<int>& folds,
                     int fold) {
  FoldSplit s;
  s.train.subject_id = s.test.subject_id = set.subject_id;
  s.train.seed = s.test.seed = set.seed;
  for (std::size_t i = 0; i < set.epochs.size(); ++i) {
    const bool is_test = folds[i] == fold;
    (is_test ? s.test : s.train).epochs.push_back(set.epochs[i]);
    (is_test ? s.test_labels : s.train_labels)
        .push_back(set.epochs[i].label == Label::target ? 1 : -1);
  }
  return s;
}

}  // namespace

Eigen::MatrixXd evaluate_subject(const EpochSet& set, ClassifierKind kind,
                                 const std::vector<ConditionId>& conditions,
                                 int k, std::uint64_t seed) {
  if (conditions.empty()) throw ConfigError("condition list is empty");
  for (const ConditionId& c : conditions) {
    if (kind == ClassifierKind::blda && c.elm_init != 0)
      throw ConfigError("condition '" + c.label + "' is not a blda condition");
    if (kind == ClassifierKind::elm &&
        (c.elm_init < 1 || c.elm_init > 5 ||
         c.filter_scheme != QuantScheme::float64))
      throw ConfigError("condition '" + c.label + "' is not an elm condition");
  }

  const Labels labels = labels_of(set);
  const std::vector<int> folds =
      stratified_folds(labels, k, stream_seed(seed, kFoldKey));
  const std::uint64_t elm_base = stream_seed(seed, kElmKey);

  Eigen::MatrixXd auc(Eigen::Index(conditions.size()), k);

  for (int f = 0; f < k; ++f) {
    const FoldSplit fs = split_fold(set, folds, f);
    const SpatialFilterBank bank = fit_xdawn(fs.train, kXdawnFilters);

    if (kind == ClassifierKind::blda) {
      std::vector<QuantScheme> filter_schemes;
      for (const ConditionId& c : conditions)
        if (std::find(filter_schemes.begin(), filter_schemes.end(),
                      c.filter_scheme) == filter_schemes.end())
          filter_schemes.push_back(c.filter_scheme);

      for (const QuantScheme fscheme : filter_schemes) {
        SpatialFilterBank b = bank;
        if (fscheme != QuantScheme::float64)
          b.weights = quantize_dequantize(bank.weights, fscheme);
        const Eigen::MatrixXd x_train = feature_matrix(b, fs.train);
        const Eigen::MatrixXd x_test = feature_matrix(b, fs.test);
        const BldaModel model = train_blda(x_train, fs.train_labels);

        for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
          if (conditions[ci].filter_scheme != fscheme) continue;
          BldaModel m = model;
          m.weights = quantized_vector(model.weights,
                                       conditions[ci].classifier_scheme);
          auc(Eigen::Index(ci), f) =
              compute_auc(predict_linear_batch(m, x_test), fs.test_labels);
        }
      }
    } else {
      const Eigen::MatrixXd x_train = feature_matrix(bank, fs.train);
      const Eigen::MatrixXd x_test = feature_matrix(bank, fs.test);
      std::vector<int> inits;
      for (const ConditionId& c : conditions)
        if (std::find(inits.begin(), inits.end(), c.elm_init) == inits.end())
          inits.push_back(c.elm_init);

      for (const int init : inits) {
        const std::uint64_t init_seed =
            stream_seed(stream_seed(elm_base, std::uint64_t(f)),
                        std::uint64_t(init));
        auto [w, b] = init_elm_weights(init, init_seed, kElmHiddenUnits,
                                       int(x_train.rows()));
        const ElmModel model =
            train_elm(w, b, x_train, fs.train_labels, init);

        for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
          if (conditions[ci].elm_init != init) continue;
          ElmModel m = model;
          m.output_weights = quantized_vector(
              model.output_weights, conditions[ci].classifier_scheme);
          auc(Eigen::Index(ci), f) =
              compute_auc(predict_elm_batch(m, x_test), fs.test_labels);
        }
      }
    }
  }
  return auc;
}

CvResult cross_validate(const EpochSet& set, ClassifierKind kind,
                        const ConditionId& condition, int k,
                        std::uint64_t seed) {
  const Eigen::MatrixXd auc = evaluate_subject(set, kind, {condition}, k, seed);
  CvResult r;
  r.fold_aucs.assign(auc.data(), auc.data() + auc.cols());
  r.mean_auc = auc.row(0).mean();
  return r;
}

Eigen::MatrixXd evaluate_grid(int n_subjects, const SubjectLoader& load,
                              ClassifierKind kind,
                              const std::vector<ConditionId>& conditions,
                              int k, std::uint64_t seed, int jobs) {
  if (n_subjects < 1) throw ConfigError("need at least one subject");
  if (jobs < 1) throw ConfigError("jobs must be positive");

  Eigen::MatrixXd result(n_subjects, Eigen::Index(conditions.size()));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_subjects) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      try {
        const EpochSet set = load(i);
        const Eigen::MatrixXd auc = evaluate_subject(
            set, kind, conditions, k, stream_seed(seed, kGridKey, std::uint64_t(i)));
        result.row(i) = auc.rowwise().mean().transpose();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, n_subjects);
    pool.reserve(std::size_t(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return result;
}

double wilcoxon_signed_rank(const std::vector<double>& a,
                            const std::vector<double>& b) {
  if (a.size() != b.size())
    throw DimensionError("paired samples must have equal length");
  if (a.size() < 5)
    throw EvalError("signed-rank test needs at least 5 pairs");

  std::vector<double> diff, mag;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) {
      diff.push_back(d);
      mag.push_back(std::abs(d));
    }
  }
  const std::size_t n = diff.size();
  if (n == 0) return 1.0;

  const std::vector<double> ranks = average_ranks(mag);
  // doubled ranks are exact integers even with tie averaging
  std::vector<long> r2(n);
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r2[i] = std::lround(2.0 * ranks[i]);
    if (diff[i] > 0.0) w2 += r2[i];
  }

  if (n <= kWilcoxonExactMax) {
    const long total = long(n) * long(n + 1);  // doubled max sum
    std::vector<double> dp(std::size_t(total) + 1, 0.0);
    dp[0] = 1.0;
    for (const long r : r2)
      for (long s = total; s >= r; --s) dp[std::size_t(s)] += dp[std::size_t(s - r)];
    const double denom = std::pow(2.0, double(n));
    double below = 0.0, above = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s <= w2) below += dp[std::size_t(s)];
      if (s >= w2) above += dp[std::size_t(s)];
    }
    return std::min(1.0, 2.0 * std::min(below, above) / denom);
  }

  const double nn = double(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double tie_term = 0.0;
  std::size_t i = 0;
  std::vector<double> sorted_mag = mag;
  std::sort(sorted_mag.begin(), sorted_mag.end());
  while (i < n) {
    std::size_t j = i;
    while (j < n && sorted_mag[j] == sorted_mag[i]) ++j;
    const double t = double(j - i);
    tie_term += (t * t * t - t);
    i = j;
  }
  const double var =
      nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return 1.0;
  const double w_plus = 0.5 * double(w2);
  const double delta = std::abs(w_plus - mu);
  if (delta <= 0.5) return 1.0;
  const double z = (delta - 0.5) / std::sqrt(var);
  return std::min(1.0, normal_sf_two_sided(z));
}

Eigen::MatrixXi pairwise_significance(const Eigen::MatrixXd& per_subject_auc,
                                      double alpha) {
  const Eigen::Index n = per_subject_auc.cols();
  if (n < 2) throw EvalError("pairwise analysis needs at least 2 conditions");
  const double m = double(n) * double(n - 1) / 2.0;
  const double threshold = alpha / m;

  Eigen::MatrixXi sig = Eigen::MatrixXi::Constant(n, n, -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      std::vector<double> a(per_subject_auc.rows()), b(per_subject_auc.rows());
      for (Eigen::Index s = 0; s < per_subject_auc.rows(); ++s) {
        a[std::size_t(s)] = per_subject_auc(s, i);
        b[std::size_t(s)] = per_subject_auc(s, j);
      }
      const int flag = wilcoxon_signed_rank(a, b) < threshold ? 1 : 0;
      sig(i, j) = sig(j, i) = flag;
    }
  }
  return sig;
}

EvalReport build_report(ClassifierKind kind,
                        const std::vector<ConditionId>& conditions,
                        const std::vector<std::string>& subject_ids,
                        const Eigen::MatrixXd& per_subject_auc,
                        std::uint64_t filter_elements,
                        std::uint64_t classifier_elements, double alpha) {
  const Eigen::Index n_sub = per_subject_auc.rows();
  const Eigen::Index n_cond = per_subject_auc.cols();
  if (n_sub != Eigen::Index(subject_ids.size()) ||
      n_cond != Eigen::Index(conditions.size()))
    throw ReportError("result grid shape does not match subjects/conditions");
  if (n_sub == 0 || n_cond == 0) throw ReportError("empty result grid");

  std::vector<std::string> missing;
  for (Eigen::Index s = 0; s < n_sub; ++s)
    for (Eigen::Index c = 0; c < n_cond; ++c)
      if (!std::isfinite(per_subject_auc(s, c)))
        missing.push_back("subject " + subject_ids[std::size_t(s)] +
                          " condition " + conditions[std::size_t(c)].label);
  if (!missing.empty())
    throw ReportError("missing result cells: " + join(missing, ", "));

  EvalReport rep;
  rep.kind = kind;
  rep.conditions = conditions;
  rep.subject_ids = subject_ids;
  rep.per_subject_auc = per_subject_auc;
  rep.alpha = alpha;
  rep.mean = per_subject_auc.colwise().mean();
  rep.sd.resize(n_cond);
  for (Eigen::Index c = 0; c < n_cond; ++c) {
    const double m = rep.mean[c];
    rep.sd[c] = std::sqrt(
        (per_subject_auc.col(c).array() - m).square().mean());
  }

  if (kind == ClassifierKind::blda) {
    rep.sizes.reserve(std::size_t(n_cond));
    for (const ConditionId& c : conditions)
      rep.sizes.push_back(
          model_size_bits({{filter_elements, c.filter_scheme}},
                          {{classifier_elements, c.classifier_scheme}}));
  }

  if (n_cond >= 2 && n_sub >= 5)
    rep.significance = pairwise_significance(per_subject_auc, alpha);
  else
    rep.significance = Eigen::MatrixXi::Constant(n_cond, n_cond, -1);
  return rep;
}

namespace {

std::string header_row(const EvalReport& rep) {
  std::string out = "Method";
  for (const ConditionId& c : rep.conditions) out += "," + c.label;
  return out + "\n";
}

}  // namespace

std::string render_auc_csv(const EvalReport& rep) {
  std::string out = header_row(rep);
  for (Eigen::Index s = 0; s < rep.per_subject_auc.rows(); ++s) {
    out += rep.subject_ids[std::size_t(s)];
    for (Eigen::Index c = 0; c < rep.per_subject_auc.cols(); ++c)
      out += "," + fmt3(rep.per_subject_auc(s, c));
    out += "\n";
  }
  out += "Mean";
  for (Eigen::Index c = 0; c < rep.mean.size(); ++c)
    out += "," + fmt3(rep.mean[c]);
  out += "\nSD";
  for (Eigen::Index c = 0; c < rep.sd.size(); ++c) out += "," + fmt3(rep.sd[c]);
  return out + "\n";
}

std::string render_sizes_csv(const EvalReport& rep) {
  if (rep.kind != ClassifierKind::blda || rep.sizes.empty())
    throw ReportError("the elm report carries no size table");
  std::string out = header_row(rep);
  out += "Filter";
  for (const SizeBreakdown& s : rep.sizes)
    out += "," + std::to_string(s.filter_bits);
  out += "\nClassifier";
  for (const SizeBreakdown& s : rep.sizes)
    out += "," + std::to_string(s.classifier_bits);
  out += "\nTotal";
  for (const SizeBreakdown& s : rep.sizes)
    out += "," + std::to_string(s.total_bits);
  return out + "\n";
}

std::string render_significance_csv(const EvalReport& rep) {
  std::string out = header_row(rep);
  const Eigen::Index n = rep.significance.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    out += rep.conditions[std::size_t(i)].label;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j < i)
        out += ",-";
      else if (j == i)
        out += ",x";
      else
        out += rep.significance(i, j) < 0
                   ? ",-"
                   : "," + std::to_string(rep.significance(i, j));
    }
    out += "\n";
  }
  return out;
}

std::string render_markdown(const EvalReport& rep) {
  const std::string title =
      rep.kind == ClassifierKind::blda ? "xDAWN+BLDA" : "xDAWN+ELM";
  const std::size_t n_cond = rep.conditions.size();

  auto md_row = [](const std::vector<std::string>& cells) {
    std::string r = "|";
    for (const std::string& c : cells) r += " " + c + " |";
    return r + "\n";
  };

  std::vector<std::string> head = {"Method"};
  for (const ConditionId& c : rep.conditions) head.push_back(c.label);

  std::string out = "# Single-trial ERP detection (" + title + ")\n\n";
  out += "## AUC\n\n" + md_row(head);
  out += "|" + std::string([&] {
           std::string s;
           for (std::size_t i = 0; i <= n_cond; ++i) s += " --- |";
           return s;
         }()) +
         "\n";
  if (!rep.sizes.empty()) {
    std::vector<std::string> fr = {"Filter"}, cr = {"Classifier"},
                             tr = {"Total"};
    for (const SizeBreakdown& s : rep.sizes) {
      fr.push_back(std::to_string(s.filter_bits));
      cr.push_back(std::to_string(s.classifier_bits));
      tr.push_back(std::to_string(s.total_bits));
    }
    out += md_row(fr) + md_row(cr) + md_row(tr);
  }
  for (Eigen::Index s = 0; s < rep.per_subject_auc.rows(); ++s) {
    std::vector<std::string> row = {rep.subject_ids[std::size_t(s)]};
    for (Eigen::Index c = 0; c < rep.per_subject_auc.cols(); ++c)
      row.push_back(fmt3(rep.per_subject_auc(s, c)));
    out += md_row(row);
  }
  std::vector<std::string> mean_row = {"Mean"}, sd_row = {"SD"};
  for (Eigen::Index c = 0; c < rep.mean.size(); ++c) {
    mean_row.push_back(fmt3(rep.mean[c]));
    sd_row.push_back(fmt3(rep.sd[c]));
  }
  out += md_row(mean_row) + md_row(sd_row);

  out += "\n## Pairwise significance (Wilcoxon signed-rank, Bonferroni)\n\n";
  out += md_row(head);
  out += "|" + std::string([&] {
           std::string s;
           for (std::size_t i = 0; i <= n_cond; ++i) s += " --- |";
           return s;
         }()) +
         "\n";
  const Eigen::Index n = rep.significance.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::string> row = {rep.conditions[std::size_t(i)].label};
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j < i)
        row.push_back("-");
      else if (j == i)
        row.push_back("x");
      else
        row.push_back(rep.significance(i, j) < 0
                          ? "-"
                          : std::to_string(rep.significance(i, j)));
    }
    out += md_row(row);
  }
  return out;
}

}  // namespace erpq
