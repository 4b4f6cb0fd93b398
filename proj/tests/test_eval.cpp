#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "erpq/errors.hpp"
#include "erpq/eval.hpp"
#include "erpq/rng.hpp"

using namespace erpq;

namespace {

// O(n^2) pairwise AUC: concordant pairs count 1, ties count one half.
double auc_brute(const std::vector<double>& s, const Labels& y) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != -1) continue;
      pairs += 1.0;
      if (s[i] > s[j])
        num += 1.0;
      else if (s[i] == s[j])
        num += 0.5;
    }
  }
  return num / pairs;
}

// Exact two-sided signed-rank p by enumerating all sign assignments.
double wilcoxon_enum(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> mag;
  std::vector<int> sign;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) {
      mag.push_back(std::abs(d));
      sign.push_back(d > 0.0 ? 1 : -1);
    }
  }
  const std::size_t n = mag.size();
  if (n == 0) return 1.0;

  // doubled average ranks are integers
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return mag[i] < mag[j]; });
  std::vector<long> r2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && mag[order[j]] == mag[order[i]]) ++j;
    const long sum2 = long(i + 1 + j) * long(j - i);  // 2 * sum of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      r2[order[k]] = sum2 / long(j - i);
    i = j;
  }

  long w_obs = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (sign[i] > 0) w_obs += r2[i];

  long le = 0, ge = 0;
  const std::uint64_t total = std::uint64_t(1) << n;
  for (std::uint64_t m = 0; m < total; ++m) {
    long w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (m & (std::uint64_t(1) << i)) w += r2[i];
    if (w <= w_obs) ++le;
    if (w >= w_obs) ++ge;
  }
  const double p =
      2.0 * double(std::min(le, ge)) / double(total);
  return std::min(1.0, p);
}

// Small but learnable: bump on one channel for targets. Deterministic.
EpochSet eval_toy_set(std::uint64_t seed, int channels, int samples,
                      int n_targets, int n_nontargets) {
  Rng rng(seed);
  EpochSet set;
  set.subject_id = "T" + std::to_string(seed);
  set.seed = seed;
  for (int e = 0; e < n_targets + n_nontargets; ++e) {
    Epoch ep;
    ep.label = e < n_targets ? Label::target : Label::nontarget;
    ep.data.resize(channels, samples);
    for (Eigen::Index i = 0; i < ep.data.size(); ++i)
      ep.data.data()[i] = rng.gaussian();
    if (ep.label == Label::target)
      for (Eigen::Index t = 0; t < samples; ++t) {
        const double x = (double(t) - samples / 2.0) / (samples / 6.0);
        ep.data(2, t) += 1.5 * std::exp(-0.5 * x * x);
      }
    set.epochs.push_back(std::move(ep));
  }
  return set;
}

std::vector<ConditionId> parse_all(ClassifierKind kind,
                                   const std::vector<std::string>& labels) {
  std::vector<ConditionId> out;
  for (const std::string& l : labels) out.push_back(parse_condition(kind, l));
  return out;
}

}  // namespace

TEST_CASE("classifier names parse both ways") {
  CHECK(parse_classifier("blda") == ClassifierKind::blda);
  CHECK(parse_classifier("elm") == ClassifierKind::elm);
  CHECK(classifier_name(ClassifierKind::blda) == "blda");
  CHECK(classifier_name(ClassifierKind::elm) == "elm");
  CHECK_THROWS_AS(parse_classifier("svm"), UsageError);
}

TEST_CASE("condition labels") {
  SUBCASE("all 25 blda pairs map digit-for-digit onto schemes") {
    for (int f = 0; f <= 4; ++f)
      for (int c = 0; c <= 4; ++c) {
        const std::string label =
            std::to_string(f) + "/" + std::to_string(c);
        const ConditionId id = parse_condition(ClassifierKind::blda, label);
        CHECK(id.label == label);
        CHECK(id.filter_scheme == QuantScheme(f));
        CHECK(id.classifier_scheme == QuantScheme(c));
        CHECK(id.elm_init == 0);
      }
  }
  SUBCASE("elm labels carry the init and the optional output quantization") {
    for (int i = 1; i <= 5; ++i) {
      const ConditionId plain =
          parse_condition(ClassifierKind::elm, std::to_string(i));
      CHECK(plain.elm_init == i);
      CHECK(plain.classifier_scheme == QuantScheme::float64);
      CHECK(plain.filter_scheme == QuantScheme::float64);
      const ConditionId hist =
          parse_condition(ClassifierKind::elm, "1" + std::to_string(i));
      CHECK(hist.elm_init == i);
      CHECK(hist.classifier_scheme == QuantScheme::hist256);
    }
  }
  SUBCASE("default grids") {
    const std::vector<std::string> blda = {"0/0", "1/0", "2/0", "3/0", "4/0",
                                           "0/1", "0/2", "0/3", "0/4", "1/1"};
    CHECK(default_condition_labels(ClassifierKind::blda) == blda);
    const std::vector<std::string> elm = {"1",  "2",  "3",  "4",  "5",
                                          "11", "12", "13", "14", "15"};
    CHECK(default_condition_labels(ClassifierKind::elm) == elm);
  }
  SUBCASE("bad labels list the valid ones") {
    CHECK_THROWS_WITH_AS(parse_condition(ClassifierKind::blda, "5/0"),
                         doctest::Contains("0/0"), UsageError);
    CHECK_THROWS_WITH_AS(parse_condition(ClassifierKind::elm, "6"),
                         doctest::Contains("15"), UsageError);
    CHECK_THROWS_AS(parse_condition(ClassifierKind::blda, "00"), UsageError);
    CHECK_THROWS_AS(parse_condition(ClassifierKind::elm, "0"), UsageError);
    CHECK_THROWS_AS(parse_condition(ClassifierKind::elm, "16"), UsageError);
  }
}

TEST_CASE("AUC on worked examples") {
  CHECK(compute_auc(std::vector<double>{0.9, 0.4, 0.6}, {1, -1, 1}) == 1.0);
  CHECK(compute_auc(std::vector<double>{0.3, 0.4, 0.6}, {1, -1, 1}) == 0.5);
  CHECK(compute_auc(std::vector<double>{0.1, 0.4, 0.6}, {1, -1, 1}) == 0.5);
  CHECK(compute_auc(std::vector<double>{0.9, 0.4, 0.2}, {-1, 1, -1}) == 0.5);
  CHECK(compute_auc(std::vector<double>{1.0, 1.0, 1.0, 1.0}, {1, -1, 1, -1}) == 0.5);
  CHECK(compute_auc(std::vector<double>{5.0, 4.0, 3.0, 2.0}, {1, 1, -1, -1}) == 1.0);
  CHECK(compute_auc(std::vector<double>{2.0, 4.0, 3.0, 5.0}, {1, 1, -1, -1}) == 0.25);
  CHECK_THROWS_AS(compute_auc(std::vector<double>{1.0, 2.0}, {1, 1}), EvalError);
  CHECK_THROWS_AS(compute_auc(std::vector<double>{1.0, 2.0}, {1, -1, 1}), DimensionError);

  Eigen::VectorXd v(3);
  v << 0.9, 0.4, 0.6;
  CHECK(compute_auc(v, {1, -1, 1}) == 1.0);
}

TEST_CASE("AUC equals the pairwise count and respects rank symmetries") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.uniform_index(60);
    std::vector<double> s(n);
    Labels y(n);
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid scores force plenty of exact ties
      s[i] = double(int(rng.uniform_index(7))) - 3.0;
      y[i] = rng.uniform() < 0.5 ? 1 : -1;
      if (y[i] == 1) ++n_pos;
    }
    if (n_pos == 0) y[0] = 1;
    if (n_pos == n) y[0] = -1;

    const double auc = compute_auc(s, y);
    CHECK(auc == auc_brute(s, y));

    // flipping the labels mirrors the value around one half (to rounding:
    // 1 - U/d and (d - U)/d differ in the last ulp)
    Labels flipped = y;
    for (int& l : flipped) l = -l;
    CHECK(std::abs(compute_auc(s, flipped) - (1.0 - auc)) < 1e-12);

    // strictly increasing transforms keep the ranks
    std::vector<double> affine(n), cubed(n);
    for (std::size_t i = 0; i < n; ++i) {
      affine[i] = 2.0 * s[i] + 3.0;
      cubed[i] = s[i] * s[i] * s[i];
    }
    CHECK(compute_auc(affine, y) == auc);
    CHECK(compute_auc(cubed, y) == auc);

    // negating scores is the same as flipping labels
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) neg[i] = -s[i];
    CHECK(std::abs(compute_auc(neg, y) - (1.0 - auc)) < 1e-12);
  }
}

TEST_CASE("stratified folds") {
  SUBCASE("study-sized split is exactly proportional") {
    Labels y(1600);
    for (std::size_t i = 0; i < 1600; ++i) y[i] = i % 10 == 0 ? 1 : -1;
    const std::vector<int> fold = stratified_folds(y, 5, 77);
    REQUIRE(fold.size() == 1600);
    int t_count[5] = {0, 0, 0, 0, 0}, n_count[5] = {0, 0, 0, 0, 0};
    for (std::size_t i = 0; i < 1600; ++i) {
      REQUIRE(fold[i] >= 0);
      REQUIRE(fold[i] < 5);
      (y[i] == 1 ? t_count : n_count)[fold[i]] += 1;
    }
    for (int f = 0; f < 5; ++f) {
      CHECK(t_count[f] == 32);
      CHECK(n_count[f] == 288);
    }
  }
  SUBCASE("odd counts differ by at most one per class") {
    Labels y;
    for (int i = 0; i < 7; ++i) y.push_back(1);
    for (int i = 0; i < 11; ++i) y.push_back(-1);
    const std::vector<int> fold = stratified_folds(y, 3, 5);
    int t_count[3] = {0, 0, 0}, n_count[3] = {0, 0, 0};
    for (std::size_t i = 0; i < y.size(); ++i)
      (y[i] == 1 ? t_count : n_count)[fold[i]] += 1;
    for (int f = 0; f < 3; ++f) {
      CHECK(t_count[f] >= 2);
      CHECK(t_count[f] <= 3);
      CHECK(n_count[f] >= 3);
      CHECK(n_count[f] <= 4);
    }
  }
  SUBCASE("deterministic in the seed") {
    Labels y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = i < 10 ? 1 : -1;
    CHECK(stratified_folds(y, 4, 9) == stratified_folds(y, 4, 9));
    CHECK(stratified_folds(y, 4, 9) != stratified_folds(y, 4, 10));
  }
  SUBCASE("bad arguments") {
    Labels y = {1, 1, -1, -1, -1};
    CHECK_THROWS_AS(stratified_folds(y, 1, 0), ConfigError);
    CHECK_THROWS_AS(stratified_folds(y, 3, 0), EvalError);
  }
}

TEST_CASE("signed-rank test") {
  SUBCASE("identical samples give p = 1") {
    const std::vector<double> a = {0.7, 0.8, 0.9, 0.6, 0.5, 0.4};
    CHECK(wilcoxon_signed_rank(a, a) == 1.0);
  }
  SUBCASE("19 one-sided pairs hit the exact extreme tail") {
    std::vector<double> a(19), b(19);
    for (int i = 0; i < 19; ++i) {
      a[std::size_t(i)] = 0.7 + 0.01 * i;
      b[std::size_t(i)] = a[std::size_t(i)] - 0.05;
    }
    CHECK(wilcoxon_signed_rank(a, b) == 2.0 / 524288.0);
    CHECK(wilcoxon_signed_rank(b, a) == 2.0 / 524288.0);
  }
  SUBCASE("six mixed pairs match full enumeration") {
    const std::vector<double> a = {1.0, 0.0, 3.0, 0.0, 5.0, 6.0};
    const std::vector<double> b = {0.0, 2.0, 0.0, 4.0, 0.0, 0.0};
    CHECK(wilcoxon_signed_rank(a, b) == wilcoxon_enum(a, b));
  }
  SUBCASE("random tied instances match full enumeration exactly") {
    Rng rng(2718);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 5 + rng.uniform_index(8);
      std::vector<double> a(n), b(n, 0.0);
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = double(int(rng.uniform_index(5))) - 2.0;  // {-2..2}: zeros, ties
        if (a[i] != 0.0) any = true;
      }
      if (!any) a[0] = 1.0;
      CHECK(wilcoxon_signed_rank(a, b) == wilcoxon_enum(a, b));
    }
  }
  SUBCASE("the large-sample branch behaves sanely") {
    std::vector<double> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[std::size_t(i)] = double(i);
      b[std::size_t(i)] = double(i) - 1.0;  // all positive, fully tied
    }
    const double p_shift = wilcoxon_signed_rank(a, b);
    CHECK(p_shift > 0.0);
    CHECK(p_shift < 1e-4);

    for (int i = 0; i < 30; ++i)
      b[std::size_t(i)] = a[std::size_t(i)] + (i % 2 == 0 ? 1.0 : -1.0);
    const double p_null = wilcoxon_signed_rank(a, b);
    CHECK(p_null > 0.2);
    CHECK(p_null <= 1.0);
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {1, 2}), DimensionError);
    CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3, 4}, {0, 0, 0, 0}),
                    EvalError);
  }
}

TEST_CASE("pairwise significance") {
  SUBCASE("three conditions, nineteen subjects") {
    Eigen::MatrixXd auc(19, 3);
    Rng rng(1618);
    for (int s = 0; s < 19; ++s) {
      auc(s, 0) = 0.8 + 0.02 * rng.uniform();
      auc(s, 1) = auc(s, 0) - 0.05;
      auc(s, 2) = auc(s, 0);
    }
    const Eigen::MatrixXi sig = pairwise_significance(auc, 0.05);
    CHECK(sig(0, 0) == -1);
    CHECK(sig(1, 1) == -1);
    CHECK(sig(2, 2) == -1);
    CHECK(sig(0, 1) == 1);
    CHECK(sig(1, 0) == 1);
    CHECK(sig(1, 2) == 1);
    CHECK(sig(0, 2) == 0);  // identical columns: p = 1
    const Eigen::MatrixXi sig_t = sig.transpose();
    CHECK((sig - sig_t).cwiseAbs().maxCoeff() == 0);
  }
  SUBCASE("the Bonferroni divisor is the number of pairs") {
    // 8 subjects all shifted the same way: exact p = 2/2^8 = 0.0078125.
    // With 10 conditions there are 45 pairs, so alpha = 0.36 puts the
    // threshold at 0.008 (significant) and alpha = 0.35 at 0.00778 (not).
    Eigen::MatrixXd auc(8, 10);
    Rng rng(4242);
    for (int s = 0; s < 8; ++s) {
      auc(s, 0) = 0.60 + 0.01 * s;
      for (int j = 1; j < 10; ++j)
        auc(s, j) = auc(s, 0) + 0.05 + 0.001 * rng.uniform(-1.0, 1.0);
    }
    const Eigen::MatrixXi wide = pairwise_significance(auc, 0.36);
    const Eigen::MatrixXi narrow = pairwise_significance(auc, 0.35);
    for (int j = 1; j < 10; ++j) {
      CHECK(wide(0, j) == 1);
      CHECK(narrow(0, j) == 0);
    }
  }
  SUBCASE("needs two conditions") {
    CHECK_THROWS_AS(pairwise_significance(Eigen::MatrixXd::Zero(10, 1), 0.05),
                    EvalError);
  }
}

TEST_CASE("report assembly") {
  const std::vector<std::string> labels =
      default_condition_labels(ClassifierKind::blda);
  const std::vector<ConditionId> conds = parse_all(ClassifierKind::blda, labels);
  std::vector<std::string> subjects;
  for (int s = 0; s < 6; ++s)
    subjects.push_back("S0" + std::to_string(s + 1));

  Eigen::MatrixXd auc(6, 10);
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < 10; ++c)
      auc(s, c) = 0.70 + 0.015 * s - 0.004 * c + 0.001 * ((s * 7 + c * 3) % 5);

  const EvalReport rep = build_report(ClassifierKind::blda, conds, subjects, auc);

  SUBCASE("means and population SDs") {
    for (int c = 0; c < 10; ++c) {
      const double mean = auc.col(c).mean();
      double ss = 0.0;
      for (int s = 0; s < 6; ++s) ss += std::pow(auc(s, c) - mean, 2);
      CHECK(rep.mean[c] == doctest::Approx(mean).epsilon(1e-12));
      CHECK(rep.sd[c] == doctest::Approx(std::sqrt(ss / 6.0)).epsilon(1e-12));
    }
  }
  SUBCASE("sizes follow the per-digit storage arithmetic") {
    REQUIRE(rep.sizes.size() == 10);
    const int bits[5] = {64, 4, 8, 4, 8};
    const int params[5] = {0, 1, 1, 2, 2};
    for (int c = 0; c < 10; ++c) {
      const int f = labels[std::size_t(c)][0] - '0';
      const int w = labels[std::size_t(c)][2] - '0';
      const std::uint64_t fbits = 256u * bits[f] + 64u * params[f];
      const std::uint64_t cbits = 1025u * bits[w] + 64u * params[w];
      CHECK(rep.sizes[std::size_t(c)].filter_bits == fbits);
      CHECK(rep.sizes[std::size_t(c)].classifier_bits == cbits);
      CHECK(rep.sizes[std::size_t(c)].total_bits == fbits + cbits);
    }
    CHECK(rep.sizes[0].total_bits == 81984);
    CHECK(rep.sizes[9].total_bits == 5252);
  }
  SUBCASE("significance is present for six subjects") {
    CHECK(rep.significance.rows() == 10);
    CHECK(rep.significance(0, 0) == -1);
    CHECK(rep.significance(0, 1) >= 0);
  }
  SUBCASE("four subjects disable the significance table") {
    const EvalReport small = build_report(
        ClassifierKind::blda, conds,
        {subjects.begin(), subjects.begin() + 4}, auc.topRows(4));
    CHECK((small.significance.array() == -1).all());
  }
  SUBCASE("elm reports carry no sizes") {
    const std::vector<ConditionId> econds =
        parse_all(ClassifierKind::elm, {"1", "3"});
    Eigen::MatrixXd ea(6, 2);
    ea.setConstant(0.7);
    ea.col(1).array() -= 0.1;
    const EvalReport er =
        build_report(ClassifierKind::elm, econds, subjects, ea);
    CHECK(er.sizes.empty());
    CHECK_THROWS_AS(render_sizes_csv(er), ReportError);
  }
  SUBCASE("a NaN cell is reported by name") {
    Eigen::MatrixXd holey = auc;
    holey(2, 4) = std::nan("");
    CHECK_THROWS_WITH_AS(
        build_report(ClassifierKind::blda, conds, subjects, holey),
        doctest::Contains("subject S03 condition 4/0"), ReportError);
  }
  SUBCASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(build_report(ClassifierKind::blda, conds, subjects,
                                 auc.leftCols(9)),
                    ReportError);
    CHECK_THROWS_AS(
        build_report(ClassifierKind::blda, conds,
                     {subjects.begin(), subjects.begin() + 5}, auc),
        ReportError);
  }
}

TEST_CASE("rendered tables") {
  const std::vector<ConditionId> conds =
      parse_all(ClassifierKind::blda, {"0/0", "1/1"});
  Eigen::MatrixXd auc(5, 2);
  auc << 0.875, 0.8128, 0.875, 0.8128, 0.875, 0.8128, 0.875, 0.8128, 1.0, 0.5;
  const EvalReport rep = build_report(
      ClassifierKind::blda, conds, {"S01", "S02", "S03", "S04", "S05"}, auc);

  SUBCASE("auc csv") {
    const std::string expect =
        "Method,0/0,1/1\n"
        "S01,0.875,0.813\n"
        "S02,0.875,0.813\n"
        "S03,0.875,0.813\n"
        "S04,0.875,0.813\n"
        "S05,1.000,0.500\n"
        "Mean,0.900,0.750\n"
        "SD,0.050,0.125\n";
    CHECK(render_auc_csv(rep) == expect);
  }
  SUBCASE("sizes csv") {
    const std::string expect =
        "Method,0/0,1/1\n"
        "Filter,16384,1088\n"
        "Classifier,65600,4164\n"
        "Total,81984,5252\n";
    CHECK(render_sizes_csv(rep) == expect);
  }
  SUBCASE("significance csv shows the lower triangle as dashes") {
    const std::string csv = render_significance_csv(rep);
    const std::string head = "Method,0/0,1/1\n";
    REQUIRE(csv.substr(0, head.size()) == head);
    const std::string rest = csv.substr(head.size());
    const bool sig = rep.significance(0, 1) == 1;
    const std::string expect = std::string("0/0,x,") + (sig ? "1" : "0") +
                               "\n1/1,-,x\n";
    CHECK(rest == expect);
  }
  SUBCASE("markdown carries the title, sizes, and all rows") {
    const std::string md = render_markdown(rep);
    CHECK(md.find("# Single-trial ERP detection (xDAWN+BLDA)") == 0);
    CHECK(md.find("| Method | 0/0 | 1/1 |") != std::string::npos);
    CHECK(md.find("| Total | 81984 | 5252 |") != std::string::npos);
    CHECK(md.find("| S05 | 1.000 | 0.500 |") != std::string::npos);
    CHECK(md.find("| Mean | 0.900 | 0.750 |") != std::string::npos);

    const std::vector<ConditionId> econds =
        parse_all(ClassifierKind::elm, {"1", "3"});
    Eigen::MatrixXd ea(5, 2);
    ea.setConstant(0.7);
    ea.col(1).array() -= 0.2;
    const EvalReport er = build_report(ClassifierKind::elm, econds,
                                       {"S01", "S02", "S03", "S04", "S05"}, ea);
    const std::string emd = render_markdown(er);
    CHECK(emd.find("xDAWN+ELM") != std::string::npos);
    CHECK(emd.find("| Filter |") == std::string::npos);
  }
}

TEST_CASE("cross-validation equals the matching grid row") {
  const EpochSet set = eval_toy_set(91, 8, 16, 30, 90);

  SUBCASE("blda") {
    const std::vector<ConditionId> conds =
        parse_all(ClassifierKind::blda, {"0/0", "1/1", "3/2"});
    const Eigen::MatrixXd grid =
        evaluate_subject(set, ClassifierKind::blda, conds, 4, 99);
    REQUIRE(grid.rows() == 3);
    REQUIRE(grid.cols() == 4);
    CHECK(grid.minCoeff() >= 0.0);
    CHECK(grid.maxCoeff() <= 1.0);
    // the easy problem should be solidly learnable without quantization
    CHECK(grid.row(0).mean() > 0.8);

    for (int c = 0; c < 3; ++c) {
      const CvResult cv =
          cross_validate(set, ClassifierKind::blda, conds[std::size_t(c)], 4, 99);
      REQUIRE(cv.fold_aucs.size() == 4);
      for (int f = 0; f < 4; ++f) CHECK(cv.fold_aucs[std::size_t(f)] == grid(c, f));
      CHECK(cv.mean_auc == doctest::Approx(grid.row(c).mean()).epsilon(1e-15));
    }
  }
  SUBCASE("elm, including the shared-model hist256 variant") {
    const std::vector<ConditionId> conds =
        parse_all(ClassifierKind::elm, {"1", "3", "11"});
    const Eigen::MatrixXd grid =
        evaluate_subject(set, ClassifierKind::elm, conds, 4, 99);
    REQUIRE(grid.rows() == 3);
    for (int c = 0; c < 3; ++c) {
      const CvResult cv =
          cross_validate(set, ClassifierKind::elm, conds[std::size_t(c)], 4, 99);
      for (int f = 0; f < 4; ++f) CHECK(cv.fold_aucs[std::size_t(f)] == grid(c, f));
    }
  }
  SUBCASE("conditions must match the classifier kind") {
    const std::vector<ConditionId> econds = parse_all(ClassifierKind::elm, {"1"});
    CHECK_THROWS_AS(
        evaluate_subject(set, ClassifierKind::blda, econds, 4, 99), ConfigError);
    const std::vector<ConditionId> bconds =
        parse_all(ClassifierKind::blda, {"0/0"});
    CHECK_THROWS_AS(evaluate_subject(set, ClassifierKind::elm, bconds, 4, 99),
                    ConfigError);
    CHECK_THROWS_AS(
        evaluate_subject(set, ClassifierKind::blda, {}, 4, 99), ConfigError);
  }
}

TEST_CASE("grid evaluation") {
  const std::vector<ConditionId> conds =
      parse_all(ClassifierKind::elm, {"1", "2"});
  std::atomic<int> calls{0};
  const SubjectLoader loader = [&calls](int i) {
    calls.fetch_add(1);
    return eval_toy_set(200 + std::uint64_t(i), 8, 16, 24, 72);
  };

  const Eigen::MatrixXd serial =
      evaluate_grid(3, loader, ClassifierKind::elm, conds, 3, 5, 1);
  REQUIRE(serial.rows() == 3);
  REQUIRE(serial.cols() == 2);
  CHECK(calls == 3);

  SUBCASE("thread count does not change the numbers") {
    const Eigen::MatrixXd parallel =
        evaluate_grid(3, loader, ClassifierKind::elm, conds, 3, 5, 3);
    CHECK((serial - parallel).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("rows are per-subject fold means") {
    // subject 0 of the grid and a direct evaluation must agree through the
    // shared seed chain
    const Eigen::MatrixXd again =
        evaluate_grid(1, loader, ClassifierKind::elm, conds, 3, 5, 1);
    CHECK((again.row(0) - serial.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("loader failures surface") {
    const SubjectLoader bad = [](int i) -> EpochSet {
      if (i == 1) throw DataError("subject 1 went missing");
      return eval_toy_set(7, 8, 16, 24, 72);
    };
    CHECK_THROWS_WITH_AS(
        evaluate_grid(2, bad, ClassifierKind::elm, conds, 3, 5, 2),
        doctest::Contains("went missing"), DataError);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(
        evaluate_grid(0, loader, ClassifierKind::elm, conds, 3, 5, 1),
        ConfigError);
  }
}

TEST_CASE("a flat generator yields chance-level AUC") {
  GeneratorConfig config;
  config.channels = 8;
  config.spatial_profile = default_spatial_profile(8);
  config.samples_per_epoch = 64;
  config.n_targets = 40;
  config.n_nontargets = 160;
  config.erp_amplitude = 0.0;
  config.n_subjects = 10;

  const std::vector<ConditionId> conds = parse_all(ClassifierKind::elm, {"1"});
  const SubjectLoader loader = [&config](int i) {
    return generate_subject(config, i);
  };
  const Eigen::MatrixXd auc =
      evaluate_grid(10, loader, ClassifierKind::elm, conds, 5, 42, 1);
  const double grand = auc.col(0).mean();
  CHECK(grand > 0.42);
  CHECK(grand < 0.58);
}
