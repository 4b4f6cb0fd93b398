#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "erpq/classify.hpp"
#include "erpq/quant.hpp"
#include "erpq/synthdata.hpp"

namespace erpq {

enum class ClassifierKind { blda, elm };

// Pipeline-wide constants: spatial filters kept per fit, hidden units per
// random layer. Feature dimension is kXdawnFilters * samples_per_epoch.
inline constexpr int kXdawnFilters = 8;
inline constexpr int kElmHiddenUnits = 200;

std::string_view classifier_name(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string& name);

// One evaluated cell of the study grid. BLDA labels are "f/c" with digits
// 0..4 on each side (0 = none, 1 = max+int4, 2 = max+int8, 3 = min-max+int4,
// 4 = min-max+int8). ELM labels are "1".."5" (init condition, no weight
// quantization) and "11".."15" (same, plus hist256 on the output weights).
struct ConditionId {
  std::string label;
  QuantScheme filter_scheme = QuantScheme::float64;
  QuantScheme classifier_scheme = QuantScheme::float64;
  int elm_init = 0;  // 0 for BLDA
};

ConditionId parse_condition(ClassifierKind kind, const std::string& label);
std::vector<std::string> default_condition_labels(ClassifierKind kind);

// AUC by rank statistics with average ranks; equals the pairwise
// count-concordant formula exactly, ties scored one half.
double compute_auc(const std::vector<double>& scores, const Labels& labels);
double compute_auc(const Eigen::VectorXd& scores, const Labels& labels);

// Fold id (0..k-1) per sample; each class dealt round-robin after a
// seed-determined shuffle, so per-fold class counts differ by at most one.
std::vector<int> stratified_folds(const Labels& labels, int k,
                                  std::uint64_t seed);

// Per-fold AUC for every requested condition; rows follow `conditions`,
// columns are folds. Work is shared within a fold: one xDAWN fit per filter
// scheme, one classifier fit per (filter scheme | init condition); the seeds
// of folds and hidden layers do not depend on the condition list, so a
// single-condition call reproduces the matching row of a grid call.
Eigen::MatrixXd evaluate_subject(const EpochSet& set, ClassifierKind kind,
                                 const std::vector<ConditionId>& conditions,
                                 int k, std::uint64_t seed);

struct CvResult {
  std::vector<double> fold_aucs;
  double mean_auc = 0.0;
};

CvResult cross_validate(const EpochSet& set, ClassifierKind kind,
                        const ConditionId& condition, int k,
                        std::uint64_t seed);

// Evaluates n_subjects x conditions, loading each subject through the
// callback (invoked at most once per subject, possibly from worker
// threads). Returns per-subject mean AUC over folds, subjects x conditions.
using SubjectLoader = std::function<EpochSet(int)>;
Eigen::MatrixXd evaluate_grid(int n_subjects, const SubjectLoader& load,
                              ClassifierKind kind,
                              const std::vector<ConditionId>& conditions,
                              int k, std::uint64_t seed, int jobs = 1);

// Two-sided signed-rank test on paired samples. Zero differences are
// dropped; tied magnitudes share average ranks. Exact null enumeration for
// up to 20 effective pairs, otherwise the normal approximation with tie and
// continuity corrections.
double wilcoxon_signed_rank(const std::vector<double>& a,
                            const std::vector<double>& b);

// Symmetric 0/1 matrix at Bonferroni-corrected alpha (alpha / C(n,2));
// diagonal entries are -1 (not applicable).
Eigen::MatrixXi pairwise_significance(const Eigen::MatrixXd& per_subject_auc,
                                      double alpha = 0.05);

struct EvalReport {
  ClassifierKind kind = ClassifierKind::blda;
  std::vector<ConditionId> conditions;
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd per_subject_auc;    // subjects x conditions
  Eigen::VectorXd mean;               // per condition
  Eigen::VectorXd sd;                 // population SD per condition
  std::vector<SizeBreakdown> sizes;   // per condition; empty for ELM
  Eigen::MatrixXi significance;       // -1 diagonal / all -1 when < 5 subjects
  double alpha = 0.05;
};

// Assembles means, SDs, sizes (BLDA only), and the significance matrix.
// Missing (non-finite) cells raise ReportError naming them. Element counts
// size the BLDA tensors: filters then classifier weights including bias.
EvalReport build_report(ClassifierKind kind,
                        const std::vector<ConditionId>& conditions,
                        const std::vector<std::string>& subject_ids,
                        const Eigen::MatrixXd& per_subject_auc,
                        std::uint64_t filter_elements = 256,
                        std::uint64_t classifier_elements = 1025,
                        double alpha = 0.05);

// CSV with '.' decimals, 3-decimal AUC cells, exact integer sizes; the
// markdown mirrors the CSVs.
std::string render_auc_csv(const EvalReport& report);
std::string render_sizes_csv(const EvalReport& report);  // ReportError for ELM
std::string render_significance_csv(const EvalReport& report);
std::string render_markdown(const EvalReport& report);

}  // namespace erpq
