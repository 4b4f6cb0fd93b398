// erpq: synthetic ERP benchmark driver. Subcommands:
//   gen      write synthetic epoch files + manifest
//   run      cross-validated AUC grid over quantization conditions
//   inspect  dump a .ptqm model file
//   stats    recompute the significance matrix from an auc.csv
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "erpq/classify.hpp"
#include "erpq/errors.hpp"
#include "erpq/eval.hpp"
#include "erpq/modelfmt.hpp"
#include "erpq/quant.hpp"
#include "erpq/rng.hpp"
#include "erpq/spatial.hpp"
#include "erpq/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kModelExportKey = 0x4D4F44454C584F50ull;

struct GenArgs {
  int subjects = 19;
  std::uint64_t seed = erpq::GeneratorConfig{}.seed;
  std::string out = "out";
  int channels = 32;
  double amplitude = erpq::GeneratorConfig{}.erp_amplitude;
  double noise_std = 1.0;
  int targets = 160;
  int nontargets = 1440;
};

struct RunArgs {
  std::string classifier = "blda";
  std::string conditions;  // comma separated; empty = full default grid
  int folds = 5;
  std::uint64_t seed = 42;
  int subjects = 0;  // 0 = every subject in the manifest
  std::string out = "out";
  int jobs = 1;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw erpq::IoError("cannot open " + path.string() + " for writing");
  f.write(content.data(), std::streamsize(content.size()));
  if (!f) throw erpq::IoError("short write to " + path.string());
}

// CLI11 only reads config files attached to the root app, so feed the flat
// key=value file through the subcommand's option table by hand. Precedence:
// explicit flags > config file > defaults.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  CLI::ConfigINI reader;
  const std::vector<CLI::ConfigItem> items = reader.from_file(path);
  for (const CLI::ConfigItem& item : items) {
    if (!item.parents.empty())
      throw erpq::UsageError("config entries must be flat key=value; got '" +
                             item.fullname() + "'");
    if (item.name == "config")
      throw erpq::UsageError("a config file cannot set --config");
    CLI::Option* op = sub->get_option_no_throw("--" + item.name);
    if (op == nullptr)
      throw erpq::UsageError("unknown config key '" + item.name + "' in " +
                             path);
    if (op->count() > 0) continue;  // command-line flags win
    for (const std::string& v : item.inputs) op->add_result(v);
    op->run_callback();
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

int cmd_gen(const GenArgs& args) {
  erpq::GeneratorConfig config;
  config.n_subjects = args.subjects;
  config.seed = args.seed;
  config.channels = args.channels;
  config.spatial_profile = erpq::default_spatial_profile(args.channels);
  config.erp_amplitude = args.amplitude;
  config.noise_std = args.noise_std;
  config.n_targets = args.targets;
  config.n_nontargets = args.nontargets;
  erpq::validate(config);

  const fs::path out(args.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw erpq::IoError("cannot create " + out.string() + ": " + ec.message());

  json subjects = json::array();
  for (int i = 0; i < config.n_subjects; ++i) {
    const erpq::EpochSet set = erpq::generate_subject(config, i);
    const std::string file = set.subject_id + ".erpq";
    erpq::save_epochs(set, out / file);
    subjects.push_back({{"id", set.subject_id},
                        {"file", file},
                        {"seed", set.seed}});
    std::cout << "wrote " << (out / file).string() << " ("
              << set.epochs.size() << " epochs)\n";
  }

  const json manifest = {{"version", 1},
                         {"seed", config.seed},
                         {"channels", config.channels},
                         {"samples_per_epoch", config.samples_per_epoch},
                         {"sample_rate_hz", config.sample_rate_hz},
                         {"targets", config.n_targets},
                         {"nontargets", config.n_nontargets},
                         {"amplitude", config.erp_amplitude},
                         {"noise_std", config.noise_std},
                         {"subjects", subjects}};
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << (out / "manifest.json").string() << "\n";
  return 0;
}

std::string model_file_name(const std::string& label) {
  std::string name = label;
  std::replace(name.begin(), name.end(), '/', '-');
  return name + ".ptqm";
}

// Full-data models for the requested conditions, one .ptqm per label.
// Training work is shared across conditions exactly like evaluation:
// one classifier per filter scheme (BLDA) or init condition (ELM).
void export_models(const fs::path& dir, const erpq::EpochSet& set,
                   erpq::ClassifierKind kind,
                   const std::vector<erpq::ConditionId>& conditions,
                   std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw erpq::IoError("cannot create " + dir.string() + ": " + ec.message());

  const erpq::Labels labels = erpq::labels_of(set);
  const erpq::SpatialFilterBank bank =
      erpq::fit_xdawn(set, erpq::kXdawnFilters);

  if (kind == erpq::ClassifierKind::blda) {
    for (const erpq::ConditionId& c : conditions) {
      bool done = false;
      for (const erpq::ConditionId& prev : conditions) {
        if (&prev == &c) break;
        if (prev.label == c.label) done = true;
      }
      if (done) continue;

      const erpq::QuantizedTensor filters =
          erpq::quantize(bank.weights, c.filter_scheme);
      erpq::SpatialFilterBank b = bank;
      b.weights = erpq::dequantize(filters);
      const Eigen::MatrixXd x = erpq::feature_matrix(b, set);
      const erpq::BldaModel model = erpq::train_blda(x, labels);
      const Eigen::Map<const Eigen::MatrixXd> w(model.weights.data(),
                                                model.weights.size(), 1);
      const erpq::QuantizedTensor cls = erpq::quantize(w, c.classifier_scheme);
      erpq::save_model({{erpq::SectionKind::xdawn_filters, filters},
                        {erpq::SectionKind::blda, cls}},
                       dir / model_file_name(c.label));
    }
    return;
  }

  const Eigen::MatrixXd x = erpq::feature_matrix(bank, set);
  const erpq::QuantizedTensor filters =
      erpq::quantize(bank.weights, erpq::QuantScheme::float64);
  for (const erpq::ConditionId& c : conditions) {
    bool done = false;
    for (const erpq::ConditionId& prev : conditions) {
      if (&prev == &c) break;
      if (prev.label == c.label) done = true;
    }
    if (done) continue;

    const std::uint64_t s =
        erpq::stream_seed(erpq::stream_seed(seed, kModelExportKey),
                          std::uint64_t(c.elm_init));
    auto [iw, ib] = erpq::init_elm_weights(c.elm_init, s,
                                           erpq::kElmHiddenUnits,
                                           int(x.rows()));
    const erpq::ElmModel model = erpq::train_elm(iw, ib, x, labels, c.elm_init);

    Eigen::MatrixXd standardizer(2, model.standardizer.mean.size());
    standardizer.row(0) = model.standardizer.mean.transpose();
    standardizer.row(1) = model.standardizer.std.transpose();
    const Eigen::Map<const Eigen::MatrixXd> ow(model.output_weights.data(),
                                               model.output_weights.size(), 1);
    const Eigen::Map<const Eigen::MatrixXd> bias(model.input_biases.data(),
                                                 model.input_biases.size(), 1);
    using QS = erpq::QuantScheme;
    erpq::save_model(
        {{erpq::SectionKind::xdawn_filters, filters},
         {erpq::SectionKind::standardizer,
          erpq::quantize(standardizer, QS::float64)},
         {erpq::SectionKind::elm_input,
          erpq::quantize(model.input_weights, QS::float64)},
         {erpq::SectionKind::elm_bias, erpq::quantize(bias, QS::float64)},
         {erpq::SectionKind::elm_output,
          erpq::quantize(ow, c.classifier_scheme)}},
        dir / model_file_name(c.label));
  }
}

int cmd_run(const RunArgs& args) {
  const fs::path out(args.out);
  const fs::path manifest_path = out / "manifest.json";
  if (!fs::exists(manifest_path))
    throw erpq::DataError("no manifest at " + manifest_path.string() +
                          "; run `erpq gen --out " + args.out + "` first");

  json manifest;
  try {
    std::ifstream f(manifest_path, std::ios::binary);
    f >> manifest;
  } catch (const json::exception& e) {
    throw erpq::DataError("bad manifest " + manifest_path.string() + ": " +
                          e.what());
  }

  std::vector<std::string> ids, files;
  try {
    for (const json& s : manifest.at("subjects")) {
      ids.push_back(s.at("id").get<std::string>());
      files.push_back(s.at("file").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw erpq::DataError("bad manifest " + manifest_path.string() + ": " +
                          e.what());
  }
  if (ids.empty())
    throw erpq::DataError("manifest lists no subjects: " +
                          manifest_path.string());

  int n_subjects = int(ids.size());
  if (args.subjects > 0) {
    if (args.subjects > n_subjects)
      throw erpq::UsageError("--subjects " + std::to_string(args.subjects) +
                             " exceeds the " + std::to_string(n_subjects) +
                             " subjects in the manifest");
    n_subjects = args.subjects;
  }
  ids.resize(std::size_t(n_subjects));

  const erpq::ClassifierKind kind = erpq::parse_classifier(args.classifier);
  std::vector<std::string> labels = args.conditions.empty()
                                        ? erpq::default_condition_labels(kind)
                                        : split_commas(args.conditions);
  if (labels.empty()) throw erpq::UsageError("empty condition list");
  std::vector<erpq::ConditionId> conditions;
  conditions.reserve(labels.size());
  for (const std::string& l : labels)
    conditions.push_back(erpq::parse_condition(kind, l));

  const erpq::SubjectLoader load = [&](int i) {
    return erpq::load_epochs(out / files[std::size_t(i)]);
  };
  const Eigen::MatrixXd grid =
      erpq::evaluate_grid(n_subjects, load, kind, conditions, args.folds,
                          args.seed, args.jobs);

  const int channels = manifest.value("channels", 32);
  const int samples = manifest.value("samples_per_epoch", 128);
  const std::uint64_t filter_elements =
      std::uint64_t(erpq::kXdawnFilters) * std::uint64_t(channels);
  const std::uint64_t classifier_elements =
      std::uint64_t(erpq::kXdawnFilters) * std::uint64_t(samples) + 1;
  const erpq::EvalReport report =
      erpq::build_report(kind, conditions, ids, grid, filter_elements,
                         classifier_elements);

  write_file(out / "auc.csv", erpq::render_auc_csv(report));
  write_file(out / "significance.csv", erpq::render_significance_csv(report));
  if (kind == erpq::ClassifierKind::blda)
    write_file(out / "sizes.csv", erpq::render_sizes_csv(report));
  write_file(out / "report.md", erpq::render_markdown(report));

  export_models(out / "models", load(0), kind, conditions, args.seed);

  std::cout << "subjects " << n_subjects << ", folds " << args.folds
            << ", classifier " << erpq::classifier_name(kind) << "\n";
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  for (std::size_t c = 0; c < conditions.size(); ++c)
    std::cout << "condition " << conditions[c].label << ": mean AUC "
              << report.mean[Eigen::Index(c)] << "\n";
  std::cout << "wrote " << (out / "auc.csv").string() << ", "
            << (out / "significance.csv").string() << ", "
            << (kind == erpq::ClassifierKind::blda
                    ? (out / "sizes.csv").string() + ", "
                    : std::string())
            << (out / "report.md").string() << ", and "
            << (out / "models").string() << "/\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const std::vector<erpq::ModelSection> sections =
      erpq::load_model(fs::path(path));
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const erpq::ModelSection& s = sections[i];
    const std::uint64_t bits =
        erpq::tensor_size_bits(s.tensor.element_count(), s.tensor.scheme);
    total += bits;
    std::cout << "section " << i << ": "
              << erpq::section_kind_name(s.kind) << ", scheme "
              << erpq::scheme_name(s.tensor.scheme) << ", " << s.tensor.rows
              << "x" << s.tensor.cols << ", " << bits << " bits";
    if (!s.tensor.norm_params.empty()) {
      std::cout << ", norm params (" << s.tensor.norm_params.size() << ")";
      if (s.tensor.norm_params.size() <= 2) {
        for (const double v : s.tensor.norm_params) std::cout << " " << v;
      }
    }
    std::cout << "\n";
  }
  std::cout << "total " << total << " bits\n";
  return 0;
}

int cmd_stats(const std::string& path, double alpha) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw erpq::IoError("cannot open " + path);

  std::string line;
  if (!std::getline(f, line) || line.rfind("Method,", 0) != 0)
    throw erpq::DataError("not an auc.csv (missing Method header): " + path);
  const std::vector<std::string> labels = split_commas(line.substr(7));
  if (labels.empty()) throw erpq::DataError("no condition columns in " + path);

  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_commas(line);
    if (cells.empty()) continue;
    if (cells[0] == "Mean" || cells[0] == "SD") continue;
    if (cells.size() != labels.size() + 1)
      throw erpq::DataError("row '" + cells[0] + "' has " +
                            std::to_string(cells.size() - 1) + " cells, want " +
                            std::to_string(labels.size()));
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[i], &used));
        if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
      } catch (const std::exception&) {
        throw erpq::DataError("bad AUC cell '" + cells[i] + "' in row '" +
                              cells[0] + "'");
      }
    }
    ids.push_back(cells[0]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw erpq::DataError("no subject rows in " + path);

  Eigen::MatrixXd auc(Eigen::Index(rows.size()), Eigen::Index(labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < labels.size(); ++c)
      auc(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];

  erpq::EvalReport rep;
  rep.conditions.reserve(labels.size());
  for (const std::string& l : labels) {
    erpq::ConditionId c;
    c.label = l;
    rep.conditions.push_back(c);
  }
  // mirror run/build_report: too few subjects for the signed-rank test
  // yields the sentinel matrix rather than an error
  if (auc.rows() < 5)
    rep.significance = Eigen::MatrixXi::Constant(
        Eigen::Index(labels.size()), Eigen::Index(labels.size()), -1);
  else
    rep.significance = erpq::pairwise_significance(auc, alpha);
  std::cout << erpq::render_significance_csv(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic single-trial ERP detection under weight quantization"};
  app.require_subcommand(1);

  GenArgs gen_args;
  std::string gen_config;
  CLI::App* gen = app.add_subcommand(
      "gen", "generate synthetic epoch files and a manifest");
  gen->add_option("--config", gen_config,
                  "flat key=value file supplying any of the flags below");
  gen->add_option("--subjects", gen_args.subjects, "number of subjects")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  gen->add_option("--seed", gen_args.seed, "generator seed")
      ->capture_default_str();
  gen->add_option("--out", gen_args.out, "output directory")
      ->capture_default_str();
  gen->add_option("--channels", gen_args.channels, "electrode count")
      ->check(CLI::Range(1, 4096))
      ->capture_default_str();
  gen->add_option("--amplitude", gen_args.amplitude, "evoked response gain")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen->add_option("--noise-std", gen_args.noise_std,
                  "background noise standard deviation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--targets", gen_args.targets, "target epochs per subject")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
  gen->add_option("--nontargets", gen_args.nontargets,
                  "non-target epochs per subject")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();

  RunArgs run_args;
  std::string run_config;
  CLI::App* run = app.add_subcommand(
      "run", "evaluate the quantization grid and write report files");
  run->add_option("--config", run_config,
                  "flat key=value file supplying any of the flags below");
  run->add_option("--classifier", run_args.classifier, "blda or elm")
      ->capture_default_str();
  run->add_option("--conditions", run_args.conditions,
                  "comma-separated condition labels (default: full grid)");
  run->add_option("--folds", run_args.folds, "cross-validation folds")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  run->add_option("--seed", run_args.seed, "evaluation seed")
      ->capture_default_str();
  run->add_option("--subjects", run_args.subjects,
                  "evaluate only the first N subjects")
      ->check(CLI::Range(1, 1 << 20));
  run->add_option("--out", run_args.out,
                  "workspace directory holding the generated epochs")
      ->capture_default_str();
  run->add_option("--jobs", run_args.jobs, "worker threads over subjects")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();

  std::string inspect_path;
  CLI::App* inspect =
      app.add_subcommand("inspect", "print the sections of a .ptqm model");
  inspect->add_option("model", inspect_path, "model file")->required();

  std::string stats_path;
  double stats_alpha = 0.05;
  CLI::App* stats = app.add_subcommand(
      "stats", "recompute pairwise significance from an auc.csv");
  stats->add_option("auc_csv", stats_path, "auc.csv written by run")
      ->required();
  stats->add_option("--alpha", stats_alpha,
                    "significance level before Bonferroni correction")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) apply_config(gen, gen_config);
    if (run->parsed()) apply_config(run, run_config);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const erpq::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (run->parsed()) return cmd_run(run_args);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
    return cmd_stats(stats_path, stats_alpha);
  } catch (const erpq::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const erpq::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const erpq::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
