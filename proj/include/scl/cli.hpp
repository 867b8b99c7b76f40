#pragma once

// File-based command surface: gen-data, train, eval, embed, ablate.
//
// Exit codes: 0 success, 1 validation/usage error, 2 I/O or format error,
// 3 numerical abort.

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scl/ablation.hpp"
#include "scl/checkpoint.hpp"
#include "scl/dataset_io.hpp"
#include "scl/eval.hpp"
#include "scl/optim.hpp"
#include "scl/run_config.hpp"

namespace scl {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2, kExitNumeric = 3 };

namespace cli_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string confusion_csv(const MetricsReport& r) {
  std::string out;
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ",";
      out += std::to_string(row[j]);
    }
    out += "\n";
  }
  return out;
}

inline DatasetContainer load_dataset(const std::string& path) {
  try {
    return read_dataset(path);
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.detail(), e.offset());
  }
}

inline ModelParams<float> load_model(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.detail(), e.offset());
  }
}

inline RunConfig config_or_default(const std::string& path) {
  return path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(path);
}

struct Options {
  // gen-data
  std::string out;
  std::size_t classes = 8, per_class = 200, height = 32, width = 32, confusable = 2;
  std::uint64_t seed = 0;
  std::string split = "train";
  // shared
  std::string data, config, ckpt, log, report, confusion, project, test;
  bool no_scl = false;
  std::size_t seeds = 3;
};

inline int gen_data(const Options& o, const CLI::App& cmd, std::ostream& out) {
  RunConfig rc = config_or_default(o.config);
  GeneratorSpec spec = rc.generator;
  if (cmd.count("--classes")) spec.n_classes = o.classes;
  if (cmd.count("--per-class")) spec.images_per_class = o.per_class;
  if (cmd.count("--height")) spec.height = o.height;
  if (cmd.count("--width")) spec.width = o.width;
  if (cmd.count("--seed")) spec.seed = o.seed;
  if (cmd.count("--confusable-pairs")) spec.confusable_pairs = o.confusable;
  spec.split = o.split;
  spec.validate();
  const DatasetContainer ds = generate_synthetic_dataset(spec);
  write_dataset(ds, o.out);
  out << "wrote " << ds.size() << " images (" << ds.n_classes() << " classes, " << spec.split
      << " split) to " << o.out << "\n";
  return kExitOk;
}

inline int train(const Options& o, std::ostream& out) {
  RunConfig rc = config_or_default(o.config);
  if (o.no_scl) rc.train.scl_enabled = false;
  const DatasetContainer ds = load_dataset(o.data);
  const ModelConfig mc = model_config_for(rc, ds);
  const TrainResult<float> result = train_loop(ds, nullptr, mc, rc.train);
  save_checkpoint(result.params, o.out);
  write_train_log_csv(result.log, o.log);
  const auto& last = result.log.rows.back();
  out << "trained " << rc.train.iterations << " iterations (scl " << (rc.train.scl_enabled ? "on" : "off")
      << "), final l_total " << format_g6(last.l_total) << "\n";
  return kExitOk;
}

inline int eval(const Options& o, std::ostream& out) {
  const DatasetContainer ds = load_dataset(o.data);
  const ModelParams<float> params = load_model(o.ckpt);
  if (ds.n_classes() != params.config.n_classes || ds.height() != params.config.input_height ||
      ds.width() != params.config.input_width) {
    throw ValidationError("dataset does not match the checkpoint's model configuration");
  }
  const MetricsReport r = evaluate_model(params, ds);
  write_text(o.report, metrics_to_json(r).dump(2) + "\n");
  write_text(o.confusion, confusion_csv(r));
  out << "accuracy " << format_g6(r.accuracy) << ", macro recall " << format_g6(r.macro_recall)
      << ", macro AUC " << format_g6(r.macro_ovr_auc.value_or(0.0)) << "\n";
  return kExitOk;
}

inline int embed(const Options& o, std::ostream& out) {
  if (!o.project.empty() && o.project != "pca2") {
    throw ValidationError("--project accepts only 'pca2'");
  }
  const DatasetContainer ds = load_dataset(o.data);
  const ModelParams<float> params = load_model(o.ckpt);
  if (ds.height() != params.config.input_height || ds.width() != params.config.input_width) {
    throw ValidationError("dataset image size does not match the checkpoint");
  }
  const auto outputs = run_model(params, ds);
  std::string text;
  if (o.project == "pca2") {
    const Projection2d proj = pca_project_2d(outputs.embeddings);
    text = "x,y,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      text += format_g6(proj.points.at(i, 0)) + "," + format_g6(proj.points.at(i, 1)) + "," +
              std::to_string(ds.labels[i]) + "\n";
    }
    out << "explained variance " << format_g6(proj.explained[0]) << ", " << format_g6(proj.explained[1]) << "\n";
  } else {
    const std::size_t d = params.config.embed_dim;
    text = "label";
    for (std::size_t j = 0; j < d; ++j) text += ",e" + std::to_string(j);
    text += "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      text += std::to_string(ds.labels[i]);
      for (std::size_t j = 0; j < d; ++j) text += "," + format_g6(outputs.embeddings.at(i, j));
      text += "\n";
    }
  }
  write_text(o.out, text);
  out << "wrote " << ds.size() << " rows to " << o.out << "\n";
  return kExitOk;
}

inline int ablate(const Options& o, std::ostream& out) {
  if (o.seeds < 1) throw ValidationError("--seeds must be >= 1");
  const RunConfig rc = config_or_default(o.config);
  const DatasetContainer train_ds = load_dataset(o.data);
  const ModelConfig mc = model_config_for(rc, train_ds);
  DatasetContainer held_out;
  if (!o.test.empty()) {
    held_out = load_dataset(o.test);
  } else {
    GeneratorSpec spec = train_ds.spec;
    spec.split = "test";
    spec.images_per_class = rc.test_per_class;
    held_out = generate_synthetic_dataset(spec);
  }
  if (held_out.n_classes() != mc.n_classes || held_out.height() != mc.input_height ||
      held_out.width() != mc.input_width) {
    throw ValidationError("held-out dataset does not match the training dataset");
  }
  const AblationTable table = run_ablation(train_ds, held_out, mc, rc.train, o.seeds);
  write_text(o.out, ablation_csv(table));
  out << "mean accuracy difference (scl - baseline) " << format_g6(table.mean_diff[0]) << "\n";
  return kExitOk;
}

}  // namespace cli_detail

// args excludes the program name.
inline int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  using cli_detail::Options;
  Options o;
  CLI::App app{"Supervised contrastive training on synthetic band-pattern images", "scl"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  gen->add_option("--out", o.out, "Output dataset path")->required();
  gen->add_option("--classes", o.classes, "Number of classes");
  gen->add_option("--per-class", o.per_class, "Images per class");
  gen->add_option("--height", o.height, "Image height");
  gen->add_option("--width", o.width, "Image width");
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--confusable-pairs", o.confusable, "Class pairs differing in one band");
  gen->add_option("--split", o.split, "Image stream: train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  gen->add_option("--config", o.config, "JSON run configuration");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", o.data, "Training dataset")->required();
  tr->add_option("--config", o.config, "JSON run configuration");
  tr->add_option("--out", o.out, "Output checkpoint")->required();
  tr->add_option("--log", o.log, "Training log CSV")->required();
  tr->add_flag("--no-scl", o.no_scl, "Disable the contrastive term (baseline)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--data", o.data, "Dataset to evaluate on")->required();
  ev->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  ev->add_option("--report", o.report, "Metrics JSON")->required();
  ev->add_option("--confusion", o.confusion, "Confusion matrix CSV")->required();

  auto* em = app.add_subcommand("embed", "Export embeddings or a 2D projection");
  em->add_option("--data", o.data, "Dataset")->required();
  em->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  em->add_option("--out", o.out, "Output CSV")->required();
  em->add_option("--project", o.project, "Projection (pca2)");

  auto* ab = app.add_subcommand("ablate", "Train with and without the contrastive term");
  ab->add_option("--data", o.data, "Training dataset")->required();
  ab->add_option("--config", o.config, "JSON run configuration");
  ab->add_option("--seeds", o.seeds, "Number of derived seeds");
  ab->add_option("--out", o.out, "Result table CSV")->required();
  ab->add_option("--test", o.test, "Held-out dataset (default: regenerated test split)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return cli_detail::gen_data(o, *gen, out);
    if (tr->parsed()) return cli_detail::train(o, out);
    if (ev->parsed()) return cli_detail::eval(o, out);
    if (em->parsed()) return cli_detail::embed(o, out);
    return cli_detail::ablate(o, out);
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    if (const auto& row = e.last_finite()) {
      err << "last finite log row: iter " << row->iter << ", l_total " << format_g6(row->l_total)
          << ", l_con " << format_g6(row->l_con) << ", l_cls " << format_g6(row->l_cls) << "\n";
    }
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // validation, contract, dimension
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace scl
