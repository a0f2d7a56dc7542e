// Command-line driver: train, eval, decompose, sweep, synth, gradcheck,
// baseline and ablate subcommands over a flat key = value run config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lrpca/errors.hpp"
#include "lrpca/harness/ablation.hpp"
#include "lrpca/harness/checkpoint.hpp"
#include "lrpca/harness/decompose.hpp"
#include "lrpca/harness/evaluate.hpp"
#include "lrpca/harness/gradcheck_suite.hpp"
#include "lrpca/harness/trainer.hpp"
#include "lrpca/util/kv.hpp"
#include "lrpca/util/png.hpp"

namespace fs = std::filesystem;
using namespace lrpca;
using namespace lrpca::harness;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write '" + p.string() + "'");
}

RunConfig resolve(const Common& c, RunMode mode) {
  util::KeyValues kv;
  if (!c.config_file.empty()) kv = util::parse_key_values(read_file(c.config_file));
  util::KeyValues over;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    over[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (c.seed) over["seed"] = std::to_string(*c.seed);
  if (!c.out.empty()) over["out"] = c.out;
  over["mode"] = std::string(to_string(mode));
  return RunConfig::from_key_values(merge(kv, over));
}

std::string summary_line(const metrics::MetricReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "mIoU %.2f%%  F1 %.2f%%  Pd %.2f%%  Fa %.2f (1e-5)  AUC %.4f",
                100 * r.miou, 100 * r.f1, 100 * r.pd, 1e5 * r.fa, r.auc);
  return buf;
}

std::vector<data::Sample> eval_samples(const RunConfig& rc, const std::string& data_dir) {
  if (!data_dir.empty()) return data::load_dataset(data_dir);
  return prepare_data(rc).val;
}

int run_train(const RunConfig& rc, const std::string& resume, std::optional<std::size_t> stop_after) {
  TrainOptions o;
  if (!resume.empty()) o.resume = fs::path(resume);
  o.stop_after = stop_after;
  o.progress = &std::cout;
  std::cout << train_log_header() << '\n';
  const auto r = train(rc, prepare_data(rc), o);
  std::cout << "best val mIoU " << util::format_double(r.best_val_miou) << " at epoch "
            << r.best_epoch << "; checkpoints in " << rc.output_dir.string() << '\n';
  return kOk;
}

int run_eval(const RunConfig& rc, const std::string& ckpt_path, const std::string& data_dir) {
  const auto ck = load_checkpoint(ckpt_path);
  const auto model = load_model(ck);
  EvalOptions eo;
  eo.threshold = rc.loss.binarize_threshold;
  const auto acc = evaluate(model_predictor(model), eval_samples(rc, data_dir), eo);
  write_file(rc.output_dir / "eval.csv", acc.csv());
  std::cout << summary_line(acc.summary()) << '\n';
  return kOk;
}

int run_baseline(const RunConfig& rc, const std::string& data_dir) {
  EvalOptions eo;
  eo.threshold = rc.loss.binarize_threshold;
  const auto acc = evaluate(rpca_predictor(rc.rpca), eval_samples(rc, data_dir), eo);
  write_file(rc.output_dir / "baseline.csv", acc.csv());
  std::cout << summary_line(acc.summary()) << '\n';
  return kOk;
}

int run_decompose(const RunConfig& rc, const std::string& ckpt_path, const std::string& image,
                  std::size_t index) {
  const auto model = load_model(load_checkpoint(ckpt_path));
  data::Plane plane;
  if (!image.empty()) {
    const auto g = util::read_png_gray(image);
    plane = data::Plane({1, 1, g.height, g.width});
    for (std::size_t i = 0; i < g.pixels.size(); ++i) plane[i] = g.pixels[i] / g.max_value();
  } else {
    const auto val = prepare_data(rc).val;
    if (index >= val.size()) throw DataError("--index " + std::to_string(index) + " is out of range");
    plane = val[index].image;
  }
  const auto entries = decompose(model, plane.cast<float>(), rc.output_dir / "decompose");
  std::cout << entries.size() << " maps written to " << (rc.output_dir / "decompose").string()
            << '\n';
  return kOk;
}

int run_sweep(const RunConfig& rc, const std::string& ckpt_path, const std::string& protocol_name,
              const std::vector<double>& levels, double pepper, const std::string& data_dir,
              bool baseline) {
  const auto protocol = sweep_protocol_from_string(protocol_name);
  const auto grid = levels.empty() ? default_sweep_levels(protocol) : sweep_levels(protocol, levels, pepper);
  std::optional<model::UnfoldedModel<float>> model;
  Predictor predict;
  if (baseline) {
    predict = rpca_predictor(rc.rpca);
  } else {
    if (ckpt_path.empty()) throw ConfigError("sweep needs --checkpoint or --baseline");
    model.emplace(load_model(load_checkpoint(ckpt_path)));
    predict = model_predictor(*model);
  }
  EvalOptions eo;
  eo.threshold = rc.loss.binarize_threshold;
  eo.noise_seed = nn::derive_seed(rc.seed, 200);
  const auto rows = robustness_sweep(predict, eval_samples(rc, data_dir), protocol, grid, eo);
  write_file(rc.output_dir / ("sweep_" + protocol_name + ".csv"), sweep_csv(rows));
  for (const auto& r : rows) {
    std::cout << protocol_name << " " << util::format_double(r.level.level) << ": "
              << summary_line(r.report) << '\n';
  }
  return kOk;
}

int run_synth(const RunConfig& rc) {
  if (rc.data.dataset) throw ConfigError("synth writes synthetic scenes; remove the data key");
  const auto split = prepare_data(rc);
  data::save_dataset(rc.output_dir / "train", split.train);
  data::save_dataset(rc.output_dir / "val", split.val);
  std::cout << split.train.size() << " train and " << split.val.size() << " val scenes written to "
            << rc.output_dir.string() << '\n';
  return kOk;
}

int run_gradcheck(const RunConfig& rc) {
  bool ok = true;
  for (const auto& e : run_gradcheck_suite(rc.model, rc.seed)) {
    std::printf("%-22s max rel err %.3e  checked %zu  skipped %zu  %s\n", e.name.c_str(),
                e.report.max_relative_error, e.report.checked, e.report.skipped,
                e.report.passed ? "ok" : ("FAIL at " + e.report.worst_entry).c_str());
    ok = ok && e.report.passed;
  }
  return ok ? kOk : kNumeric;
}

int run_ablate(const RunConfig& rc, const std::string& grid_name, bool run) {
  const auto grid = ablation_grid(ablation_grid_from_string(grid_name), rc);
  std::ostringstream csv;
  csv << "label,params,miou,f1,pd,fa,auc\n";
  for (const auto& e : grid) {
    write_file(e.config.output_dir / "run.cfg", e.config.str());
    if (!run) {
      std::cout << e.label << "  params " << model::count_parameters(e.config.model) << "  "
                << (e.config.output_dir / "run.cfg").string() << '\n';
      continue;
    }
    const auto split = prepare_data(e.config);
    const auto result = train(e.config, split);
    EvalOptions eo;
    eo.threshold = e.config.loss.binarize_threshold;
    const auto s = evaluate(model_predictor(result.model), split.val, eo).summary();
    csv << e.label << ',' << model::count_parameters(e.config.model) << ','
        << util::format_double(s.miou) << ',' << util::format_double(s.f1) << ','
        << util::format_double(s.pd) << ',' << util::format_double(s.fa) << ','
        << util::format_double(s.auc) << '\n';
    std::cout << e.label << ": " << summary_line(s) << '\n';
  }
  if (run) write_file(rc.output_dir / ("ablation_" + grid_name + ".csv"), csv.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-unfolded low-rank + sparse decomposition for infrared small targets"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "key = value run config file");
    sub->add_option("--seed", common.seed, "overrides the config seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--set", common.sets, "key=value override (repeatable)");
  };

  std::string checkpoint, data_dir, image, resume, protocol = "gaussian", grid = "se";
  std::optional<std::size_t> stop_after;
  std::size_t index = 0;
  std::vector<double> levels;
  double pepper = kSweepPepper;
  bool baseline = false, run_grid = false;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");
  train_cmd->add_option("--stop-after", stop_after, "stop after this epoch");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint; writes eval.csv");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory (default: the config's val split)");

  auto* base_cmd = app.add_subcommand("baseline", "score the classical decomposition");
  add_common(base_cmd);
  base_cmd->add_option("--data", data_dir);

  auto* dec_cmd = app.add_subcommand("decompose", "dump per-stage B, T, N, D maps");
  add_common(dec_cmd);
  dec_cmd->add_option("--checkpoint", checkpoint)->required();
  auto* img_opt = dec_cmd->add_option("--image", image, "grayscale PNG");
  dec_cmd->add_option("--index", index, "val-split sample instead of --image")->excludes(img_opt);

  auto* sweep_cmd = app.add_subcommand("sweep", "noise robustness sweep");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--checkpoint", checkpoint);
  sweep_cmd->add_flag("--baseline", baseline, "sweep the classical decomposition instead");
  sweep_cmd->add_option("--protocol", protocol)->check(CLI::IsMember({"gaussian", "salt_pepper"}));
  sweep_cmd->add_option("--levels", levels, "custom grid")->delimiter(',');
  sweep_cmd->add_option("--pepper", pepper, "pepper probability for salt_pepper levels");
  sweep_cmd->add_option("--data", data_dir);

  auto* synth_cmd = app.add_subcommand("synth", "write synthetic train/val sets as PNG");
  add_common(synth_cmd);

  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc_cmd);

  auto* abl_cmd = app.add_subcommand("ablate", "enumerate (or run) an ablation grid");
  add_common(abl_cmd);
  abl_cmd->add_option("--grid", grid)->check(CLI::IsMember({"se", "stages", "channels", "eta"}));
  abl_cmd->add_flag("--run", run_grid, "train and evaluate every entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(resolve(common, RunMode::train), resume, stop_after);
    if (*eval_cmd) return run_eval(resolve(common, RunMode::eval), checkpoint, data_dir);
    if (*base_cmd) return run_baseline(resolve(common, RunMode::baseline), data_dir);
    if (*dec_cmd) return run_decompose(resolve(common, RunMode::decompose), checkpoint, image, index);
    if (*sweep_cmd) {
      return run_sweep(resolve(common, RunMode::sweep), checkpoint, protocol, levels, pepper,
                       data_dir, baseline);
    }
    if (*synth_cmd) return run_synth(resolve(common, RunMode::synth));
    if (*gc_cmd) return run_gradcheck(resolve(common, RunMode::gradcheck));
    if (*abl_cmd) return run_ablate(resolve(common, RunMode::ablate), grid, run_grid);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
