#include "lrpca/harness/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lrpca/errors.hpp"
#include "lrpca/harness/checkpoint.hpp"
#include "lrpca/harness/evaluate.hpp"
#include "lrpca/metrics/metrics.hpp"
#include "lrpca/nn/adam.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::harness {

namespace fs = std::filesystem;
using nn::Array4;
using util::format_double;

namespace {

// Independent random streams derived from the run seed.
constexpr std::uint64_t kSceneStream = 101;
constexpr std::uint64_t kSplitStream = 102;
constexpr std::uint64_t kInitStream = 103;
constexpr std::uint64_t kShuffleStream = 104;
constexpr std::uint64_t kNoiseStream = 105;
constexpr std::uint64_t kLipschitzStream = 106;

void require_uniform_shapes(const std::vector<data::Sample>& samples, nn::Shape4& shape,
                            bool& have_shape) {
  for (const auto& s : samples) {
    if (s.image.shape() != s.mask.shape()) {
      throw DataError("sample '" + s.id + "': image " + s.image.shape().str() + " and mask " +
                      s.mask.shape().str() + " differ");
    }
    if (s.image.shape().n != 1 || s.image.shape().c != 1) {
      throw DataError("sample '" + s.id + "' is not a single plane");
    }
    if (!have_shape) {
      shape = s.image.shape();
      have_shape = true;
    } else if (s.image.shape() != shape) {
      throw DataError("sample '" + s.id + "' has shape " + s.image.shape().str() +
                      ", expected " + shape.str() + " like the rest of the set");
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

// Run config text minus the keys allowed to differ on resume.
std::string resumable_part(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("epochs =", 0) == 0 || line.rfind("mode =", 0) == 0) continue;
    out += line + "\n";
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<EpochRecord> parse_train_log(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto f = split_csv(line);
    if (f.size() != 5) throw FormatError("checkpoint: malformed training log row '" + line + "'");
    EpochRecord r;
    r.epoch = util::to_size("epoch", f[0]);
    r.seg = util::to_double("seg", f[1]);
    r.fidelity = util::to_double("fidelity", f[2]);
    r.total = util::to_double("total", f[3]);
    if (!f[4].empty()) r.val_miou = util::to_double("val_miou", f[4]);
    out.push_back(r);
  }
  return out;
}

std::vector<LipschitzRecord> parse_lipschitz_log(const std::string& text) {
  std::vector<LipschitzRecord> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split_csv(line);
    if (f.size() != 5) throw FormatError("checkpoint: malformed Lipschitz log row '" + line + "'");
    LipschitzRecord r;
    r.epoch = util::to_size("epoch", f[0]);
    r.estimate.stage_index = util::to_size("stage", f[1]) - 1;
    r.estimate.module = model::module_kind_from_string(f[2]);
    r.estimate.estimate = util::to_double("estimate", f[3]);
    r.estimate.sample_count = util::to_size("samples", f[4]);
    out.push_back(r);
  }
  return out;
}

}  // namespace

DataSplit prepare_data(const RunConfig& config) {
  config.validate();
  std::vector<data::Sample> samples =
      config.data.dataset
          ? data::load_dataset(*config.data.dataset)
          : data::generate_scenes(config.data.scene, config.data.scene_count,
                                  nn::derive_seed(config.seed, kSceneStream));
  if (samples.empty()) throw DataError("dataset is empty");
  nn::Shape4 shape;
  bool have = false;
  require_uniform_shapes(samples, shape, have);
  auto [train, val] = data::split_dataset(std::move(samples), config.data.train_fraction,
                                          nn::derive_seed(config.seed, kSplitStream));
  return {std::move(train), std::move(val)};
}

std::string train_log_header() { return "epoch,seg,fidelity,total,val_miou"; }

std::string train_log_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + format_double(r.seg) + "," + format_double(r.fidelity) +
         "," + format_double(r.total) + "," + (r.val_miou ? format_double(*r.val_miou) : "");
}

std::string lipschitz_log_header() { return "epoch,stage,module,estimate,samples"; }

std::string lipschitz_log_row(const LipschitzRecord& r) {
  return std::to_string(r.epoch) + "," + std::to_string(r.estimate.stage_index + 1) + "," +
         std::string(model::to_string(r.estimate.module)) + "," +
         format_double(r.estimate.estimate) + "," + std::to_string(r.estimate.sample_count);
}

std::string locate_non_finite(const model::DecompositionTrace<float>& trace) {
  for (const auto& st : trace) {
    const std::pair<const char*, const Array4<float>*> parts[] = {
        {"B", &st.B}, {"T", &st.T}, {"N", &st.N}, {"D", &st.D}};
    for (const auto& [name, a] : parts) {
      if (!a->all_finite()) {
        return "stage " + std::to_string(st.stage_index) + " (" + name + ")";
      }
    }
  }
  return {};
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t width) {
  std::vector<double> out;
  if (width == 0 || values.size() < width) return out;
  for (std::size_t i = 0; i + width <= values.size(); ++i) {
    out.push_back(std::accumulate(values.begin() + static_cast<std::ptrdiff_t>(i),
                                  values.begin() + static_cast<std::ptrdiff_t>(i + width), 0.0) /
                  static_cast<double>(width));
  }
  return out;
}

double final_quarter_cv(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("final_quarter_cv: no values");
  const std::size_t k = (values.size() + 3) / 4;
  const auto first = values.end() - static_cast<std::ptrdiff_t>(k);
  const double mean = std::accumulate(first, values.end(), 0.0) / static_cast<double>(k);
  double var = 0.0;
  for (auto it = first; it != values.end(); ++it) var += (*it - mean) * (*it - mean);
  var /= static_cast<double>(k);
  return std::sqrt(var) / std::abs(mean);
}

TrainResult train(const RunConfig& config, const DataSplit& data, const TrainOptions& options) {
  config.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  nn::Shape4 plane;
  bool have = false;
  require_uniform_shapes(data.train, plane, have);
  require_uniform_shapes(data.val, plane, have);

  TrainResult result{{}, {}, -1.0, 0,
                     model::UnfoldedModel<float>(config.model,
                                                 nn::derive_seed(config.seed, kInitStream))};
  auto& net = result.model;
  nn::AdamConfig ac;
  ac.lr = config.lr;
  nn::Adam<float> adam(ac);
  nn::Rng shuffle(nn::derive_seed(config.seed, kShuffleStream));
  const std::string run_text = config.str(false);
  std::string log_text = train_log_header() + "\n";
  std::string lip_text = lipschitz_log_header() + "\n";
  std::size_t start = 0;

  if (options.resume) {
    const Checkpoint ck = load_checkpoint(*options.resume, config.model);
    if (resumable_part(ck.run_config) != resumable_part(run_text)) {
      throw ConfigError("cannot resume '" + options.resume->string() +
                        "': it was written by a run with different settings");
    }
    restore(ck, net, &adam);
    shuffle.set_state(ck.rng_state);
    start = static_cast<std::size_t>(ck.epoch);
    result.best_val_miou = ck.best_val_miou;
    result.best_epoch = static_cast<std::size_t>(ck.best_epoch);
    log_text = ck.train_log;
    lip_text = ck.lipschitz_log;
    result.history = parse_train_log(log_text);
    result.lipschitz = parse_lipschitz_log(lip_text);
  }

  if (options.write_files) fs::create_directories(config.output_dir);
  const std::size_t n = data.train.size();
  const std::size_t hw = plane.h * plane.w;
  const std::uint64_t noise_seed = nn::derive_seed(config.seed, kNoiseStream);
  model::LipschitzOptions lip_opts = options.lipschitz;
  lip_opts.seed = nn::derive_seed(config.seed, kLipschitzStream);

  for (std::size_t epoch = start + 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double seg = 0.0, fid = 0.0, tot = 0.0;
    for (std::size_t b0 = 0, batch_no = 1; b0 < n; b0 += config.batch_size, ++batch_no) {
      const std::size_t bs = std::min(config.batch_size, n - b0);
      Array4<float> x({bs, 1, plane.h, plane.w}), gt({bs, 1, plane.h, plane.w});
      for (std::size_t j = 0; j < bs; ++j) {
        const std::size_t idx = order[b0 + j];
        const auto& s = data.train[idx];
        const data::Plane img =
            config.train_noise.enabled
                ? data::add_noise(s.image, config.train_noise.spec,
                                  nn::derive_seed(noise_seed, (epoch - 1) * n + idx))
                : s.image;
        for (std::size_t p = 0; p < hw; ++p) {
          x[j * hw + p] = static_cast<float>(img[p]);
          gt[j * hw + p] = static_cast<float>(s.mask[p]);
        }
      }
      net.zero_grad();
      const auto out = net.forward(x, nn::Mode::train);
      Array4<float> prob(x.shape());
      for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = 1.0f / (1.0f + std::exp(-out.target[i]));
      Array4<float> g_prob, g_recon;
      const auto loss = metrics::total_loss(prob, gt, out.reconstruction, x, config.loss, &g_prob, &g_recon);
      if (!std::isfinite(loss.total)) {
        const auto traced = net.forward(x, nn::Mode::train, true);
        const std::string where = locate_non_finite(*traced.trace);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no) + ": " +
                           (where.empty() ? "the loss itself" : "first non-finite output in " + where));
      }
      Array4<float> g_target(x.shape());
      for (std::size_t i = 0; i < prob.size(); ++i) {
        g_target[i] = g_prob[i] * prob[i] * (1.0f - prob[i]);
      }
      net.backward(g_target, g_recon);
      adam.step(net.parameters());
      seg += loss.seg * static_cast<double>(bs);
      fid += loss.fidelity * static_cast<double>(bs);
      tot += loss.total * static_cast<double>(bs);
    }

    EpochRecord rec{epoch, seg / static_cast<double>(n), fid / static_cast<double>(n),
                    tot / static_cast<double>(n), std::nullopt};
    const bool checkpoint_epoch = epoch % config.val_every == 0 || epoch == config.epochs;
    bool improved = false;
    if (checkpoint_epoch) {
      if (!data.val.empty()) {
        EvalOptions eo;
        eo.threshold = config.loss.binarize_threshold;
        rec.val_miou = evaluate(model_predictor(net), data.val, eo).summary().miou;
        if (*rec.val_miou > result.best_val_miou) {
          result.best_val_miou = *rec.val_miou;
          result.best_epoch = epoch;
          improved = true;
        }
      }
      for (std::size_t k = 0; k < net.stage_count(); ++k) {
        for (const auto kind : {model::ModuleKind::target, model::ModuleKind::noise}) {
          LipschitzRecord lr{epoch, model::estimate_lipschitz(net, kind, k, lip_opts)};
          lip_text += lipschitz_log_row(lr) + "\n";
          result.lipschitz.push_back(lr);
        }
      }
    }
    result.history.push_back(rec);
    log_text += train_log_row(rec) + "\n";
    if (options.progress != nullptr) *options.progress << train_log_row(rec) << std::endl;

    const bool stopping = options.stop_after && *options.stop_after == epoch;
    if (options.write_files) {
      write_text(config.output_dir / "train_log.csv", log_text);
      write_text(config.output_dir / "lipschitz.csv", lip_text);
      if (checkpoint_epoch || stopping) {
        Checkpoint ck = capture(net, &adam);
        ck.run_config = run_text;
        ck.epoch = epoch;
        ck.best_val_miou = result.best_val_miou;
        ck.best_epoch = result.best_epoch;
        ck.rng_state = shuffle.state();
        ck.train_log = log_text;
        ck.lipschitz_log = lip_text;
        save_checkpoint(config.output_dir / "last.ckpt", ck);
        if (improved) save_checkpoint(config.output_dir / "best.ckpt", ck);
      }
    }
    if (stopping) break;
  }
  return result;
}

}  // namespace lrpca::harness
