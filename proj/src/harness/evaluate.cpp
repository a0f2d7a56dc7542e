#include "lrpca/harness/evaluate.hpp"

#include <cmath>
#include <sstream>

#include "lrpca/errors.hpp"
#include "lrpca/nn/rng.hpp"
#include "lrpca/rpca/rpca.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::harness {

Predictor model_predictor(const model::UnfoldedModel<float>& model) {
  return [&model](const data::Plane& image) {
    const auto out = model.infer(image.cast<float>());
    data::Plane prob(image.shape());
    for (std::size_t i = 0; i < prob.size(); ++i) {
      prob[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(out.target[i])));
    }
    return prob;
  };
}

Predictor rpca_predictor(const RpcaBaselineConfig& config) {
  return [config](const data::Plane& image) {
    rpca::RPCAConfig rc;
    rc.lambda = config.lambda;
    rc.mu = config.mu;
    rc.max_iters = config.max_iters;
    const auto r = rpca::rpca_solve(rpca::to_matrix(image), rc);
    const double peak = r.T.maxCoeff();
    data::Plane score(image.shape());
    if (peak > 0.0) {
      const rpca::Matrix s = r.T.cwiseMax(0.0) / peak;
      rpca::write_plane(s, score);
    }
    return score;
  };
}

metrics::MetricAccumulator evaluate(const Predictor& predict, const std::vector<data::Sample>& samples,
                                    const EvalOptions& options) {
  metrics::MetricAccumulator acc(options.threshold, options.match_radius);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.image.shape() != s.mask.shape()) {
      throw DataError("sample '" + s.id + "': image and mask shapes differ");
    }
    const data::Plane input =
        options.noise ? data::add_noise(s.image, *options.noise, nn::derive_seed(options.noise_seed, i))
                      : s.image;
    const data::Plane prob = predict(input);
    if (prob.shape() != s.mask.shape()) {
      throw ShapeError("sample '" + s.id + "': prediction shape " + prob.shape().str() +
                           " differs from mask " + s.mask.shape().str(),
                       "height");
    }
    acc.add(s.id, prob, s.mask);
  }
  return acc;
}

std::string_view to_string(SweepProtocol p) {
  return p == SweepProtocol::gaussian ? "gaussian" : "salt_pepper";
}

SweepProtocol sweep_protocol_from_string(std::string_view name) {
  if (name == "gaussian") return SweepProtocol::gaussian;
  if (name == "salt_pepper") return SweepProtocol::salt_pepper;
  throw ConfigError("unknown sweep protocol '" + std::string(name) + "'");
}

std::vector<SweepLevel> sweep_levels(SweepProtocol protocol, const std::vector<double>& values,
                                     double pepper) {
  std::vector<SweepLevel> out;
  for (const double v : values) {
    SweepLevel l;
    l.level = v;
    if (protocol == SweepProtocol::gaussian) {
      l.spec = data::NoiseSpec::gaussian(v);
    } else {
      l.spec = v == 0.0 ? data::NoiseSpec::salt_pepper(0.0, 0.0) : data::NoiseSpec::salt_pepper(v, pepper);
    }
    l.spec.validate();
    out.push_back(l);
  }
  return out;
}

std::vector<SweepLevel> default_sweep_levels(SweepProtocol protocol) {
  if (protocol == SweepProtocol::gaussian) return sweep_levels(protocol, {0, 5, 10, 15, 20});
  return sweep_levels(protocol, {0, 0.02, 0.04, 0.06, 0.08, 0.10});
}

std::vector<SweepRow> robustness_sweep(const Predictor& predict,
                                       const std::vector<data::Sample>& samples,
                                       SweepProtocol protocol, const std::vector<SweepLevel>& levels,
                                       const EvalOptions& base) {
  std::vector<SweepRow> rows;
  for (const auto& level : levels) {
    EvalOptions o = base;
    o.noise = level.spec;
    rows.push_back({protocol, level, evaluate(predict, samples, o).summary()});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  using util::format_double;
  const auto num = [](double v) { return std::isnan(v) ? std::string("nan") : format_double(v); };
  std::ostringstream os;
  os << "protocol,level,salt,pepper,miou,f1,pd,fa,auc,tp,fp,fn,tn\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    os << to_string(r.protocol) << ',' << format_double(r.level.level) << ','
       << format_double(r.level.spec.salt_prob) << ',' << format_double(r.level.spec.pepper_prob)
       << ',' << num(m.miou) << ',' << num(m.f1) << ',' << num(m.pd) << ',' << num(m.fa) << ','
       << num(m.auc) << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ','
       << m.counts.tn << '\n';
  }
  return os.str();
}

}  // namespace lrpca::harness
