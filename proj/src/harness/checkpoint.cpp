#include "lrpca/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "lrpca/errors.hpp"

namespace lrpca::harness {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

namespace {

class Writer {
 public:
  template <typename V>
  void pod(const V& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  void floats(const std::vector<float>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  void shape(const nn::Shape4& s) {
    for (const std::size_t d : {s.n, s.c, s.h, s.w}) pod<std::uint64_t>(d);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : buf_(bytes), origin_(std::move(origin)) {}

  template <typename V>
  V pod() {
    V v;
    need(sizeof v);
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto len = pod<std::uint64_t>();
    need(len);
    std::string s = buf_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  std::vector<float> floats(std::size_t count) {
    if (count > (buf_.size() - pos_) / sizeof(float)) truncated();
    std::vector<float> v(count);
    std::memcpy(v.data(), buf_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
    return v;
  }
  nn::Shape4 shape() {
    nn::Shape4 s;
    s.n = pod<std::uint64_t>();
    s.c = pod<std::uint64_t>();
    s.h = pod<std::uint64_t>();
    s.w = pod<std::uint64_t>();
    // guard against corrupt sizes before allocating
    const double count = static_cast<double>(s.n) * s.c * s.h * s.w;
    if (count * sizeof(float) > static_cast<double>(buf_.size())) truncated();
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  [[noreturn]] void truncated() const {
    throw FormatError("checkpoint '" + origin_ + "' is truncated or corrupt");
  }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) truncated();
  }
  const std::string& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

TensorRecord record(const nn::Parameter<float>& p) {
  return {p.name, p.value.shape(), p.trainable, {p.value.values().begin(), p.value.values().end()}};
}

TensorRecord record(const std::string& name, const nn::Array4<float>& a) {
  return {name, a.shape(), true, {a.values().begin(), a.values().end()}};
}

nn::Array4<float> to_array(const TensorRecord& t) { return nn::Array4<float>(t.shape, t.data); }

}  // namespace

Checkpoint capture(model::UnfoldedModel<float>& model, const nn::Adam<float>* adam) {
  Checkpoint c;
  c.model = model.config();
  for (const auto* p : model.parameters()) c.parameters.push_back(record(*p));
  if (adam != nullptr) {
    c.adam_steps = adam->steps();
    for (const auto& [name, mom] : adam->moments()) {
      c.adam_m.push_back(record(name, mom.m));
      c.adam_v.push_back(record(name, mom.v));
    }
  }
  return c;
}

void restore(const Checkpoint& ckpt, model::UnfoldedModel<float>& model, nn::Adam<float>* adam) {
  if (ckpt.model.hash() != model.config().hash()) {
    throw FormatError("checkpoint config hash does not match the model");
  }
  auto params = model.parameters();
  if (params.size() != ckpt.parameters.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  }
  std::map<std::string, const nn::Parameter<float>*> by_name;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = ckpt.parameters[i];
    const auto* p = params[i];
    if (t.name != p->name || t.shape != p->value.shape() || t.trainable != p->trainable ||
        t.data.size() != p->value.size()) {
      throw FormatError("checkpoint tensor '" + t.name + "' does not match model tensor '" +
                        p->name + "'");
    }
    by_name.emplace(p->name, p);
  }
  std::map<std::string, nn::Adam<float>::Moments> moments;
  if (adam != nullptr) {
    if (ckpt.adam_m.size() != ckpt.adam_v.size()) throw FormatError("checkpoint: adam state torn");
    for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
      const auto& m = ckpt.adam_m[i];
      const auto& v = ckpt.adam_v[i];
      const auto it = by_name.find(m.name);
      if (it == by_name.end() || v.name != m.name || m.shape != it->second->value.shape() ||
          v.shape != m.shape || m.data.size() != it->second->size() ||
          v.data.size() != m.data.size()) {
        throw FormatError("checkpoint: adam state '" + m.name + "' does not match the model");
      }
      moments.emplace(m.name, nn::Adam<float>::Moments{to_array(m), to_array(v)});
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = to_array(ckpt.parameters[i]);
    params[i]->zero_grad();
  }
  if (adam != nullptr) adam->restore(ckpt.adam_steps, std::move(moments));
}

model::UnfoldedModel<float> load_model(const Checkpoint& ckpt) {
  model::UnfoldedModel<float> m(ckpt.model, 0);
  restore(ckpt, m, nullptr);
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  for (const char ch : kCheckpointMagic) w.pod(ch);
  w.pod(kCheckpointVersion);
  w.str(ckpt.model.str());
  w.pod<std::uint64_t>(ckpt.model.hash());
  w.str(ckpt.run_config);
  w.pod<std::uint64_t>(ckpt.epoch);
  w.pod<double>(ckpt.best_val_miou);
  w.pod<std::uint64_t>(ckpt.best_epoch);
  w.str(ckpt.rng_state);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.parameters.size()));
  for (const auto& t : ckpt.parameters) {
    w.str(t.name);
    w.shape(t.shape);
    w.pod<std::uint8_t>(t.trainable ? 1 : 0);
    w.floats(t.data);
  }
  w.pod<std::int64_t>(ckpt.adam_steps);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.adam_m.size()));
  for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
    w.str(ckpt.adam_m[i].name);
    w.shape(ckpt.adam_m[i].shape);
    w.floats(ckpt.adam_m[i].data);
    w.floats(ckpt.adam_v[i].data);
  }
  w.str(ckpt.train_log);
  w.str(ckpt.lipschitz_log);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out.flush();
    if (!out) throw DataError("write failed for checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<model::ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(bytes, path.string());
  char magic[8];
  for (char& ch : magic) ch = r.pod<char>();
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path.string() + "' has format version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  const std::string model_text = r.str();
  const auto stored_hash = r.pod<std::uint64_t>();
  try {
    c.model = model::ModelConfig::parse(model_text);
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint '" + path.string() + "': bad model config: " + e.what());
  }
  if (c.model.hash() != stored_hash) {
    throw FormatError("checkpoint '" + path.string() + "': config hash mismatch");
  }
  if (expected && expected->hash() != stored_hash) {
    throw FormatError("checkpoint '" + path.string() +
                      "' was written for a different model configuration");
  }
  c.run_config = r.str();
  c.epoch = r.pod<std::uint64_t>();
  c.best_val_miou = r.pod<double>();
  c.best_epoch = r.pod<std::uint64_t>();
  c.rng_state = r.str();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.str();
    t.shape = r.shape();
    t.trainable = r.pod<std::uint8_t>() != 0;
    t.data = r.floats(t.shape.size());
    c.parameters.push_back(std::move(t));
  }
  c.adam_steps = r.pod<std::int64_t>();
  const auto moments = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < moments; ++i) {
    TensorRecord m;
    m.name = r.str();
    m.shape = r.shape();
    m.data = r.floats(m.shape.size());
    TensorRecord v{m.name, m.shape, true, r.floats(m.shape.size())};
    c.adam_m.push_back(std::move(m));
    c.adam_v.push_back(std::move(v));
  }
  c.train_log = r.str();
  c.lipschitz_log = r.str();
  if (!r.at_end()) throw FormatError("checkpoint '" + path.string() + "' has trailing bytes");
  return c;
}

}  // namespace lrpca::harness
