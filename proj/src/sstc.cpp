#include "hypertta/sstc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "hypertta/common.hpp"
#include "hypertta/rng.hpp"

namespace hypertta {

namespace {

using nlohmann::json;

constexpr std::uint32_t kInitTag = 0x494E4954;     // init streams
constexpr std::uint32_t kShuffleTag = 0x53485546;  // per-epoch batch order
constexpr char kCheckpointMagic[8] = {'H', 'T', 'T', 'C', 'K', 'P', 'T', '1'};

void fill_gaussian(Parameter& p, RngStream& rng, double stddev) {
  for (double& v : p.value.data) v = stddev * rng.next_gaussian();
}

}  // namespace

int SstcConfig::model_dim() const {
  int d = 0;
  for (int v : branch_dims) d += v;
  return d;
}

int SstcConfig::tokens() const {
  return patch_size * patch_size;
}

int SstcConfig::center_token() const {
  return patch_size * (patch_size / 2) + patch_size / 2;
}

void SstcConfig::validate() const {
  if (patch_size < 1 || patch_size % 2 == 0) {
    throw ConfigError("sstc: patch size must be odd and positive");
  }
  if (branch_kernels.empty() || branch_kernels.size() != branch_dims.size()) {
    throw ConfigError("sstc: branch kernel and dim lists must match and be nonempty");
  }
  for (int k : branch_kernels) {
    if (k < 1 || k % 2 == 0) throw ConfigError("sstc: branch kernels must be odd");
    if (k > 2 * patch_size - 1) {
      throw ConfigError("sstc: branch kernel too large for reflect padding at this patch size");
    }
  }
  for (int d : branch_dims) {
    if (d < 1) throw ConfigError("sstc: branch dims must be positive");
  }
  if (heads < 1 || model_dim() % heads != 0) {
    throw ConfigError("sstc: model dim must be divisible by heads");
  }
  if (layers < 1) throw ConfigError("sstc: at least one encoder layer");
  if (classes < 2) throw ConfigError("sstc: need at least two classes");
  if (bands < 1) throw ConfigError("sstc: band count not set");
  if (smoothing < 0.0 || smoothing > 1.0) throw ConfigError("sstc: smoothing must be in [0,1]");
  if (lr <= 0.0) throw ConfigError("sstc: learning rate must be positive");
  if (epochs < 1 || batch < 1) throw ConfigError("sstc: epochs and batch must be positive");
}

json SstcConfig::to_json() const {
  return json{{"patch_size", patch_size},
              {"branch_kernels", branch_kernels},
              {"branch_dims", branch_dims},
              {"heads", heads},
              {"layers", layers},
              {"classes", classes},
              {"bands", bands},
              {"positional", positional},
              {"smoothing", smoothing},
              {"lr", lr},
              {"epochs", epochs},
              {"batch", batch},
              {"seed", seed}};
}

SstcConfig SstcConfig::from_json(const json& j) {
  SstcConfig cfg;
  try {
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.branch_kernels = j.value("branch_kernels", cfg.branch_kernels);
    cfg.branch_dims = j.value("branch_dims", cfg.branch_dims);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.layers = j.value("layers", cfg.layers);
    cfg.classes = j.value("classes", cfg.classes);
    cfg.bands = j.value("bands", cfg.bands);
    cfg.positional = j.value("positional", cfg.positional);
    cfg.smoothing = j.value("smoothing", cfg.smoothing);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    throw ConfigError("sstc config: " + std::string(e.what()));
  }
  return cfg;
}

SstcModel SstcModel::init(const SstcConfig& cfg) {
  cfg.validate();
  SstcModel model;
  model.config = cfg;
  const int d = cfg.model_dim();
  const int L = cfg.tokens();
  auto add = [&](Tensor t, std::string tag) -> Parameter& {
    model.params.emplace_back(std::move(t), std::move(tag));
    return model.params.back();
  };

  // One RNG lane per randomly initialized parameter, consumed in
  // construction order; zero- and one-filled parameters take none.
  std::uint32_t lane = 0;
  auto stream = [&]() { return RngStream(cfg.seed, kInitTag, lane++); };

  for (std::size_t m = 0; m < cfg.branch_kernels.size(); ++m) {
    const int k = cfg.branch_kernels[m];
    const int dm = cfg.branch_dims[m];
    const std::string base = "branch" + std::to_string(m);
    auto& cw = add(Tensor({dm, cfg.bands, k, k}), base + ".conv.w");
    auto rng = stream();
    fill_gaussian(cw, rng, std::sqrt(2.0 / (static_cast<double>(cfg.bands) * k * k)));
    add(Tensor({dm}), base + ".conv.b");
    auto& pw = add(Tensor({dm, dm}), base + ".proj.w");
    rng = stream();
    fill_gaussian(pw, rng, std::sqrt(2.0 / dm));
    add(Tensor({dm}), base + ".proj.b");
  }
  if (cfg.positional) {
    auto& pe = add(Tensor({L, d}), "posemb");
    auto rng = stream();
    fill_gaussian(pe, rng, 0.02);
  }
  int ln_index = 1;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string enc = "enc" + std::to_string(layer);
    add(Tensor::full({d}, 1.0), "ln" + std::to_string(ln_index) + ".gamma");
    add(Tensor({d}), "ln" + std::to_string(ln_index) + ".beta");
    ++ln_index;
    for (const char* name : {"wq", "wk", "wv", "wo"}) {
      auto& w = add(Tensor({d, d}), enc + ".attn." + name);
      auto rng = stream();
      fill_gaussian(w, rng, std::sqrt(1.0 / d));
      add(Tensor({d}), enc + ".attn.b" + std::string(1, name[1]));
    }
    add(Tensor::full({d}, 1.0), "ln" + std::to_string(ln_index) + ".gamma");
    add(Tensor({d}), "ln" + std::to_string(ln_index) + ".beta");
    ++ln_index;
    auto& w1 = add(Tensor({d, 2 * d}), enc + ".ffn.w1");
    auto rng = stream();
    fill_gaussian(w1, rng, std::sqrt(2.0 / d));
    add(Tensor({2 * d}), enc + ".ffn.b1");
    auto& w2 = add(Tensor({2 * d, d}), enc + ".ffn.w2");
    rng = stream();
    fill_gaussian(w2, rng, std::sqrt(1.0 / d));
    add(Tensor({d}), enc + ".ffn.b2");
  }
  auto& hw = add(Tensor({d, cfg.classes}), "head.w");
  auto rng = stream();
  fill_gaussian(hw, rng, std::sqrt(1.0 / d));
  add(Tensor({cfg.classes}), "head.b");
  return model;
}

Parameter& SstcModel::at(const std::string& tag) {
  for (Parameter& p : params) {
    if (p.tag == tag) return p;
  }
  throw ConfigError("model has no parameter tagged \"" + tag + "\"");
}

const Parameter& SstcModel::at(const std::string& tag) const {
  return const_cast<SstcModel*>(this)->at(tag);
}

void SstcModel::zero_grads() {
  for (Parameter& p : params) p.zero_grad();
}

std::string SstcModel::digest() const {
  std::vector<unsigned char> payload;
  for (const Parameter& p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data.data());
    payload.insert(payload.end(), bytes, bytes + p.value.data.size() * sizeof(double));
  }
  return sha256_hex(payload.data(), payload.size());
}

namespace {

struct Branches {
  std::vector<Var> tokens;  // per branch, [B,L,dm], post-ReLU
};

Branches mrf_branches(Tape& tape, SstcModel& model, Var x) {
  const SstcConfig& cfg = model.config;
  Branches out;
  for (std::size_t m = 0; m < cfg.branch_kernels.size(); ++m) {
    const std::string base = "branch" + std::to_string(m);
    Var conv = tape.conv2d_reflect(x, tape.param(model.at(base + ".conv.w")),
                                   tape.param(model.at(base + ".conv.b")));
    Var tok = tape.tokens_from_maps(conv);
    Var proj = tape.linear(tok, tape.param(model.at(base + ".proj.w")),
                           tape.param(model.at(base + ".proj.b")));
    out.tokens.push_back(tape.relu(proj));
  }
  return out;
}

Var check_patches(Tape& tape, const SstcModel& model, Tensor patches) {
  const SstcConfig& cfg = model.config;
  if (patches.rank() != 4 || patches.shape[1] != cfg.bands ||
      patches.shape[2] != cfg.patch_size || patches.shape[3] != cfg.patch_size) {
    throw ConfigError("patch batch shape " + patches.shape_str() +
                      " does not match the model config");
  }
  return tape.input(std::move(patches));
}

}  // namespace

Var sstc_mrf_maps(Tape& tape, SstcModel& model, Tensor patches) {
  Var x = check_patches(tape, model, std::move(patches));
  Branches br = mrf_branches(tape, model, x);
  Var cat = tape.concat_lastdim(br.tokens);
  return tape.maps_from_tokens(cat, model.config.patch_size, model.config.patch_size);
}

Var sstc_probs(Tape& tape, SstcModel& model, Tensor patches) {
  const SstcConfig& cfg = model.config;
  Var x = check_patches(tape, model, std::move(patches));
  Branches br = mrf_branches(tape, model, x);
  Var t = tape.concat_lastdim(br.tokens);  // [B,L,d]
  if (cfg.positional) {
    t = tape.add_tiled(t, tape.param(model.at("posemb")));
  }
  const int d = cfg.model_dim();
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(d) / cfg.heads);
  int ln_index = 1;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string enc = "enc" + std::to_string(layer);
    const std::string ln_a = "ln" + std::to_string(ln_index++);
    const std::string ln_b = "ln" + std::to_string(ln_index++);
    Var h = tape.layernorm(t, tape.param(model.at(ln_a + ".gamma")),
                           tape.param(model.at(ln_a + ".beta")));
    Var q = tape.linear(h, tape.param(model.at(enc + ".attn.wq")),
                        tape.param(model.at(enc + ".attn.bq")));
    Var k = tape.linear(h, tape.param(model.at(enc + ".attn.wk")),
                        tape.param(model.at(enc + ".attn.bk")));
    Var v = tape.linear(h, tape.param(model.at(enc + ".attn.wv")),
                        tape.param(model.at(enc + ".attn.bv")));
    Var scores = tape.scale(tape.bmm_nt(tape.split_heads(q, cfg.heads),
                                        tape.split_heads(k, cfg.heads)),
                            head_scale);
    Var attn = tape.softmax_lastdim(scores);
    Var ctx = tape.bmm_nn(attn, tape.split_heads(v, cfg.heads));
    Var merged = tape.merge_heads(ctx, cfg.heads);
    Var out = tape.linear(merged, tape.param(model.at(enc + ".attn.wo")),
                          tape.param(model.at(enc + ".attn.bo")));
    t = tape.add(t, out);
    Var h2 = tape.layernorm(t, tape.param(model.at(ln_b + ".gamma")),
                            tape.param(model.at(ln_b + ".beta")));
    Var f1 = tape.relu(tape.linear(h2, tape.param(model.at(enc + ".ffn.w1")),
                                   tape.param(model.at(enc + ".ffn.b1"))));
    Var f2 = tape.linear(f1, tape.param(model.at(enc + ".ffn.w2")),
                         tape.param(model.at(enc + ".ffn.b2")));
    t = tape.add(t, f2);
  }
  Var center = tape.select_token(t, cfg.center_token());
  Var logits = tape.linear(center, tape.param(model.at("head.w")),
                           tape.param(model.at("head.b")));
  return tape.softmax_lastdim(logits);
}

Tensor sstc_classify(SstcModel& model, Tensor patches) {
  Tape tape;
  Var probs = sstc_probs(tape, model, std::move(patches));
  return tape.value(probs);
}

std::vector<int> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw ConfigError("argmax_rows: expects [B,K]");
  std::vector<int> out(static_cast<std::size_t>(probs.shape[0]));
  for (std::int64_t b = 0; b < probs.shape[0]; ++b) {
    int best = 0;
    for (std::int64_t k = 1; k < probs.shape[1]; ++k) {
      if (probs.at2(b, k) > probs.at2(b, best)) best = static_cast<int>(k);
    }
    out[static_cast<std::size_t>(b)] = best;
  }
  return out;
}

Tensor smooth_labels(const std::vector<int>& labels, int classes, double eps) {
  if (classes < 1) throw ConfigError("smooth_labels: need at least one class");
  Tensor t({static_cast<std::int64_t>(labels.size()), classes});
  const double off = eps / classes;
  const double on = 1.0 - eps + off;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) {
      throw DataError("smooth_labels: label " + std::to_string(y) + " outside 0.." +
                      std::to_string(classes - 1));
    }
    for (int k = 0; k < classes; ++k) {
      t.at2(static_cast<std::int64_t>(i), k) = k == y ? on : off;
    }
  }
  return t;
}

json TrainReport::to_json() const {
  return json{{"epoch_loss", epoch_loss},
              {"epoch_accuracy", epoch_accuracy},
              {"final_digest", final_digest}};
}

namespace {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  explicit AdamState(const SstcModel& model) {
    for (const Parameter& p : model.params) {
      m.emplace_back(p.value.shape);
      v.emplace_back(p.value.shape);
    }
  }

  void step(SstcModel& model, double lr) {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      Parameter& p = model.params[i];
      if (!p.trainable) continue;
      double* mv = m[i].ptr();
      double* vv = v[i].ptr();
      double* val = p.value.ptr();
      const double* g = p.grad.ptr();
      const std::int64_t n = p.value.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        mv[j] = b1 * mv[j] + (1.0 - b1) * g[j];
        vv[j] = b2 * vv[j] + (1.0 - b2) * g[j] * g[j];
        val[j] -= lr * (mv[j] / c1) / (std::sqrt(vv[j] / c2) + eps);
      }
    }
  }
};

Tensor gather_batch(const Tensor& patches, const std::vector<std::int64_t>& order,
                    std::size_t from, std::size_t to) {
  const std::int64_t sample = patches.numel() / patches.shape[0];
  Tensor batch({static_cast<std::int64_t>(to - from), patches.shape[1], patches.shape[2],
                patches.shape[3]});
  for (std::size_t i = from; i < to; ++i) {
    std::memcpy(batch.ptr() + (i - from) * sample, patches.ptr() + order[i] * sample,
                static_cast<std::size_t>(sample) * sizeof(double));
  }
  return batch;
}

}  // namespace

TrainReport sstc_train(SstcModel& model, const Tensor& patches,
                       const std::vector<int>& labels) {
  const SstcConfig& cfg = model.config;
  cfg.validate();
  if (patches.rank() != 4 ||
      patches.shape[0] != static_cast<std::int64_t>(labels.size())) {
    throw ConfigError("train: patch batch and label count mismatch");
  }
  const std::int64_t N = patches.shape[0];
  if (N == 0) throw DataError("train: empty training set");

  AdamState adam(model);
  TrainReport report;
  std::vector<std::int64_t> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream rng(cfg.seed, kShuffleTag, static_cast<std::uint32_t>(epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      Tensor batch = gather_batch(patches, order, start, end);
      std::vector<int> batch_labels;
      batch_labels.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch_labels.push_back(labels[static_cast<std::size_t>(order[i])]);
      }
      Tape tape;
      Var probs = sstc_probs(tape, model, std::move(batch));
      Var loss = tape.smoothed_ce(probs, smooth_labels(batch_labels, cfg.classes,
                                                       cfg.smoothing));
      const double loss_value = tape.value(loss).data[0];
      if (!std::isfinite(loss_value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch offset " + std::to_string(start));
      }
      loss_sum += loss_value * static_cast<double>(end - start);
      const std::vector<int> pred = argmax_rows(tape.value(probs));
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == batch_labels[i]) ++correct;
      }
      model.zero_grads();
      tape.backward(loss);
      adam.step(model, cfg.lr);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(N));
    report.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(N));
  }
  report.final_digest = model.digest();
  return report;
}

void save_checkpoint(const SstcModel& model, const std::filesystem::path& path,
                     const json& extra) {
  json manifest;
  manifest["config"] = model.config.to_json();
  json plist = json::array();
  for (const Parameter& p : model.params) {
    plist.push_back(json{{"tag", p.tag}, {"shape", p.value.shape}});
  }
  manifest["params"] = plist;
  manifest["digest"] = model.digest();
  manifest["extra"] = extra;
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const Parameter& p : model.params) {
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
  }
  if (!out) throw DataError("short write on checkpoint " + path.string());
}

SstcModel load_checkpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw DataError("truncated checkpoint manifest: " + path.string());
  json manifest;
  try {
    manifest = json::parse(mtext);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }

  SstcModel model = SstcModel::init(SstcConfig::from_json(manifest.at("config")));
  const json& plist = manifest.at("params");
  if (plist.size() != model.params.size()) {
    throw DataError("checkpoint parameter list does not match the config");
  }
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    Parameter& p = model.params[i];
    if (plist[i].at("tag").get<std::string>() != p.tag ||
        plist[i].at("shape").get<std::vector<std::int64_t>>() != p.value.shape) {
      throw DataError("checkpoint parameter " + std::to_string(i) +
                      " does not match the config layout");
    }
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint payload at \"" + p.tag + "\"");
  }
  const std::string want = manifest.at("digest").get<std::string>();
  const std::string got = model.digest();
  if (want != got) {
    throw DataError("checkpoint digest mismatch: manifest " + want + ", payload " + got);
  }
  if (extra) *extra = manifest.value("extra", json::object());
  return model;
}

}  // namespace hypertta
