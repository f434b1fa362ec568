#include "spursever/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "spursever/error.hpp"
#include "spursever/keyvalue.hpp"
#include "spursever/rng.hpp"
#include "spursever/testbed.hpp"

namespace spursever {

// ---------------------------------------------------------------------------
// Architecture / parameters

std::string Architecture::descriptor() const {
  std::string out = "mlp:" + std::to_string(input_dim);
  for (auto h : hidden) out += "-" + std::to_string(h);
  out += "-" + std::to_string(classes);
  return out;
}

Architecture Architecture::parse(std::string_view descriptor) {
  constexpr std::string_view prefix = "mlp:";
  if (descriptor.substr(0, prefix.size()) != prefix)
    throw InputError("unsupported architecture '" + std::string(descriptor) + "'");
  std::vector<std::size_t> dims;
  auto rest = descriptor.substr(prefix.size());
  std::size_t start = 0;
  while (true) {
    const auto dash = rest.find('-', start);
    dims.push_back(parse_uint(rest.substr(start, dash - start), "architecture"));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (dims.size() < 2) throw InputError("architecture needs at least input and output sizes");
  Architecture a;
  a.input_dim = dims.front();
  a.classes = dims.back();
  a.hidden.assign(dims.begin() + 1, dims.end() - 1);
  a.validate();
  return a;
}

std::size_t Architecture::layer_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

std::size_t Architecture::layer_out(std::size_t layer) const {
  return layer == hidden.size() ? classes : hidden[layer];
}

void Architecture::validate() const {
  if (input_dim == 0) throw InputError("architecture input dimension must be positive");
  if (classes < 2) throw InputError("architecture needs at least 2 classes");
  for (auto h : hidden)
    if (h == 0) throw InputError("hidden layer width must be positive");
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

float& ParameterSet::at(std::size_t flat_index) {
  for (auto& t : tensors) {
    if (flat_index < t.size()) return t[flat_index];
    flat_index -= t.size();
  }
  throw InputError("parameter index out of range");
}

float ParameterSet::at(std::size_t flat_index) const {
  return const_cast<ParameterSet&>(*this).at(flat_index);
}

Network::Network(Architecture arch, ParameterSet params)
    : arch_(std::move(arch)), params_(std::move(params)) {}

Network Network::zeros(const Architecture& arch) {
  arch.validate();
  ParameterSet p;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    p.tensors.emplace_back(arch.layer_in(l) * arch.layer_out(l), 0.0f);
    p.tensors.emplace_back(arch.layer_out(l), 0.0f);
  }
  return Network(arch, std::move(p));
}

Network Network::initialize(const Architecture& arch, std::uint64_t seed) {
  Network net = zeros(arch);
  auto eng = rng::engine(seed, "init");
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(arch.layer_in(l)));
    for (float& w : net.params_.tensors[2 * l])
      w = static_cast<float>((2.0 * rng::uniform01(eng) - 1.0) * bound);
  }
  return net;
}

Network Network::from_parameters(const Architecture& arch, ParameterSet params) {
  const Network shape = zeros(arch);
  if (params.tensors.size() != shape.params_.tensors.size())
    throw InputError("parameter tensor count does not match architecture");
  for (std::size_t t = 0; t < params.tensors.size(); ++t)
    if (params.tensors[t].size() != shape.params_.tensors[t].size())
      throw InputError("parameter tensor " + std::to_string(t) + " has the wrong size");
  return Network(arch, std::move(params));
}

bool bitwise_equal(const Network& a, const Network& b) {
  if (!(a.architecture() == b.architecture())) return false;
  const auto& ta = a.parameters().tensors;
  const auto& tb = b.parameters().tensors;
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].size() != tb[i].size()) return false;
    if (std::memcmp(ta[i].data(), tb[i].data(), ta[i].size() * sizeof(float)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward / backward

void softmax(std::span<const float> logits, std::span<double> out) {
  const float mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(static_cast<double>(logits[c]) - static_cast<double>(mx));
    sum += out[c];
  }
  for (auto& v : out) v /= sum;
}

namespace {

void check_batch(const Network& net, std::span<const float> batch, std::size_t rows) {
  if (rows == 0) throw InputError("batch has no rows");
  if (batch.size() != rows * net.architecture().input_dim)
    throw InputError("batch shape mismatch: expected " + std::to_string(rows) + " x " +
                     std::to_string(net.architecture().input_dim) + " features, got " +
                     std::to_string(batch.size()) + " values");
}

void check_labels(const Network& net, std::span<const std::uint32_t> labels, std::size_t rows) {
  if (labels.size() != rows) throw InputError("label count does not match batch rows");
  for (auto y : labels)
    if (y >= net.architecture().classes)
      throw InputError("label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(net.architecture().classes) + ")");
}

/// Activations and deltas for one batch; reused across training steps.
struct Workspace {
  std::vector<std::vector<float>> act;    // act[l] = input of layer l; act.back() = logits
  std::vector<std::vector<float>> delta;  // d loss / d pre-activation of layer l
  std::vector<double> probs;

  void prepare(const Architecture& arch, std::size_t rows) {
    const std::size_t layers = arch.layer_count();
    act.resize(layers + 1);
    delta.resize(layers);
    act[0].resize(rows * arch.input_dim);
    for (std::size_t l = 0; l < layers; ++l) {
      act[l + 1].resize(rows * arch.layer_out(l));
      delta[l].resize(rows * arch.layer_out(l));
    }
    probs.resize(rows * arch.classes);
  }
};

/// Forward pass from ws.act[0]; leaves logits in ws.act.back().
void forward(const Network& net, Workspace& ws, std::size_t rows, const kernels::Ops& ops) {
  const auto& arch = net.architecture();
  const std::size_t layers = arch.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const kernels::DenseShape s{rows, arch.layer_in(l), arch.layer_out(l)};
    ops.dense_forward(ws.act[l].data(), net.weight(l).data(), net.bias(l).data(),
                      ws.act[l + 1].data(), s);
    if (l + 1 < layers)
      for (float& v : ws.act[l + 1]) v = v > 0.0f ? v : 0.0f;
  }
}

/// Softmax + mean CE; fills ws.probs and returns the mean loss.
double softmax_cross_entropy(const Architecture& arch, Workspace& ws, std::size_t rows,
                             std::span<const std::uint32_t> labels) {
  const std::size_t C = arch.classes;
  const auto& logits = ws.act.back();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const float> z(logits.data() + r * C, C);
    std::span<double> p(ws.probs.data() + r * C, C);
    const float mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p[c] = std::exp(static_cast<double>(z[c]) - mx);
      sum += p[c];
    }
    for (auto& v : p) v /= sum;
    total += std::log(sum) - (static_cast<double>(z[labels[r]]) - mx);
  }
  return total / static_cast<double>(rows);
}

/// Gradients of the mean CE (no decay) into grads, which must be shaped.
void backward(const Network& net, Workspace& ws, std::size_t rows,
              std::span<const std::uint32_t> labels, ParameterSet& grads,
              const kernels::Ops& ops) {
  const auto& arch = net.architecture();
  const std::size_t layers = arch.layer_count();
  const std::size_t C = arch.classes;
  const double inv_rows = 1.0 / static_cast<double>(rows);

  auto& top = ws.delta[layers - 1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double target = labels[r] == c ? 1.0 : 0.0;
      top[r * C + c] = static_cast<float>((ws.probs[r * C + c] - target) * inv_rows);
    }

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = arch.layer_in(l);
    const std::size_t out = arch.layer_out(l);
    const kernels::DenseShape s{rows, in, out};
    const auto& d = ws.delta[l];
    ops.dense_weight_grad(d.data(), ws.act[l].data(), grads.tensors[2 * l].data(), s);
    auto& gb = grads.tensors[2 * l + 1];
    for (std::size_t o = 0; o < out; ++o) {
      float acc = 0.0f;
      for (std::size_t r = 0; r < rows; ++r) acc += d[r * out + o];
      gb[o] = acc;
    }
    if (l > 0) {
      auto& prev = ws.delta[l - 1];
      ops.dense_input_grad(d.data(), net.weight(l).data(), prev.data(), s);
      const auto& a = ws.act[l];
      for (std::size_t k = 0; k < prev.size(); ++k)
        if (!(a[k] > 0.0f)) prev[k] = 0.0f;
    }
  }
}

ParameterSet shaped_like(const ParameterSet& p) {
  ParameterSet g;
  g.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) g.tensors.emplace_back(t.size(), 0.0f);
  return g;
}

double squared_norm(const ParameterSet& p) {
  double s = 0.0;
  for (const auto& t : p.tensors)
    for (float v : t) s += static_cast<double>(v) * v;
  return s;
}

constexpr std::size_t kChunkRows = 256;

}  // namespace

ProbabilityMatrix forward_probs(const Network& net, std::span<const float> batch,
                                std::size_t rows, kernels::Mode mode) {
  check_batch(net, batch, rows);
  const auto& arch = net.architecture();
  const auto& ops = kernels::ops(mode);
  ProbabilityMatrix out{rows, arch.classes, std::vector<double>(rows * arch.classes)};
  Workspace ws;
  for (std::size_t start = 0; start < rows; start += kChunkRows) {
    const std::size_t n = std::min(kChunkRows, rows - start);
    ws.prepare(arch, n);
    std::copy_n(batch.begin() + start * arch.input_dim, n * arch.input_dim, ws.act[0].begin());
    forward(net, ws, n, ops);
    for (std::size_t r = 0; r < n; ++r)
      softmax(std::span<const float>(ws.act.back().data() + r * arch.classes, arch.classes),
              std::span<double>(out.values.data() + (start + r) * arch.classes, arch.classes));
  }
  return out;
}

std::vector<std::uint32_t> predict(const Network& net, std::span<const float> features,
                                   std::size_t rows, kernels::Mode mode) {
  std::vector<std::uint32_t> pred(rows);
  if (rows == 0) return pred;
  check_batch(net, features, rows);
  const auto& arch = net.architecture();
  const auto& ops = kernels::ops(mode);
  Workspace ws;
  for (std::size_t start = 0; start < rows; start += kChunkRows) {
    const std::size_t n = std::min(kChunkRows, rows - start);
    ws.prepare(arch, n);
    std::copy_n(features.begin() + start * arch.input_dim, n * arch.input_dim, ws.act[0].begin());
    forward(net, ws, n, ops);
    for (std::size_t r = 0; r < n; ++r) {
      const float* z = ws.act.back().data() + r * arch.classes;
      pred[start + r] = static_cast<std::uint32_t>(std::max_element(z, z + arch.classes) - z);
    }
  }
  return pred;
}

LossAndGrads loss_and_grads(const Network& net, std::span<const float> batch, std::size_t rows,
                            std::span<const std::uint32_t> labels, double weight_decay,
                            kernels::Mode mode) {
  check_batch(net, batch, rows);
  check_labels(net, labels, rows);
  const auto& arch = net.architecture();
  const auto& ops = kernels::ops(mode);
  Workspace ws;
  ws.prepare(arch, rows);
  std::copy(batch.begin(), batch.end(), ws.act[0].begin());
  forward(net, ws, rows, ops);
  LossAndGrads out;
  out.loss = softmax_cross_entropy(arch, ws, rows, labels);
  out.grads = shaped_like(net.parameters());
  backward(net, ws, rows, labels, out.grads, ops);
  out.objective = out.loss + 0.5 * weight_decay * squared_norm(net.parameters());
  if (weight_decay != 0.0) {
    const auto& params = net.parameters().tensors;
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i)
        out.grads.tensors[t][i] += static_cast<float>(weight_decay * params[t][i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

double objective_double(const Network& net, std::span<const float> batch, std::size_t rows,
                        std::span<const std::uint32_t> labels, double weight_decay,
                        std::size_t perturbed, double delta, std::uint64_t* relu_pattern_hash) {
  check_batch(net, batch, rows);
  check_labels(net, labels, rows);
  const auto& arch = net.architecture();
  const auto& tensors = net.parameters().tensors;

  // Locate the perturbed coordinate once.
  std::size_t pt = SIZE_MAX, pi = 0;
  if (perturbed != SIZE_MAX) {
    std::size_t idx = perturbed;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (idx < tensors[t].size()) {
        pt = t;
        pi = idx;
        break;
      }
      idx -= tensors[t].size();
    }
    if (pt == SIZE_MAX) throw InputError("perturbed coordinate out of range");
  }
  auto param = [&](std::size_t t, std::size_t i) {
    const double v = tensors[t][i];
    return (t == pt && i == pi) ? v + delta : v;
  };

  std::uint64_t hash = 0xCBF29CE484222325ULL;
  double total = 0.0;
  std::vector<double> cur, next;
  for (std::size_t r = 0; r < rows; ++r) {
    cur.assign(batch.begin() + r * arch.input_dim, batch.begin() + (r + 1) * arch.input_dim);
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
      const std::size_t in = arch.layer_in(l), out = arch.layer_out(l);
      next.assign(out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = param(2 * l + 1, o);
        for (std::size_t i = 0; i < in; ++i) acc += param(2 * l, o * in + i) * cur[i];
        if (l + 1 < arch.layer_count()) {
          const bool on = acc > 0.0;
          hash = (hash ^ static_cast<std::uint64_t>(on)) * 0x100000001B3ULL;
          acc = on ? acc : 0.0;
        }
        next[o] = acc;
      }
      cur.swap(next);
    }
    const double mx = *std::max_element(cur.begin(), cur.end());
    double sum = 0.0;
    for (double z : cur) sum += std::exp(z - mx);
    total += std::log(sum) - (cur[labels[r]] - mx);
  }
  double sq = 0.0;
  for (std::size_t t = 0; t < tensors.size(); ++t)
    for (std::size_t i = 0; i < tensors[t].size(); ++i) {
      const double v = param(t, i);
      sq += v * v;
    }
  if (relu_pattern_hash) *relu_pattern_hash = hash;
  return total / static_cast<double>(rows) + 0.5 * weight_decay * sq;
}

GradCheckResult compare_gradients(const Network& net, std::span<const float> batch,
                                  std::size_t rows, std::span<const std::uint32_t> labels,
                                  const ParameterSet& analytic, const GradCheckOptions& opt) {
  if (!(opt.step > 0.0)) throw InputError("finite-difference step must be positive");
  check_batch(net, batch, rows);
  check_labels(net, labels, rows);
  const std::size_t total = net.parameter_count();
  if (analytic.count() != total) throw InputError("analytic gradient has the wrong size");

  const std::size_t wanted = std::min(total, std::max<std::size_t>(opt.coordinates, 50));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  if (wanted < total) {
    auto eng = rng::engine(opt.seed, "gradcheck");
    rng::shuffle(order.begin(), order.end(), eng);
  }

  GradCheckResult res;
  // Relative error with a small absolute floor so coordinates whose true
  // gradient is ~0 are judged on absolute agreement.
  constexpr double kFloor = 1e-3;
  for (std::size_t k = 0; k < order.size() && res.checked < wanted; ++k) {
    const std::size_t idx = order[k];
    std::uint64_t h_plus = 0, h_minus = 0;
    const double fp = objective_double(net, batch, rows, labels, opt.weight_decay, idx, opt.step, &h_plus);
    const double fm = objective_double(net, batch, rows, labels, opt.weight_decay, idx, -opt.step, &h_minus);
    if (h_plus != h_minus) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * opt.step);
    const double a = analytic.at(idx);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
    res.max_relative_error = std::max(res.max_relative_error, rel);
    ++res.checked;
  }
  res.pass = res.checked > 0 && res.max_relative_error < opt.tolerance;
  return res;
}

GradCheckResult grad_check(const Network& net, std::span<const float> batch, std::size_t rows,
                           std::span<const std::uint32_t> labels, const GradCheckOptions& opt) {
  const auto lg = loss_and_grads(net, batch, rows, labels, opt.weight_decay, kernels::Mode::reference);
  return compare_gradients(net, batch, rows, labels, lg.grads, opt);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (batch_size == 0) throw InputError("batch_size must be positive");
  if (!(lr_initial > 0.0)) throw InputError("lr_initial must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw InputError("lr_factor must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InputError("weight_decay must be non-negative");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] >= epochs) throw InputError("lr milestone beyond the last epoch");
    if (i && lr_milestones[i] <= lr_milestones[i - 1])
      throw InputError("lr milestones must be strictly increasing");
  }
  // epochs == 0 is the degenerate "return the initial net" run.
  if (epochs > 0 && difficulty_epoch >= epochs)
    throw InputError("difficulty_epoch must be smaller than epochs");
  if (epochs == 0 && difficulty_epoch != 0)
    throw InputError("difficulty_epoch must be 0 when epochs is 0");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  double lr = lr_initial;
  for (auto m : lr_milestones)
    if (epoch >= m) lr *= lr_factor;
  return lr;
}

TrainResult train(Network net, std::span<const float> features,
                  std::span<const std::uint32_t> labels, const TrainConfig& cfg,
                  const TrainOptions& opt) {
  cfg.validate();
  const auto& arch = net.architecture();
  const std::size_t n = labels.size();
  if (n == 0) throw InputError("cannot train on an empty dataset");
  if (features.size() != n * arch.input_dim)
    throw InputError("feature matrix does not match the network input dimension");
  check_labels(net, labels, n);

  const auto& ops = kernels::ops(opt.mode);
  TrainResult result;
  if (cfg.difficulty_epoch == 0) result.snapshot = net;
  result.snapshot_epoch = cfg.difficulty_epoch;

  ParameterSet grads = shaped_like(net.parameters());
  ParameterSet velocity = shaped_like(net.parameters());
  Workspace ws;
  std::vector<std::uint32_t> batch_labels;
  std::vector<std::size_t> perm(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (opt.stop_after_snapshot && epoch >= cfg.difficulty_epoch) break;
    const float lr = static_cast<float>(cfg.lr_at(epoch));
    std::iota(perm.begin(), perm.end(), 0);
    auto eng = rng::engine(cfg.seed, "shuffle", epoch);
    rng::shuffle(perm.begin(), perm.end(), eng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, n - start);
      ws.prepare(arch, rows);
      batch_labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = perm[start + r];
        std::copy_n(features.begin() + src * arch.input_dim, arch.input_dim,
                    ws.act[0].begin() + r * arch.input_dim);
        batch_labels[r] = labels[src];
      }
      forward(net, ws, rows, ops);
      epoch_loss += softmax_cross_entropy(arch, ws, rows, batch_labels) * static_cast<double>(rows);
      backward(net, ws, rows, batch_labels, grads, ops);
      auto& params = net.parameters().tensors;
      for (std::size_t t = 0; t < params.size(); ++t)
        ops.sgd_step(params[t].data(), velocity.tensors[t].data(), grads.tensors[t].data(),
                     params[t].size(), lr, static_cast<float>(cfg.momentum),
                     static_cast<float>(cfg.weight_decay));
    }
    epoch_loss /= static_cast<double>(n);
    result.epoch_loss.push_back(epoch_loss);
    result.epochs_run = epoch + 1;
    if (epoch + 1 == cfg.difficulty_epoch) result.snapshot = net;
    if (opt.on_epoch) opt.on_epoch(EpochRecord{epoch, epoch_loss, lr}, net);
  }
  result.final_net = std::move(net);
  return result;
}

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg,
                  const TrainOptions& opt) {
  if (data.size() == 0) throw InputError("cannot train on an empty dataset");
  const auto features = data.normalized_features();
  const auto labels = data.labels();
  return train(std::move(net), features, labels, cfg, opt);
}

}  // namespace spursever
