#include "wmrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "wmrl/errors.hpp"

namespace wmrl {

NetParams NetParams::zeros(const NetShape& s) {
  if (s.vocab <= 0 || s.embed_dim <= 0 || s.hidden <= 0 || s.window <= 0 || s.turns <= 0 || s.out <= 0)
    throw ShapeError("network dimensions must be positive");
  NetParams p;
  p.shape = s;
  p.emb = Tensor(s.vocab, s.embed_dim);
  p.w1 = Tensor(s.window * s.embed_dim, s.hidden);
  p.b1 = Tensor(1, s.hidden);
  p.turn_bias = Tensor(s.turns, s.hidden);
  p.w2 = Tensor(s.hidden, s.out);
  p.b2 = Tensor(1, s.out);
  return p;
}

NetParams NetParams::random(const NetShape& s, Rng& rng, double scale, bool zero_output) {
  NetParams p = zeros(s);
  for (double& x : p.emb.data) x = rng.normal();
  const double s1 = scale / std::sqrt(static_cast<double>(s.window * s.embed_dim));
  for (double& x : p.w1.data) x = s1 * rng.normal();
  if (!zero_output) {
    const double s2 = scale / std::sqrt(static_cast<double>(s.hidden));
    for (double& x : p.w2.data) x = s2 * rng.normal();
  }
  return p;
}

std::vector<Tensor*> NetParams::tensors() { return {&emb, &w1, &b1, &turn_bias, &w2, &b2}; }
std::vector<const Tensor*> NetParams::tensors() const { return {&emb, &w1, &b1, &turn_bias, &w2, &b2}; }

std::size_t NetParams::num_values() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

bool NetParams::all_finite() const {
  for (const Tensor* t : tensors())
    for (double x : t->data)
      if (!std::isfinite(x)) return false;
  return true;
}

void NetParams::set_zero() {
  for (Tensor* t : tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
}

ContextFeatures make_context(const std::vector<int>& prefix, std::size_t end, int window, int pad, int turn) {
  ContextFeatures c;
  c.turn = turn;
  c.window.assign(static_cast<std::size_t>(window), pad);
  const std::size_t n = std::min<std::size_t>(end, static_cast<std::size_t>(window));
  std::copy(prefix.begin() + static_cast<std::ptrdiff_t>(end - n), prefix.begin() + static_cast<std::ptrdiff_t>(end),
            c.window.end() - static_cast<std::ptrdiff_t>(n));
  return c;
}

namespace {

void check_context(const NetParams& p, const ContextFeatures& ctx) {
  if (static_cast<int>(ctx.window.size()) != p.shape.window)
    throw ShapeError("context length " + std::to_string(ctx.window.size()) + " != window " +
                     std::to_string(p.shape.window));
  for (int id : ctx.window)
    if (id < 0 || id >= p.shape.vocab) throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
  if (ctx.turn < 0) throw ShapeError("negative turn index");
}

int turn_slot(const NetParams& p, int turn) { return std::min(turn, p.shape.turns - 1); }

}  // namespace

const std::vector<double>& forward(const NetParams& p, const ContextFeatures& ctx, Activations& act) {
  check_context(p, ctx);
  const int d = p.shape.embed_dim;
  const int h = p.shape.hidden;
  const int out = p.shape.out;
  act.hidden.assign(p.b1.data.begin(), p.b1.data.end());
  const double* tb = &p.turn_bias.data[static_cast<std::size_t>(turn_slot(p, ctx.turn)) * h];
  for (int j = 0; j < h; ++j) act.hidden[j] += tb[j];
  for (int k = 0; k < p.shape.window; ++k) {
    const double* e = &p.emb.data[static_cast<std::size_t>(ctx.window[k]) * d];
    for (int a = 0; a < d; ++a) {
      const double x = e[a];
      if (x == 0.0) continue;
      const double* row = &p.w1.data[static_cast<std::size_t>(k * d + a) * h];
      for (int j = 0; j < h; ++j) act.hidden[j] += x * row[j];
    }
  }
  for (double& x : act.hidden) x = std::tanh(x);
  act.output.assign(p.b2.data.begin(), p.b2.data.end());
  for (int j = 0; j < h; ++j) {
    const double hj = act.hidden[j];
    const double* row = &p.w2.data[static_cast<std::size_t>(j) * out];
    for (int o = 0; o < out; ++o) act.output[o] += hj * row[o];
  }
  return act.output;
}

std::vector<double> policy_logits(const PolicyParams& p, const ContextFeatures& ctx) {
  Activations a;
  forward(p, ctx, a);
  return std::move(a.output);
}

double value_estimate(const ValueParams& v, const ContextFeatures& ctx) {
  Activations a;
  return forward(v, ctx, a).at(0);
}

void backward(const NetParams& p, const ContextFeatures& ctx, const Activations& act, const std::vector<double>& d_out,
              double scale, NetParams& g) {
  const int d = p.shape.embed_dim;
  const int h = p.shape.hidden;
  const int out = p.shape.out;
  std::vector<double> dpre(static_cast<std::size_t>(h), 0.0);
  for (int o = 0; o < out; ++o) g.b2.data[o] += scale * d_out[o];
  for (int j = 0; j < h; ++j) {
    const double hj = act.hidden[j];
    double* grow = &g.w2.data[static_cast<std::size_t>(j) * out];
    const double* prow = &p.w2.data[static_cast<std::size_t>(j) * out];
    double dh = 0.0;
    for (int o = 0; o < out; ++o) {
      grow[o] += scale * hj * d_out[o];
      dh += prow[o] * d_out[o];
    }
    dpre[j] = dh * (1.0 - hj * hj);
  }
  double* gtb = &g.turn_bias.data[static_cast<std::size_t>(turn_slot(p, ctx.turn)) * h];
  for (int j = 0; j < h; ++j) {
    g.b1.data[j] += scale * dpre[j];
    gtb[j] += scale * dpre[j];
  }
  for (int k = 0; k < p.shape.window; ++k) {
    const std::size_t tok = static_cast<std::size_t>(ctx.window[k]);
    const double* e = &p.emb.data[tok * d];
    double* ge = &g.emb.data[tok * d];
    for (int a = 0; a < d; ++a) {
      const std::size_t r = static_cast<std::size_t>(k * d + a) * h;
      const double* prow = &p.w1.data[r];
      double* grow = &g.w1.data[r];
      double dx = 0.0;
      const double x = e[a];
      for (int j = 0; j < h; ++j) {
        grow[j] += scale * x * dpre[j];
        dx += prow[j] * dpre[j];
      }
      ge[a] += scale * dx;
    }
  }
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  const double lz = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

double entropy_from_logits(const std::vector<double>& logits) {
  const auto lp = log_softmax(logits);
  double h = 0.0;
  for (double l : lp) h -= std::exp(l) * l;
  return h;
}

double kl_from_logits(const std::vector<double>& p_logits, const std::vector<double>& q_logits) {
  if (p_logits.size() != q_logits.size()) throw ShapeError("KL over distributions of different sizes");
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(kl, 0.0);
}

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

SampledToken sample_token(const std::vector<double>& logits, double temperature, double top_p, Rng& rng) {
  check_finite(logits, "logits");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  std::vector<double> scaled(logits);
  for (double& x : scaled) x /= temperature;
  const auto probs = softmax(scaled);

  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  std::size_t keep = 0;
  double mass = 0.0;
  while (keep < order.size()) {
    mass += probs[order[keep++]];
    if (mass >= top_p) break;
  }
  double u = rng.uniform01() * mass;
  int chosen = order[keep - 1];
  for (std::size_t k = 0; k < keep; ++k) {
    u -= probs[order[k]];
    if (u < 0.0) {
      chosen = order[k];
      break;
    }
  }
  return {chosen, log_softmax(logits)[static_cast<std::size_t>(chosen)]};
}

SampledToken greedy_token(const std::vector<double>& logits) {
  check_finite(logits, "logits");
  const auto it = std::max_element(logits.begin(), logits.end());
  const int id = static_cast<int>(it - logits.begin());
  return {id, log_softmax(logits)[static_cast<std::size_t>(id)]};
}

TokenLoss policy_token_terms(const PolicyParams& p, const ContextFeatures& ctx, int token, double advantage,
                             double old_logp, double clip_eps, const PolicyParams* reference, NetParams* grads,
                             double scale) {
  TokenLoss r;
  Activations pa;
  const auto& logits = forward(p, ctx, pa);
  check_finite(logits, "policy logits");
  if (token < 0 || token >= p.shape.out) throw ShapeError("token outside policy output");
  const auto lp = log_softmax(logits);
  r.logp = lp[static_cast<std::size_t>(token)];
  r.ratio = std::exp(r.logp - old_logp);
  const double clipped = std::clamp(r.ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  const double unclipped_obj = r.ratio * advantage;
  const double clipped_obj = clipped * advantage;
  r.clipped = clipped_obj < unclipped_obj;
  r.surrogate = std::min(unclipped_obj, clipped_obj);
  for (double l : lp) r.entropy -= std::exp(l) * l;
  if (reference) r.kl_ref = kl_from_logits(logits, policy_logits(*reference, ctx));
  if (!std::isfinite(r.surrogate)) throw NumericalError("non-finite surrogate");

  if (grads && !r.clipped && advantage != 0.0) {
    // d(-uA)/dlogits = -uA (onehot - softmax)
    std::vector<double> d(lp.size());
    const double coef = -r.ratio * advantage;
    for (std::size_t i = 0; i < lp.size(); ++i) d[i] = -coef * std::exp(lp[i]);
    d[static_cast<std::size_t>(token)] += coef;
    backward(p, ctx, pa, d, scale, *grads);
  }
  return r;
}

double value_token_terms(const ValueParams& v, const ContextFeatures& ctx, double target, NetParams* grads,
                         double scale) {
  Activations va;
  const double value = forward(v, ctx, va).at(0);
  if (!std::isfinite(value)) throw NumericalError("non-finite value estimate");
  if (grads) backward(v, ctx, va, {2.0 * (value - target)}, scale, *grads);
  return value;
}

TokenLoss logprob_and_grads(const PolicyParams& p, const ValueParams& v, const ContextFeatures& ctx, int token,
                            double advantage, double old_logp, double clip_eps, double target,
                            const PolicyParams* reference, NetParams* policy_grads, NetParams* value_grads,
                            double policy_scale, double value_scale) {
  TokenLoss r = policy_token_terms(p, ctx, token, advantage, old_logp, clip_eps, reference, policy_grads, policy_scale);
  r.value = value_token_terms(v, ctx, target, value_grads, value_scale);
  r.sq_error = (r.value - target) * (r.value - target);
  return r;
}

PolicyParams snapshot_reference(const PolicyParams& p) { return p; }

namespace {

constexpr char kMagic[8] = {'W', 'M', 'R', 'L', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("truncated parameter file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_params(const NetParams& p) {
  std::string out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kVersion);
  const auto ts = p.tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ts.size()));
  for (const Tensor* t : ts) {
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t->rows));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t->cols));
  }
  for (const Tensor* t : ts)
    for (double x : t->data) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      put<std::uint64_t>(out, bits);
    }
  return out;
}

NetParams decode_params(const std::string& in) {
  if (in.size() < 16 || in.compare(0, 8, std::string(kMagic, 8)) != 0) throw FormatError("not a parameter file");
  std::size_t pos = 8;
  if (get<std::uint32_t>(in, pos) != kVersion) throw FormatError("unsupported parameter file version");
  if (get<std::uint32_t>(in, pos) != 6) throw FormatError("unexpected tensor count");
  std::vector<std::pair<int, int>> dims;
  for (int i = 0; i < 6; ++i) {
    if (get<std::uint32_t>(in, pos) != 2) throw FormatError("tensor rank must be 2");
    const auto r = get<std::uint64_t>(in, pos);
    const auto c = get<std::uint64_t>(in, pos);
    dims.emplace_back(static_cast<int>(r), static_cast<int>(c));
  }
  NetShape s;
  s.vocab = dims[0].first;
  s.embed_dim = dims[0].second;
  s.hidden = dims[1].second;
  s.window = s.embed_dim ? dims[1].first / s.embed_dim : 0;
  s.turns = dims[3].first;
  s.out = dims[4].second;
  NetParams p = NetParams::zeros(s);
  auto ts = p.tensors();
  for (int i = 0; i < 6; ++i)
    if (ts[i]->rows != dims[i].first || ts[i]->cols != dims[i].second)
      throw FormatError("inconsistent tensor shapes in parameter file");
  for (Tensor* t : ts)
    for (double& x : t->data) {
      const auto bits = get<std::uint64_t>(in, pos);
      std::memcpy(&x, &bits, sizeof x);
    }
  if (pos != in.size()) throw FormatError("trailing bytes in parameter file");
  return p;
}

void save_params(const std::string& path, const NetParams& p) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::string bytes = encode_params(p);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

NetParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_params(ss.str());
}

}  // namespace wmrl
