#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmrl/rng.hpp"

namespace wmrl {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

struct NetShape {
  int vocab = 0;
  int embed_dim = 16;
  int hidden = 64;
  int window = 32;
  int turns = 8;
  int out = 0;  // vocab for the policy, 1 for the critic
  bool operator==(const NetShape&) const = default;
};

// embedding -> concat(window) -> tanh(W1 x + b1 + turn_bias[turn]) -> W2 h + b2
struct NetParams {
  NetShape shape;
  Tensor emb;        // vocab x d
  Tensor w1;         // (window*d) x hidden
  Tensor b1;         // 1 x hidden
  Tensor turn_bias;  // turns x hidden
  Tensor w2;         // hidden x out
  Tensor b2;         // 1 x out

  static NetParams zeros(const NetShape& shape);
  // Small Gaussian init; zero_output leaves W2/b2 at zero.
  static NetParams random(const NetShape& shape, Rng& rng, double scale, bool zero_output = false);

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t num_values() const;
  bool all_finite() const;
  void set_zero();
  bool operator==(const NetParams&) const = default;
};

using PolicyParams = NetParams;
using ValueParams = NetParams;

struct ContextFeatures {
  std::vector<int> window;  // exactly shape.window ids, left padded
  int turn = 0;
};

// Last `window` ids of prefix[0, end), left padded with pad.
ContextFeatures make_context(const std::vector<int>& prefix, std::size_t end, int window, int pad, int turn);

struct Activations {
  std::vector<double> hidden;
  std::vector<double> output;
};

// Throws ShapeError on a context that does not fit the parameters.
const std::vector<double>& forward(const NetParams& p, const ContextFeatures& ctx, Activations& act);
std::vector<double> policy_logits(const PolicyParams& p, const ContextFeatures& ctx);
double value_estimate(const ValueParams& v, const ContextFeatures& ctx);

// Adds scale * dL/dθ to grads given dL/d(output).
void backward(const NetParams& p, const ContextFeatures& ctx, const Activations& act, const std::vector<double>& d_out,
              double scale, NetParams& grads);

std::vector<double> log_softmax(const std::vector<double>& logits);
std::vector<double> softmax(const std::vector<double>& logits);
double entropy_from_logits(const std::vector<double>& logits);
// KL(p || q) over the full categorical distributions.
double kl_from_logits(const std::vector<double>& p_logits, const std::vector<double>& q_logits);

struct SampledToken {
  int id = 0;
  double logp = 0.0;  // under the untempered, untruncated distribution
};

// Temperature, then nucleus truncation (descending probability, ties by
// ascending id), then a draw. Throws NumericalError on non-finite logits.
SampledToken sample_token(const std::vector<double>& logits, double temperature, double top_p, Rng& rng);
SampledToken greedy_token(const std::vector<double>& logits);

struct TokenLoss {
  double surrogate = 0.0;  // min(uA, clip(u)A)
  double ratio = 1.0;
  bool clipped = false;
  double logp = 0.0;
  double value = 0.0;
  double sq_error = 0.0;  // (V - Y)^2
  double kl_ref = 0.0;    // reported only; the KL enters through the rewards
  double entropy = 0.0;
};

// Policy half of logprob_and_grads; value/sq_error are left at 0.
TokenLoss policy_token_terms(const PolicyParams& p, const ContextFeatures& ctx, int token, double advantage,
                             double old_logp, double clip_eps, const PolicyParams* reference, NetParams* grads,
                             double scale = 1.0);
// Returns V; adds scale * d(V-Y)^2/dφ into grads when non-null.
double value_token_terms(const ValueParams& v, const ContextFeatures& ctx, double target, NetParams* grads,
                         double scale = 1.0);

// One masked position. Accumulates policy_scale * d(-surrogate)/dθ into
// policy_grads and value_scale * d(V-Y)^2/dφ into value_grads when those are
// non-null. Throws NumericalError if anything non-finite shows up.
TokenLoss logprob_and_grads(const PolicyParams& p, const ValueParams& v, const ContextFeatures& ctx, int token,
                            double advantage, double old_logp, double clip_eps, double target,
                            const PolicyParams* reference, NetParams* policy_grads, NetParams* value_grads,
                            double policy_scale = 1.0, double value_scale = 1.0);

PolicyParams snapshot_reference(const PolicyParams& p);

// Binary layout: "WMRLPARM", u32 version, u32 tensor count, per tensor
// (u32 rank, u64 rows, u64 cols), then all values as little-endian f64,
// row-major, tensor by tensor.
std::string encode_params(const NetParams& p);
NetParams decode_params(const std::string& bytes);
void save_params(const std::string& path, const NetParams& p);
NetParams load_params(const std::string& path);

}  // namespace wmrl
