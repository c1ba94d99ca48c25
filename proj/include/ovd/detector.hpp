#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ovd/embedding.hpp"
#include "ovd/losses.hpp"

namespace ovd {

// Minimal dense row-major matrix; all detector tensors use it.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  const double& operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

struct DetectorDims {
  int num_queries = 16;  // N
  int embed_dim = 64;    // D, shared with the teacher space
  int query_dim = 32;    // D_q
  int hidden_dim = 64;   // H, feed-forward width

  bool operator==(const DetectorDims& o) const = default;
};

// All learnable tensors. The same struct carries gradients and optimizer
// moments; for_each_array fixes the canonical parameter order used by the
// optimizer, clipping, checkpoints and flatten/unflatten.
struct DetectorParams {
  Matrix queries;    // N x D_q
  Matrix prior_proj; // D_q x D, maps text embeddings into query space
  Matrix ctx_in;     // D_q x D, context input map feeding keys/values
  Matrix attn_q, attn_k, attn_v;  // D_q x D_q
  Matrix ffn_w1;     // H x D_q
  std::vector<double> ffn_b1;
  Matrix ffn_w2;     // D_q x H
  std::vector<double> ffn_b2;
  Matrix proj_w;     // D x D_q, projection head emitting e
  std::vector<double> proj_b;
  Matrix bbox_w;     // 4 x D_q
  std::vector<double> bbox_b;

  static DetectorParams shaped(const DetectorDims& d);

  template <typename Fn>
  void for_each_array(Fn&& fn) {
    fn(queries.a);
    fn(prior_proj.a);
    fn(ctx_in.a);
    fn(attn_q.a);
    fn(attn_k.a);
    fn(attn_v.a);
    fn(ffn_w1.a);
    fn(ffn_b1);
    fn(ffn_w2.a);
    fn(ffn_b2);
    fn(proj_w.a);
    fn(proj_b);
    fn(bbox_w.a);
    fn(bbox_b);
  }
  template <typename Fn>
  void for_each_array(Fn&& fn) const {
    const_cast<DetectorParams*>(this)->for_each_array(
        [&](auto& arr) { fn(const_cast<const std::vector<double>&>(arr)); });
  }

  std::size_t param_count() const;
};

struct DetectorState {
  DetectorDims dims;
  DetectorParams params;
};

std::vector<double> flatten_params(const DetectorParams& p);
void unflatten_params(DetectorParams& p, const std::vector<double>& flat);

// Per-query semantic priors: raw bank embeddings plus their projection into
// query space, as assigned by the contiguous-group tiling rule.
struct PriorAssignment {
  std::vector<int> category_per_query;  // -1 when no prior is injected
  std::vector<Embedding> raw;           // N x D
  Matrix projected;                     // N x D_q
};

// Tiles the L priors over N queries: L contiguous groups of floor(N/L), the
// remainder going to the first groups. Throws when L > N or L < 1.
PriorAssignment assign_priors_to_queries(const std::vector<int>& priors,
                                         const TextEmbeddingBank& bank,
                                         const DetectorState& state);

// Ablation hook: all-zero priors reduce the model to a prior-free detector.
PriorAssignment zero_priors(const DetectorState& state);

// Everything backward() needs: inputs and intermediate activations of one
// forward pass, plus a fingerprint of the parameters that produced it.
struct ForwardTrace {
  DetectorDims dims;
  std::uint64_t state_fingerprint = 0;
  std::vector<Embedding> context;  // M_c x D
  Matrix pos;                      // M_c x D_q fixed positional code
  std::vector<Embedding> prior_raw;
  Matrix u;         // N x D_q, queries + projected priors
  Matrix ctx_feat;  // M_c x D_q
  Matrix q_proj, k_proj, v_proj;
  Matrix attn;      // N x M_c softmax weights
  Matrix h1;        // N x D_q
  Matrix act_in;    // N x H
  Matrix act_out;   // N x H
  Matrix h2;        // N x D_q
  Matrix box_sig;   // N x 4 squashed box coordinates
};

struct ForwardResult {
  std::vector<Embedding> embeds;  // N x D region embeddings e
  std::vector<BBox> boxes;        // N boxes, coordinates in (0,1)
  ForwardTrace trace;
};

// e = proj(h), b = sigmoid(bbox(h)) with h the single-head cross-attention of
// (q + prior) over the context grid followed by a residual feed-forward block.
// Context cells receive a fixed sinusoidal positional code derived from their
// grid position. Throws std::runtime_error naming the layer on non-finite
// activations.
ForwardResult forward(const DetectorState& state, const std::vector<Embedding>& context,
                      const PriorAssignment& priors);

// Exact reverse-mode gradients for every parameter, including the queries.
// Throws std::invalid_argument when the trace does not match the state.
DetectorParams backward(const DetectorState& state, const ForwardTrace& trace,
                        const std::vector<Embedding>& grad_embeds,
                        const std::vector<std::array<double, 4>>& grad_boxes);

// Gaussian init, scale 1/sqrt(fan_in) per affine map, queries at scale 0.02,
// biases zero.
DetectorState init_state(const DetectorDims& dims, std::uint64_t seed);

std::uint64_t params_fingerprint(const DetectorParams& p);

// Versioned little-endian binary checkpoint; lossless for doubles.
void save_checkpoint(const std::string& path, const DetectorState& state);
DetectorState load_checkpoint(const std::string& path);

}  // namespace ovd
