#include "ovd/detector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ovd/rng.hpp"

namespace ovd {

namespace {

constexpr double kPosScale = 0.2;
constexpr double kTwoPi = 6.283185307179586476925287;

double silu(double x) { return x * logistic(x); }

double silu_deriv(double x) {
  const double s = logistic(x);
  return s * (1.0 + x * (1.0 - s));
}

// y += W x
void matvec_add(const Matrix& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) {
    double s = 0.0;
    const double* row = &w.a[static_cast<std::size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) s += row[c] * x[c];
    y[r] += s;
  }
}

// y += W^T x
void matvec_transpose_add(const Matrix& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) {
    const double* row = &w.a[static_cast<std::size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) y[c] += row[c] * x[r];
  }
}

// G += u v^T
void outer_add(Matrix& g, const double* u, const double* v) {
  for (int r = 0; r < g.rows; ++r) {
    double* row = &g.a[static_cast<std::size_t>(r) * g.cols];
    for (int c = 0; c < g.cols; ++c) row[c] += u[r] * v[c];
  }
}

void check_finite(const Matrix& m, const char* layer) {
  for (double x : m.a) {
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("forward: non-finite activation in ") + layer);
  }
}

int grid_side(std::size_t cells) {
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (static_cast<std::size_t>(g) * g != cells)
    throw std::invalid_argument("forward: context size is not a square grid");
  return g;
}

// Fixed sinusoidal code of a cell's center, cycling sin/cos over x and y with
// an increasing frequency ladder.
Matrix positional_code(int grid, int query_dim) {
  Matrix pos(grid * grid, query_dim);
  for (int row = 0; row < grid; ++row) {
    for (int col = 0; col < grid; ++col) {
      const int m = row * grid + col;
      const double x = (col + 0.5) / grid;
      const double y = (row + 0.5) / grid;
      for (int i = 0; i < query_dim; ++i) {
        const double freq = static_cast<double>(i / 4 + 1);
        const double phase = (i % 2 == 0) ? 0.0 : kTwoPi / 4.0;  // sin / cos
        const double coord = (i % 4 < 2) ? x : y;
        pos(m, i) = kPosScale * std::sin(kTwoPi * freq * coord + phase);
      }
    }
  }
  return pos;
}

}  // namespace

DetectorParams DetectorParams::shaped(const DetectorDims& d) {
  DetectorParams p;
  p.queries = Matrix(d.num_queries, d.query_dim);
  p.prior_proj = Matrix(d.query_dim, d.embed_dim);
  p.ctx_in = Matrix(d.query_dim, d.embed_dim);
  p.attn_q = Matrix(d.query_dim, d.query_dim);
  p.attn_k = Matrix(d.query_dim, d.query_dim);
  p.attn_v = Matrix(d.query_dim, d.query_dim);
  p.ffn_w1 = Matrix(d.hidden_dim, d.query_dim);
  p.ffn_b1.assign(d.hidden_dim, 0.0);
  p.ffn_w2 = Matrix(d.query_dim, d.hidden_dim);
  p.ffn_b2.assign(d.query_dim, 0.0);
  p.proj_w = Matrix(d.embed_dim, d.query_dim);
  p.proj_b.assign(d.embed_dim, 0.0);
  p.bbox_w = Matrix(4, d.query_dim);
  p.bbox_b.assign(4, 0.0);
  return p;
}

std::size_t DetectorParams::param_count() const {
  std::size_t n = 0;
  for_each_array([&](const std::vector<double>& arr) { n += arr.size(); });
  return n;
}

std::vector<double> flatten_params(const DetectorParams& p) {
  std::vector<double> flat;
  flat.reserve(p.param_count());
  p.for_each_array([&](const std::vector<double>& arr) {
    flat.insert(flat.end(), arr.begin(), arr.end());
  });
  return flat;
}

void unflatten_params(DetectorParams& p, const std::vector<double>& flat) {
  std::size_t off = 0;
  p.for_each_array([&](std::vector<double>& arr) {
    if (off + arr.size() > flat.size())
      throw std::invalid_argument("unflatten_params: size mismatch");
    std::copy(flat.begin() + off, flat.begin() + off + arr.size(), arr.begin());
    off += arr.size();
  });
  if (off != flat.size()) throw std::invalid_argument("unflatten_params: size mismatch");
}

PriorAssignment assign_priors_to_queries(const std::vector<int>& priors,
                                         const TextEmbeddingBank& bank,
                                         const DetectorState& state) {
  const int n = state.dims.num_queries;
  const int l = static_cast<int>(priors.size());
  if (l < 1) throw std::invalid_argument("assign_priors_to_queries: need at least one prior");
  if (l > n) throw std::invalid_argument("assign_priors_to_queries: more priors than queries");

  PriorAssignment out;
  out.category_per_query.resize(n);
  out.raw.resize(n);
  out.projected = Matrix(n, state.dims.query_dim);

  const int base = n / l;
  const int remainder = n % l;
  int q = 0;
  for (int g = 0; g < l; ++g) {
    const int size = base + (g < remainder ? 1 : 0);
    const Embedding& t = bank.entries.at(priors[g]);
    for (int k = 0; k < size; ++k, ++q) {
      out.category_per_query[q] = priors[g];
      out.raw[q] = t;
      matvec_add(state.params.prior_proj, t.data(), &out.projected(q, 0));
    }
  }
  return out;
}

PriorAssignment zero_priors(const DetectorState& state) {
  PriorAssignment out;
  out.category_per_query.assign(state.dims.num_queries, -1);
  out.raw.assign(state.dims.num_queries, Embedding(state.dims.embed_dim, 0.0));
  out.projected = Matrix(state.dims.num_queries, state.dims.query_dim);
  return out;
}

ForwardResult forward(const DetectorState& state, const std::vector<Embedding>& context,
                      const PriorAssignment& priors) {
  const auto& d = state.dims;
  const auto& p = state.params;
  const int n = d.num_queries;
  const int cells = static_cast<int>(context.size());
  const int g = grid_side(context.size());
  if (static_cast<int>(priors.raw.size()) != n || priors.projected.rows != n)
    throw std::invalid_argument("forward: prior assignment does not match query count");
  for (const auto& z : context) {
    if (static_cast<int>(z.size()) != d.embed_dim)
      throw std::invalid_argument("forward: context dimension mismatch");
  }

  ForwardTrace tr;
  tr.dims = d;
  tr.state_fingerprint = params_fingerprint(p);
  tr.context = context;
  tr.pos = positional_code(g, d.query_dim);
  tr.prior_raw = priors.raw;

  // language queries: u = q + projected prior
  tr.u = Matrix(n, d.query_dim);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d.query_dim; ++c) tr.u(i, c) = p.queries(i, c) + priors.projected(i, c);

  // context features with positional code
  tr.ctx_feat = Matrix(cells, d.query_dim);
  for (int m = 0; m < cells; ++m) {
    matvec_add(p.ctx_in, context[m].data(), &tr.ctx_feat(m, 0));
    for (int c = 0; c < d.query_dim; ++c) tr.ctx_feat(m, c) += tr.pos(m, c);
  }

  tr.q_proj = Matrix(n, d.query_dim);
  for (int i = 0; i < n; ++i) matvec_add(p.attn_q, &tr.u(i, 0), &tr.q_proj(i, 0));
  tr.k_proj = Matrix(cells, d.query_dim);
  tr.v_proj = Matrix(cells, d.query_dim);
  for (int m = 0; m < cells; ++m) {
    matvec_add(p.attn_k, &tr.ctx_feat(m, 0), &tr.k_proj(m, 0));
    matvec_add(p.attn_v, &tr.ctx_feat(m, 0), &tr.v_proj(m, 0));
  }

  // scaled dot-product attention, softmax over cells
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.query_dim));
  tr.attn = Matrix(n, cells);
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int m = 0; m < cells; ++m) {
      double s = 0.0;
      for (int c = 0; c < d.query_dim; ++c) s += tr.q_proj(i, c) * tr.k_proj(m, c);
      tr.attn(i, m) = s * scale;
      mx = std::max(mx, tr.attn(i, m));
    }
    double denom = 0.0;
    for (int m = 0; m < cells; ++m) {
      tr.attn(i, m) = std::exp(tr.attn(i, m) - mx);
      denom += tr.attn(i, m);
    }
    for (int m = 0; m < cells; ++m) tr.attn(i, m) /= denom;
  }
  check_finite(tr.attn, "attention");

  // residual attention output, then residual feed-forward
  tr.h1 = Matrix(n, d.query_dim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d.query_dim; ++c) {
      double s = 0.0;
      for (int m = 0; m < cells; ++m) s += tr.attn(i, m) * tr.v_proj(m, c);
      tr.h1(i, c) = tr.u(i, c) + s;
    }
  }

  tr.act_in = Matrix(n, d.hidden_dim);
  tr.act_out = Matrix(n, d.hidden_dim);
  tr.h2 = Matrix(n, d.query_dim);
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < d.hidden_dim; ++h) tr.act_in(i, h) = p.ffn_b1[h];
    matvec_add(p.ffn_w1, &tr.h1(i, 0), &tr.act_in(i, 0));
    for (int h = 0; h < d.hidden_dim; ++h) tr.act_out(i, h) = silu(tr.act_in(i, h));
    for (int c = 0; c < d.query_dim; ++c) tr.h2(i, c) = tr.h1(i, c) + p.ffn_b2[c];
    matvec_add(p.ffn_w2, &tr.act_out(i, 0), &tr.h2(i, 0));
  }
  check_finite(tr.h2, "feed-forward");

  ForwardResult out;
  out.embeds.assign(n, Embedding(d.embed_dim, 0.0));
  out.boxes.resize(n);
  tr.box_sig = Matrix(n, 4);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d.embed_dim; ++c) out.embeds[i][c] = p.proj_b[c];
    matvec_add(p.proj_w, &tr.h2(i, 0), out.embeds[i].data());
    for (double x : out.embeds[i]) {
      if (!std::isfinite(x)) throw std::runtime_error("forward: non-finite activation in projection head");
    }

    double blog[4] = {p.bbox_b[0], p.bbox_b[1], p.bbox_b[2], p.bbox_b[3]};
    matvec_add(p.bbox_w, &tr.h2(i, 0), blog);
    for (int c = 0; c < 4; ++c) tr.box_sig(i, c) = logistic(blog[c]);
    out.boxes[i] = BBox{tr.box_sig(i, 0), tr.box_sig(i, 1), tr.box_sig(i, 2), tr.box_sig(i, 3)};
  }
  check_finite(tr.box_sig, "box head");

  out.trace = std::move(tr);
  return out;
}

DetectorParams backward(const DetectorState& state, const ForwardTrace& trace,
                        const std::vector<Embedding>& grad_embeds,
                        const std::vector<std::array<double, 4>>& grad_boxes) {
  const auto& d = state.dims;
  const auto& p = state.params;
  if (!(trace.dims == d) || trace.state_fingerprint != params_fingerprint(p))
    throw std::invalid_argument("backward: trace does not match this detector state");
  const int n = d.num_queries;
  const int cells = static_cast<int>(trace.context.size());
  if (static_cast<int>(grad_embeds.size()) != n || static_cast<int>(grad_boxes.size()) != n)
    throw std::invalid_argument("backward: upstream gradient count mismatch");

  DetectorParams g = DetectorParams::shaped(d);
  Matrix dh2(n, d.query_dim);

  // heads
  for (int i = 0; i < n; ++i) {
    double dblog[4];
    for (int c = 0; c < 4; ++c) {
      const double s = trace.box_sig(i, c);
      dblog[c] = grad_boxes[i][c] * s * (1.0 - s);
    }
    outer_add(g.bbox_w, dblog, &trace.h2(i, 0));
    for (int c = 0; c < 4; ++c) g.bbox_b[c] += dblog[c];
    matvec_transpose_add(p.bbox_w, dblog, &dh2(i, 0));

    outer_add(g.proj_w, grad_embeds[i].data(), &trace.h2(i, 0));
    for (int c = 0; c < d.embed_dim; ++c) g.proj_b[c] += grad_embeds[i][c];
    matvec_transpose_add(p.proj_w, grad_embeds[i].data(), &dh2(i, 0));
  }

  // feed-forward block (residual)
  Matrix dh1(n, d.query_dim);
  std::vector<double> dact(d.hidden_dim), da1(d.hidden_dim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d.query_dim; ++c) dh1(i, c) = dh2(i, c);
    std::fill(dact.begin(), dact.end(), 0.0);
    matvec_transpose_add(p.ffn_w2, &dh2(i, 0), dact.data());
    outer_add(g.ffn_w2, &dh2(i, 0), &trace.act_out(i, 0));
    for (int c = 0; c < d.query_dim; ++c) g.ffn_b2[c] += dh2(i, c);

    for (int h = 0; h < d.hidden_dim; ++h) da1[h] = dact[h] * silu_deriv(trace.act_in(i, h));
    outer_add(g.ffn_w1, da1.data(), &trace.h1(i, 0));
    for (int h = 0; h < d.hidden_dim; ++h) g.ffn_b1[h] += da1[h];
    matvec_transpose_add(p.ffn_w1, da1.data(), &dh1(i, 0));
  }

  // attention block (residual): h1 = u + attn * V
  Matrix du(n, d.query_dim), dV(cells, d.query_dim), dK(cells, d.query_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.query_dim));
  std::vector<double> dA(cells), dS(cells), dQ(d.query_dim);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d.query_dim; ++c) du(i, c) = dh1(i, c);

    double dot_aA = 0.0;
    for (int m = 0; m < cells; ++m) {
      double s = 0.0;
      for (int c = 0; c < d.query_dim; ++c) s += dh1(i, c) * trace.v_proj(m, c);
      dA[m] = s;
      dot_aA += dA[m] * trace.attn(i, m);
      for (int c = 0; c < d.query_dim; ++c) dV(m, c) += trace.attn(i, m) * dh1(i, c);
    }
    for (int m = 0; m < cells; ++m) dS[m] = trace.attn(i, m) * (dA[m] - dot_aA);

    std::fill(dQ.begin(), dQ.end(), 0.0);
    for (int m = 0; m < cells; ++m) {
      const double w = dS[m] * scale;
      for (int c = 0; c < d.query_dim; ++c) {
        dQ[c] += w * trace.k_proj(m, c);
        dK(m, c) += w * trace.q_proj(i, c);
      }
    }
    outer_add(g.attn_q, dQ.data(), &trace.u(i, 0));
    matvec_transpose_add(p.attn_q, dQ.data(), &du(i, 0));
  }

  // key/value projections and the context input map
  std::vector<double> dctx(d.query_dim);
  for (int m = 0; m < cells; ++m) {
    std::fill(dctx.begin(), dctx.end(), 0.0);
    outer_add(g.attn_k, &dK(m, 0), &trace.ctx_feat(m, 0));
    matvec_transpose_add(p.attn_k, &dK(m, 0), dctx.data());
    outer_add(g.attn_v, &dV(m, 0), &trace.ctx_feat(m, 0));
    matvec_transpose_add(p.attn_v, &dV(m, 0), dctx.data());
    outer_add(g.ctx_in, dctx.data(), trace.context[m].data());
  }

  // queries and prior projection share du through u = q + P t
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d.query_dim; ++c) g.queries(i, c) += du(i, c);
    outer_add(g.prior_proj, &du(i, 0), trace.prior_raw[i].data());
  }
  return g;
}

DetectorState init_state(const DetectorDims& dims, std::uint64_t seed) {
  if (dims.num_queries < 1 || dims.embed_dim < 1 || dims.query_dim < 1 || dims.hidden_dim < 1)
    throw std::invalid_argument("init_state: sizes must be positive");

  DetectorState s;
  s.dims = dims;
  s.params = DetectorParams::shaped(dims);
  Rng rng(derive_seed(seed, {0xde7ULL}));

  auto fill = [&](Matrix& m, double scale) {
    for (auto& x : m.a) x = scale * rng.normal();
  };
  fill(s.params.queries, 0.02);
  fill(s.params.prior_proj, 1.0 / std::sqrt(static_cast<double>(dims.embed_dim)));
  fill(s.params.ctx_in, 1.0 / std::sqrt(static_cast<double>(dims.embed_dim)));
  const double qscale = 1.0 / std::sqrt(static_cast<double>(dims.query_dim));
  fill(s.params.attn_q, qscale);
  fill(s.params.attn_k, qscale);
  fill(s.params.attn_v, qscale);
  fill(s.params.ffn_w1, qscale);
  fill(s.params.ffn_w2, 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim)));
  fill(s.params.proj_w, qscale);
  fill(s.params.bbox_w, qscale);
  return s;
}

std::uint64_t params_fingerprint(const DetectorParams& p) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over raw bytes
  p.for_each_array([&](const std::vector<double>& arr) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(arr.data());
    for (std::size_t i = 0; i < arr.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

namespace {
constexpr char kMagic[8] = {'O', 'V', 'D', 'C', 'K', '0', '0', '1'};
}

void save_checkpoint(const std::string& path, const DetectorState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::int32_t header[4] = {state.dims.num_queries, state.dims.embed_dim,
                                  state.dims.query_dim, state.dims.hidden_dim};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  state.params.for_each_array([&](const std::vector<double>& arr) {
    out.write(reinterpret_cast<const char*>(arr.data()),
              static_cast<std::streamsize>(arr.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

DetectorState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::int32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);

  DetectorState s;
  s.dims = DetectorDims{header[0], header[1], header[2], header[3]};
  s.params = DetectorParams::shaped(s.dims);
  s.params.for_each_array([&](std::vector<double>& arr) {
    in.read(reinterpret_cast<char*>(arr.data()),
            static_cast<std::streamsize>(arr.size() * sizeof(double)));
  });
  if (!in) throw std::runtime_error("load_checkpoint: truncated parameters in " + path);
  in.peek();
  if (!in.eof()) throw std::runtime_error("load_checkpoint: trailing bytes in " + path);
  return s;
}

}  // namespace ovd
