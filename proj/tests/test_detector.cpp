#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ovd/detector.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

namespace {

TextEmbeddingBank tiny_bank(int count, int dim) {
  TextEmbeddingBank bank;
  bank.dimension = dim;
  bank.template_count = 1;
  Rng rng(314);
  for (int c = 0; c < count; ++c) {
    Embedding e = rng.normal_vec(dim);
    normalize(e);
    bank.entries.push_back(std::move(e));
  }
  return bank;
}

std::vector<Embedding> random_context(Rng& rng, int cells, int dim) {
  std::vector<Embedding> ctx(cells);
  for (auto& c : ctx) c = rng.normal_vec(dim);
  return ctx;
}

}  // namespace

TEST_SUITE("detector") {
  TEST_CASE("prior tiling partitions queries into contiguous groups") {
    const DetectorDims dims{6, 8, 4, 8};
    const DetectorState state = init_state(dims, 1);
    const TextEmbeddingBank bank = tiny_bank(4, 8);

    const PriorAssignment a = assign_priors_to_queries({2, 0, 3}, bank, state);
    CHECK(a.category_per_query == std::vector<int>{2, 2, 0, 0, 3, 3});

    const PriorAssignment single = assign_priors_to_queries({1}, bank, state);
    CHECK(single.category_per_query == std::vector<int>(6, 1));

    const PriorAssignment each = assign_priors_to_queries({0, 1, 2, 3, 0, 1}, bank, state);
    CHECK(each.category_per_query == std::vector<int>{0, 1, 2, 3, 0, 1});

    // remainder goes to the first groups
    const PriorAssignment uneven = assign_priors_to_queries({0, 1, 2, 3}, bank, state);
    CHECK(uneven.category_per_query == std::vector<int>{0, 0, 1, 1, 2, 3});

    CHECK_THROWS_AS(assign_priors_to_queries({0, 1, 2, 3, 0, 1, 2}, bank, state),
                    std::invalid_argument);
    CHECK_THROWS_AS(assign_priors_to_queries({}, bank, state), std::invalid_argument);
  }

  TEST_CASE("all-zero parameters produce zero embeddings and centered boxes") {
    const DetectorDims dims{3, 8, 4, 8};
    DetectorState state;
    state.dims = dims;
    state.params = DetectorParams::shaped(dims);

    Rng rng(5);
    const auto ctx = random_context(rng, 16, 8);
    const ForwardResult out = forward(state, ctx, zero_priors(state));
    for (const auto& e : out.embeds)
      for (double x : e) CHECK(x == 0.0);
    for (const auto& b : out.boxes) {
      CHECK(b.cx == 0.5);
      CHECK(b.cy == 0.5);
      CHECK(b.w == 0.5);
      CHECK(b.h == 0.5);
    }
  }

  TEST_CASE("forward is deterministic") {
    const DetectorDims dims{4, 8, 8, 16};
    const DetectorState state = init_state(dims, 3);
    const TextEmbeddingBank bank = tiny_bank(3, 8);
    Rng rng(6);
    const auto ctx = random_context(rng, 16, 8);
    const PriorAssignment priors = assign_priors_to_queries({0, 1}, bank, state);

    const ForwardResult a = forward(state, ctx, priors);
    const ForwardResult b = forward(state, ctx, priors);
    CHECK(a.embeds == b.embeds);
    for (int i = 0; i < dims.num_queries; ++i) {
      CHECK(a.boxes[i].cx == b.boxes[i].cx);
      CHECK(a.boxes[i].w == b.boxes[i].w);
    }
  }

  TEST_CASE("permuting queries together with their priors permutes outputs") {
    const DetectorDims dims{4, 8, 8, 16};
    const DetectorState state = init_state(dims, 7);
    const TextEmbeddingBank bank = tiny_bank(4, 8);
    Rng rng(8);
    const auto ctx = random_context(rng, 16, 8);
    const PriorAssignment priors = assign_priors_to_queries({0, 1, 2, 3}, bank, state);
    const ForwardResult base = forward(state, ctx, priors);

    const std::vector<int> perm{2, 0, 3, 1};
    DetectorState permuted = state;
    PriorAssignment permuted_priors = priors;
    for (int i = 0; i < 4; ++i) {
      for (int c = 0; c < dims.query_dim; ++c) {
        permuted.params.queries(i, c) = state.params.queries(perm[i], c);
        permuted_priors.projected(i, c) = priors.projected(perm[i], c);
      }
      permuted_priors.raw[i] = priors.raw[perm[i]];
      permuted_priors.category_per_query[i] = priors.category_per_query[perm[i]];
    }
    const ForwardResult moved = forward(permuted, ctx, permuted_priors);
    for (int i = 0; i < 4; ++i) {
      CHECK(moved.embeds[i] == base.embeds[perm[i]]);
      CHECK(moved.boxes[i].cx == base.boxes[perm[i]].cx);
      CHECK(moved.boxes[i].h == base.boxes[perm[i]].h);
    }
  }

  TEST_CASE("box coordinates always lie strictly inside (0,1)") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
      const DetectorDims dims{4, 8, 8, 16};
      const DetectorState state = init_state(dims, rng.next_u64());
      const auto ctx = random_context(rng, 16, 8);
      const ForwardResult out = forward(state, ctx, zero_priors(state));
      for (const auto& b : out.boxes)
        for (double v : {b.cx, b.cy, b.w, b.h}) {
          CHECK(v > 0.0);
          CHECK(v < 1.0);
        }
    }
  }

  TEST_CASE("zero upstream gradients give zero parameter gradients") {
    const DetectorDims dims{3, 8, 4, 8};
    const DetectorState state = init_state(dims, 21);
    Rng rng(22);
    const auto ctx = random_context(rng, 16, 8);
    const ForwardResult out = forward(state, ctx, zero_priors(state));

    const std::vector<Embedding> de(3, Embedding(8, 0.0));
    const std::vector<std::array<double, 4>> db(3, {0.0, 0.0, 0.0, 0.0});
    const DetectorParams g = backward(state, out.trace, de, db);
    g.for_each_array([&](const std::vector<double>& arr) {
      for (double x : arr) CHECK(x == 0.0);
    });
  }

  TEST_CASE("parameters off the gradient path stay at zero gradient") {
    const DetectorDims dims{3, 8, 4, 8};
    const DetectorState state = init_state(dims, 23);
    Rng rng(24);
    const auto ctx = random_context(rng, 16, 8);
    const ForwardResult out = forward(state, ctx, zero_priors(state));

    std::vector<Embedding> de(3, Embedding(8, 0.0));
    de[0][2] = 1.0;  // loss touches only e
    const std::vector<std::array<double, 4>> db(3, {0.0, 0.0, 0.0, 0.0});
    const DetectorParams g = backward(state, out.trace, de, db);
    for (double x : g.bbox_w.a) CHECK(x == 0.0);
    for (double x : g.bbox_b) CHECK(x == 0.0);
    double proj_norm = 0.0;
    for (double x : g.proj_w.a) proj_norm += x * x;
    CHECK(proj_norm > 0.0);
  }

  TEST_CASE("a stale trace is rejected") {
    const DetectorDims dims{3, 8, 4, 8};
    DetectorState state = init_state(dims, 25);
    Rng rng(26);
    const auto ctx = random_context(rng, 16, 8);
    const ForwardResult out = forward(state, ctx, zero_priors(state));
    state.params.queries(0, 0) += 1.0;  // parameters moved since the trace
    const std::vector<Embedding> de(3, Embedding(8, 0.0));
    const std::vector<std::array<double, 4>> db(3, {0.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(backward(state, out.trace, de, db), std::invalid_argument);
  }

  TEST_CASE("initialization is seeded and counts parameters in closed form") {
    const DetectorDims d{16, 64, 32, 64};
    const DetectorState a = init_state(d, 77);
    const DetectorState b = init_state(d, 77);
    CHECK(flatten_params(a.params) == flatten_params(b.params));
    const DetectorState c = init_state(d, 78);
    CHECK(flatten_params(a.params) != flatten_params(c.params));

    const std::size_t expected =
        static_cast<std::size_t>(d.num_queries) * d.query_dim  // queries
        + 2u * d.query_dim * d.embed_dim                       // prior_proj, ctx_in
        + 3u * d.query_dim * d.query_dim                       // attention
        + d.hidden_dim * d.query_dim + d.hidden_dim            // ffn_w1, b1
        + d.query_dim * d.hidden_dim + d.query_dim             // ffn_w2, b2
        + d.embed_dim * d.query_dim + d.embed_dim              // projection head
        + 4u * d.query_dim + 4u;                               // box head
    CHECK(a.params.param_count() == expected);
  }

  TEST_CASE("checkpoint round trip is lossless") {
    const DetectorDims dims{5, 16, 8, 12};
    const DetectorState state = init_state(dims, 99);
    const std::string path =
        (std::filesystem::temp_directory_path() / "ovd_ckpt_test.bin").string();
    save_checkpoint(path, state);
    const DetectorState loaded = load_checkpoint(path);
    CHECK(loaded.dims == state.dims);
    CHECK(flatten_params(loaded.params) == flatten_params(state.params));

    {
      std::ofstream out(path, std::ios::binary);
      out << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
  }
}
