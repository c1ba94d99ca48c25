#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ovd/embedding.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("teacher space anchors respect the separation bound") {
    const CategorySpace space = CategorySpace::make(1, 1);
    const TeacherSpace t = build_teacher_space(space, 4, 60.0 * kPi / 180.0, 7);
    REQUIRE(t.anchors.size() == 2);
    for (const auto& a : t.anchors) CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dot(t.anchors[0], t.anchors[1]) <= 0.5 + 1e-12);
  }

  TEST_CASE("teacher space is deterministic in the seed") {
    const CategorySpace space = CategorySpace::make(6, 2);
    const TeacherSpace a = build_teacher_space(space, 16, kPi / 4.0, 42);
    const TeacherSpace b = build_teacher_space(space, 16, kPi / 4.0, 42);
    CHECK(a.anchors == b.anchors);  // bitwise
    const TeacherSpace c = build_teacher_space(space, 16, kPi / 4.0, 43);
    CHECK(a.anchors != c.anchors);
  }

  TEST_CASE("infeasible separation fails within the retry budget") {
    const CategorySpace space = CategorySpace::make(50, 50);
    CHECK_THROWS_AS(build_teacher_space(space, 8, 85.0 * kPi / 180.0, 3), std::runtime_error);
  }

  TEST_CASE("pairwise separation holds on the default-sized space") {
    const CategorySpace space = CategorySpace::make(10, 4);
    const TeacherSpace t = build_teacher_space(space, 64, kPi / 4.0, 1, 0.0, 0.0, 16);
    const double bound = std::cos(kPi / 4.0);
    for (std::size_t i = 0; i < t.anchors.size(); ++i) {
      for (std::size_t j = i + 1; j < t.anchors.size(); ++j)
        CHECK(dot(t.anchors[i], t.anchors[j]) <= bound + 1e-12);
      // subspace sampling leaves the remaining coordinates at zero
      for (int d = 16; d < 64; ++d) CHECK(t.anchors[i][d] == 0.0);
    }
  }

  TEST_CASE("text embedding with zero noise is the anchor exactly") {
    const CategorySpace space = CategorySpace::make(3, 0);
    const TeacherSpace t = build_teacher_space(space, 8, 0.5, 11);
    CHECK(text_embedding(t, 1, 12, 0.0, 99) == t.anchors[1]);
  }

  TEST_CASE("template averaging concentrates near the anchor") {
    // Monte-Carlo check: 12 templates at noise 0.05 stay within cos > 0.9
    const CategorySpace space = CategorySpace::make(8, 0);
    const TeacherSpace t = build_teacher_space(space, 64, kPi / 4.0, 5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      for (int c = 0; c < space.size(); ++c) {
        const Embedding e = text_embedding(t, c, 12, 0.05, seed);
        CHECK(norm(e) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cosine(e, t.anchors[c]) > 0.9);
      }
    }
  }

  TEST_CASE("two template seeds give distinct unit vectors") {
    const CategorySpace space = CategorySpace::make(3, 0);
    const TeacherSpace t = build_teacher_space(space, 16, 0.5, 2);
    const Embedding a = text_embedding(t, 0, 12, 0.05, 100);
    const Embedding b = text_embedding(t, 0, 12, 0.05, 101);
    CHECK(a != b);
    CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(norm(b) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("region embedding zero-noise identity and perturbation") {
    const CategorySpace space = CategorySpace::make(4, 0);
    TeacherSpace t = build_teacher_space(space, 32, 0.5, 8, 0.0, 0.0);
    CHECK(region_embedding(t, 2, 77) == t.anchors[2]);

    t.alignment_noise = 0.1;
    const Embedding r = region_embedding(t, 2, 77);
    CHECK(cosine(r, t.anchors[2]) < 1.0);
    CHECK(norm(r) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("mean cosine to the anchor decreases as alignment noise grows") {
    const CategorySpace space = CategorySpace::make(4, 0);
    double previous = 1.0;
    for (double noise : {0.05, 0.2, 0.5}) {
      TeacherSpace t = build_teacher_space(space, 64, 0.5, 8, noise, 0.0);
      double mean = 0.0;
      for (int s = 0; s < 1000; ++s) mean += cosine(region_embedding(t, 0, 1000 + s), t.anchors[0]);
      mean /= 1000.0;
      CHECK(mean < previous);
      previous = mean;
    }
  }

  TEST_CASE("embedding bank import validates entries") {
    const CategorySpace space = CategorySpace::make(2, 1);
    const std::string path = temp_file("ovd_bank_test.json");

    nlohmann::json good;
    good["dimension"] = 4;
    good["entries"] = {{{"id", 0}, {"name", "base_0"}, {"values", {2.0, 0.0, 0.0, 0.0}}},
                       {{"id", 1}, {"name", "base_1"}, {"values", {0.0, 1.0, 0.0, 0.0}}},
                       {{"id", 2}, {"name", "novel_0"}, {"values", {0.0, 0.0, 3.0, 0.0}}}};
    {
      std::ofstream out(path);
      out << good.dump();
    }
    const TextEmbeddingBank bank = import_embedding_bank(path, space);
    REQUIRE(bank.entries.size() == 3);
    for (const auto& e : bank.entries) CHECK(norm(e) == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("missing category is reported by id") {
      nlohmann::json bad = good;
      bad["entries"].erase(1);
      {
        std::ofstream out(path);
        out << bad.dump();
      }
      CHECK_THROWS_WITH_AS(import_embedding_bank(path, space),
                           doctest::Contains("missing category id 1"), std::runtime_error);
    }
    SUBCASE("non-finite value is reported") {
      nlohmann::json bad = good;
      bad["entries"][0]["values"][0] = "NaN";
      bad["entries"][0]["values"][0] = std::numeric_limits<double>::quiet_NaN();
      {
        std::ofstream out(path);
        out << "{\"dimension\":4,\"entries\":[{\"id\":0,\"name\":\"base_0\",\"values\":[null,0,0,0]}]}";
      }
      CHECK_THROWS_AS(import_embedding_bank(path, space), std::exception);
    }
    SUBCASE("dimension mismatch is reported") {
      nlohmann::json bad = good;
      bad["entries"][2]["values"] = {1.0, 0.0};
      {
        std::ofstream out(path);
        out << bad.dump();
      }
      CHECK_THROWS_WITH_AS(import_embedding_bank(path, space),
                           doctest::Contains("dimension mismatch"), std::runtime_error);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("bank export/import round trip") {
    const CategorySpace space = CategorySpace::make(5, 2);
    const TeacherSpace t = build_teacher_space(space, 16, 0.5, 21);
    const TextEmbeddingBank bank = build_text_bank(t, space, 12, 0.05, 3);
    const std::string path = temp_file("ovd_bank_roundtrip.json");
    export_embedding_bank(path, bank, space);
    const TextEmbeddingBank loaded = import_embedding_bank(path, space);
    CHECK(loaded.dimension == bank.dimension);
    // JSON round-trips doubles exactly; import renormalizes, so compare up to
    // one rounding of the near-unit norm
    REQUIRE(loaded.entries.size() == bank.entries.size());
    for (std::size_t c = 0; c < bank.entries.size(); ++c)
      for (std::size_t d = 0; d < bank.entries[c].size(); ++d)
        CHECK(loaded.entries[c][d] == doctest::Approx(bank.entries[c][d]).epsilon(1e-14));
    std::filesystem::remove(path);
  }

  TEST_CASE("cosine basics") {
    const Embedding v{0.3, -1.2, 0.5};
    CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine({1.0, 0.0}, {0.0, 1.0}) == 0.0);
    Embedding w = v;
    for (auto& x : w) x *= 2.0;
    CHECK(cosine(v, w) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(cosine({0.0, 0.0}, {1.0, 0.0}), std::domain_error);
  }

  TEST_CASE("cosine is symmetric and scale invariant on random vectors") {
    Rng rng(99);
    for (int t = 0; t < 50; ++t) {
      const Embedding a = rng.normal_vec(8), b = rng.normal_vec(8);
      const double s = rng.uniform(0.1, 10.0);
      Embedding sb = b;
      for (auto& x : sb) x *= s;
      CHECK(cosine(a, b) == doctest::Approx(cosine(b, a)).epsilon(1e-12));
      CHECK(cosine(a, sb) == doctest::Approx(cosine(a, b)).epsilon(1e-10));
      CHECK(cosine(a, b) >= -1.0);
      CHECK(cosine(a, b) <= 1.0);
    }
  }
}
