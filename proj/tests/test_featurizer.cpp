#include <gtest/gtest.h>

#include "diana/domain.hpp"
#include "diana/featurizer.hpp"

using namespace diana;

// Reference values from an independent FNV-1a implementation.
TEST(Fnv1a64, KnownDigests) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("k1"), 0x08be0f07b56224c1ULL);
  EXPECT_EQ(fnv1a64("k1 ?"), 0x952867d65d2d9584ULL);
  EXPECT_EQ(fnv1a64("[SEP]"), 0xf1f9b527d343c3a9ULL);
}

TEST(Encode, SingleTokenIsSignedOneHot) {
  // fnv1a64("k1") mod 8 = 1, top bit clear.
  const Vector v = encode({"k1"}, {}, 8);
  const Vector expected{0, 1, 0, 0, 0, 0, 0, 0};
  ASSERT_EQ(v.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(v[i], expected[i]);
}

TEST(Encode, MatchesReferenceVector) {
  const Vector v = encode({"k1", "v5", "k2", "v7"}, {"k1", "?"}, 8);
  const double a = 0.30151134457776363;
  const Vector expected{a, a, a, a, a, -a, -2 * a, -a};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(v[i], expected[i], 1e-15);
}

TEST(Encode, DeterministicAndUnitNorm) {
  const auto suite = generate_suite(3, default_suite_config());
  for (const auto& sp : suite.splits)
    for (const auto& inst : sp.test) {
      const Vector a = encode(inst, 64);
      EXPECT_EQ(a, encode(inst, 64));
      EXPECT_NEAR(vec::norm(a), 1.0, 1e-9);
      EXPECT_TRUE(vec::all_finite(a));
    }
}

TEST(Encode, NeverDegenerate) {
  // Odd feature count means no input can cancel to the zero vector.
  for (int i = 0; i < 500; ++i) {
    const Vector v = encode({"t" + std::to_string(i), "u" + std::to_string(i * 7)}, {"q" + std::to_string(i)}, 2);
    EXPECT_NEAR(vec::norm(v), 1.0, 1e-12);
  }
}

TEST(Encode, Errors) {
  EXPECT_THROW(encode({}, {}, 8), EncodingError);
  EXPECT_THROW(encode({"a"}, {}, 1), ConfigError);
}

TEST(Encode, SeparatesDisjointNamespaces) {
  GenConfig g;
  g.overlap = 0.0;
  SuiteConfig cfg{g, {{0, FormatKind::Extractive, "a", true}, {1, FormatKind::Extractive, "b", true}}};
  const auto suite = generate_suite(6, cfg);
  auto feats = [&](int id) {
    std::vector<Vector> out;
    for (const auto& inst : suite.splits_of(id).test) out.push_back(encode(inst, 64));
    return out;
  };
  const auto fa = feats(0), fb = feats(1);
  auto mean_cos = [](const std::vector<Vector>& x, const std::vector<Vector>& y, bool same) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (same && i == j) continue;
        s += vec::dot(x[i], y[j]);
        ++n;
      }
    return s / n;
  };
  const double within = 0.5 * (mean_cos(fa, fa, true) + mean_cos(fb, fb, true));
  EXPECT_LT(mean_cos(fa, fb, false), within);
}
