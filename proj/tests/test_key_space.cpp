#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "diana/key_space.hpp"
#include "test_util.hpp"

using namespace diana;
using diana::testing::numeric_grad;
using diana::testing::random_vector;
using diana::testing::rel_error;

namespace {

double euclid(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::optional<std::span<const double>> opt(const Vector& v) { return std::span<const double>(v); }

}  // namespace

TEST(TripletLoss, ScalarExamples) {
  const Vector q{0, 0}, k{3, 4}, far{100, 0}, near{3, 4.5};
  EXPECT_DOUBLE_EQ(task_triplet_loss(q, k, std::nullopt), std::exp(5.0));
  EXPECT_DOUBLE_EQ(task_triplet_loss(q, k, opt(far)), std::exp(5.0));
  EXPECT_DOUBLE_EQ(task_triplet_loss(q, k, opt(near)), std::exp(5.5));
  EXPECT_DOUBLE_EQ(task_triplet_loss(q, k, opt(near), TripletForm::Plain), 5.5);
  EXPECT_DOUBLE_EQ(task_triplet_loss(k, k, opt(k)), std::exp(1.0));
}

TEST(TripletLoss, MonotoneInBothDistances) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const Vector k = random_vector(rng, 6);
    const Vector dir = diana::testing::random_unit(rng, 6);
    auto at = [&](double r) {
      Vector v = k;
      vec::axpy(r, dir, v);
      return v;
    };
    const Vector neg = at(0.4 + rng.uniform01() * 0.5);
    const double r1 = rng.uniform01() * 2.0, r2 = r1 + 0.1;
    EXPECT_LT(task_triplet_loss(at(r1), k, opt(neg)), task_triplet_loss(at(r2), k, opt(neg)));
    const Vector q = at(0.3);
    const double n1 = rng.uniform01() * 1.5, n2 = n1 + 0.1;
    EXPECT_GE(task_triplet_loss(q, k, opt(at(n1))), task_triplet_loss(q, k, opt(at(n2))));
  }
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const Vector q = random_vector(rng, 5, 0.3), k = random_vector(rng, 5, 0.3), n = random_vector(rng, 5, 0.3);
    for (auto form : {TripletForm::Literal, TripletForm::Plain}) {
      const Vector g = task_triplet_grad(q, k, opt(n), form);
      const Vector num = numeric_grad([&](const Vector& kk) { return task_triplet_loss(q, kk, opt(n), form); }, k);
      EXPECT_LT(rel_error(g, num), 1e-5);
    }
  }
}

TEST(TripletLoss, ZeroDistanceUsesZeroSubgradient) {
  const Vector q{1, 2}, k{1, 2};
  const Vector g = task_triplet_grad(q, k, std::nullopt);
  EXPECT_EQ(g, (Vector{0, 0}));
}

TEST(TripletLoss, SmallStepShrinksPositiveDistance) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const Vector q = random_vector(rng, 8), n = random_vector(rng, 8);
    Vector k = random_vector(rng, 8);
    const double before = euclid(q, k);
    const Vector g = task_triplet_grad(q, k, opt(n));
    // Line search: the first step size that lowers the loss also lowers d(q,k) when the
    // negative term is inactive; otherwise accept any loss-decreasing step.
    double lr = 1.0;
    Vector k2 = k;
    for (int it = 0; it < 60; ++it, lr *= 0.5) {
      k2 = k;
      vec::axpy(-lr, g, k2);
      if (task_triplet_loss(q, k2, opt(n)) < task_triplet_loss(q, k, opt(n))) break;
    }
    EXPECT_LT(task_triplet_loss(q, k2, opt(n)), task_triplet_loss(q, k, opt(n)));
    if (euclid(n, k) >= kTripletMargin + 1e-6) {
      EXPECT_LT(euclid(q, k2), before);
    }
  }
}

TEST(TripletLoss, MatchesScalarOracleOnRandomTriplets) {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    const Vector q = random_vector(rng, 4), k = random_vector(rng, 4), n = random_vector(rng, 4);
    const double oracle = std::exp(euclid(q, k) + std::max(1.0 - euclid(n, k), 0.0));
    EXPECT_NEAR(task_triplet_loss(q, k, opt(n)), oracle, 1e-9 * oracle);
  }
}

TEST(InferTask, Examples) {
  const std::vector<TaskKey> keys{{3, {1, 0}}, {5, {0, 1}}};
  const Vector origin{0, 0};
  auto r = infer_task(origin, keys, 2.0);
  ASSERT_TRUE(r.task_id);
  EXPECT_EQ(*r.task_id, 3);
  EXPECT_DOUBLE_EQ(r.distance, 1.0);
  r = infer_task(origin, keys, 0.5);
  EXPECT_TRUE(r.is_unseen());
  EXPECT_DOUBLE_EQ(r.distance, 1.0);
  EXPECT_EQ(r.nearest_task, 3);
  r = infer_task(Vector{0, 1}, keys, 0.1);
  ASSERT_TRUE(r.task_id);
  EXPECT_EQ(*r.task_id, 5);
  EXPECT_DOUBLE_EQ(r.distance, 0.0);
  EXPECT_THROW(infer_task(origin, std::vector<TaskKey>{}, 1.0), RoutingError);
}

TEST(InferTask, TieGoesToSmallerIdRegardlessOfOrder) {
  const std::vector<TaskKey> keys{{9, {1, 0}}, {2, {0, 1}}};
  EXPECT_EQ(*infer_task(Vector{0, 0}, keys, 5.0).task_id, 2);
}

TEST(InferTask, AgreesWithBruteForce) {
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    const auto n = 1 + rng.uniform_index(8);
    std::vector<TaskKey> keys;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid coordinates make exact ties common.
      Vector k(3);
      for (auto& x : k) x = static_cast<double>(rng.uniform_index(3));
      keys.push_back({static_cast<int>(rng.uniform_index(50)) + static_cast<int>(i) * 50, k});
    }
    Vector q(3);
    for (auto& x : q) x = static_cast<double>(rng.uniform_index(3));
    const double tau = rng.uniform01() * 2.5;
    int best = -1;
    double bd = 1e300;
    for (const auto& k : keys) {
      const double d = euclid(q, k.key);
      if (d < bd || (d == bd && k.task_id < best)) {
        bd = d;
        best = k.task_id;
      }
    }
    const auto r = infer_task(q, keys, tau);
    EXPECT_EQ(r.nearest_task, best);
    EXPECT_DOUBLE_EQ(r.distance, bd);
    EXPECT_EQ(r.is_unseen(), bd > tau);
  }
}

TEST(SelectMeta, Examples) {
  // Distances 0.2 / 0.5 / 0.1 from the origin.
  const std::vector<MetaKey> keys{{0, {0.2, 0}}, {1, {0, 0.5}}, {2, {0.1, 0}}};
  const Vector q{0, 0};
  EXPECT_EQ(select_meta(q, keys, 2), (std::vector<int>{2, 0}));
  EXPECT_EQ(select_meta(q, keys, 3), (std::vector<int>{2, 0, 1}));
  const std::vector<MetaKey> tie{{0, {1, 0}}, {1, {0, 1}}};
  EXPECT_EQ(select_meta(q, tie, 1), (std::vector<int>{0}));
  EXPECT_THROW(select_meta(q, keys, 0), ConfigError);
  EXPECT_THROW(select_meta(q, keys, 4), ConfigError);
}

TEST(SelectMeta, AgreesWithBruteForce) {
  Rng rng(41);
  for (int t = 0; t < 1000; ++t) {
    const auto p = 1 + rng.uniform_index(10);
    std::vector<MetaKey> keys;
    for (std::size_t i = 0; i < p; ++i) {
      Vector k(2);
      for (auto& x : k) x = static_cast<double>(rng.uniform_index(3));
      keys.push_back({static_cast<int>(i), k});
    }
    Vector q(2);
    for (auto& x : q) x = static_cast<double>(rng.uniform_index(3));
    const int m = 1 + static_cast<int>(rng.uniform_index(p));
    std::vector<int> order(p);
    for (std::size_t i = 0; i < p; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return euclid(q, keys[a].key) < euclid(q, keys[b].key); });
    order.resize(static_cast<std::size_t>(m));
    EXPECT_EQ(select_meta(q, keys, m), order);
  }
}

TEST(MetaPull, LossExamplesAndGradient) {
  const Vector q{1, 1};
  EXPECT_DOUBLE_EQ(meta_pull_loss(q, std::vector<Vector>{{1, 1}, {1, 1}}), 0.0);
  EXPECT_DOUBLE_EQ(meta_pull_loss(q, std::vector<Vector>{{1, 2}}), 1.0);
  EXPECT_THROW(meta_pull_loss(q, std::vector<Vector>{}), InvariantError);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const Vector qq = random_vector(rng, 4);
    std::vector<Vector> sel{random_vector(rng, 4), random_vector(rng, 4), random_vector(rng, 4)};
    double oracle = 0.0;
    for (const auto& k : sel) oracle += euclid(qq, k) * euclid(qq, k) / 3.0;
    EXPECT_NEAR(meta_pull_loss(qq, sel), oracle, 1e-12);
    const Vector num = numeric_grad(
        [&](const Vector& k0) {
          auto s = sel;
          s[0] = k0;
          return meta_pull_loss(qq, s);
        },
        sel[0]);
    EXPECT_LT(rel_error(meta_pull_grad(qq, sel[0], 3), num), 1e-7);
  }
}

TEST(CalibrateTau, Examples) {
  EXPECT_DOUBLE_EQ(calibrate_tau(std::vector<double>{0.7, 0.7, 0.7}), 0.7);
  EXPECT_DOUBLE_EQ(calibrate_tau(std::vector<double>{0.0, 2.0}), 3.0);
  EXPECT_GT(calibrate_tau(std::vector<double>{0.1, 0.4, 0.2}), 0.0);
  EXPECT_THROW(calibrate_tau(std::vector<double>{}), CalibrationError);
}

TEST(KeySpace, BasicsAndDefaultTau) {
  Rng rng(2);
  KeySpace ks(4, 6, rng);
  EXPECT_EQ(ks.meta_keys().size(), 6u);
  for (const auto& m : ks.meta_keys()) EXPECT_NEAR(vec::norm(m.key), 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(ks.tau()));
  ks.add_task_key(4, Vector{1, 0, 0, 0});
  EXPECT_THROW(ks.add_task_key(4, Vector{0, 0, 0, 0}), InvariantError);
  EXPECT_THROW(ks.add_task_key(5, Vector{0, 0}), InvariantError);
  EXPECT_THROW(ks.task_key(9), RoutingError);
  EXPECT_EQ(*ks.route(Vector{5, 5, 5, 5}).task_id, 4);
  ks.set_tau(0.5);
  EXPECT_TRUE(ks.route(Vector{5, 5, 5, 5}).is_unseen());
}

TEST(TripletForm, Names) {
  EXPECT_EQ(triplet_form_from_name("literal"), TripletForm::Literal);
  EXPECT_EQ(triplet_form_from_name("plain"), TripletForm::Plain);
  EXPECT_THROW(triplet_form_from_name("cubic"), ConfigError);
}
