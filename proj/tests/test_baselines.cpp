#include "test_helpers.hpp"
#include "vtl/baselines.hpp"
#include "vtl/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vtl;
using testing_util::make_sequence;
using testing_util::random_sequence;
using testing_util::scalar_sequence;

namespace {

// Two 2-D classes; `shift` moves every sample.
FeatureSequence two_class_blobs(std::mt19937_64& rng, int per_class, double shift, double sep = 4.0) {
  std::normal_distribution<double> n01;
  Matrix x(2 * per_class, 2);
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const Eigen::Index row = c * per_class + i;
      x(row, 0) = shift + (c == 0 ? -sep / 2 : sep / 2) + n01(rng);
      x(row, 1) = shift + 0.5 * n01(rng);
      labels.push_back(c + 1);
    }
  }
  return make_sequence(x, labels);
}

}  // namespace

TEST_CASE("fit_gaussian_stats maximum-likelihood moments") {
  const auto st = fit_gaussian_stats(scalar_sequence({1.0, 3.0}), 1);
  CHECK(st.means[0][0] == 2.0);
  CHECK(st.covariances[0](0, 0) == 1.0);
  CHECK(st.pooled(0, 0) == 1.0);

  std::mt19937_64 rng(1);
  const auto seq = random_sequence(rng, 40, 3, 3);
  const std::vector<FeatureSequence> twice{seq, seq};
  const auto a = fit_gaussian_stats(seq, 3);
  const auto b = fit_gaussian_stats(twice, 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(a.means[static_cast<size_t>(c)].isApprox(b.means[static_cast<size_t>(c)], 1e-14));
    CHECK(a.covariances[static_cast<size_t>(c)].isApprox(b.covariances[static_cast<size_t>(c)], 1e-12));
  }
  CHECK(a.pooled.isApprox(b.pooled, 1e-12));

  const auto single = fit_gaussian_stats(make_sequence(Matrix::Random(2, 2), {1, 2}), 2);
  CHECK(single.covariances[0].isZero(0.0));
  CHECK(single.covariances[1].isZero(0.0));
  CHECK(single.pooled.isZero(0.0));

  const std::vector<FeatureSequence> none;
  CHECK_THROWS_AS(fit_gaussian_stats(none, 2), DataQualityError);
}

TEST_CASE("regularize_covariance adds a trace-relative ridge") {
  Matrix s(2, 2);
  s << 2.0, 0.5, 0.5, 4.0;
  const Matrix r = regularize_covariance(s);
  CHECK(r(0, 1) == 0.5);
  CHECK(r(0, 0) - 2.0 == doctest::Approx(kCovarianceRidge * 3.0));
  CHECK(r(1, 1) - 4.0 <= kCovarianceRidge * 3.0 * (1 + 1e-9));
  const Matrix z = regularize_covariance(Matrix::Zero(3, 3));
  CHECK(z == Matrix::Identity(3, 3) * kCovarianceRidge);
}

TEST_CASE("adaptive_blend endpoints and affine structure") {
  std::mt19937_64 rng(2);
  const auto src_seq = two_class_blobs(rng, 50, 3.0);
  const auto cal_seq = two_class_blobs(rng, 10, 0.0);
  const auto src = fit_gaussian_stats(src_seq, 2);
  const auto cal = fit_gaussian_stats(cal_seq, 2);
  const Vector priors = class_log_priors(cal, false);
  const auto test = two_class_blobs(rng, 100, 1.0);

  for (auto kind : {DiscriminantKind::kLda, DiscriminantKind::kQda}) {
    const auto cal_only = fit_discriminant(cal, priors, kind);
    const auto src_only = fit_discriminant(src, priors, kind);
    const auto hi = adaptive_blend(src, cal, 1.0, 1.0, kind);
    const auto lo = adaptive_blend(src, cal, 0.0, 0.0, kind);
    CHECK(discriminant_predict_labels(hi, test.features) ==
          discriminant_predict_labels(cal_only, test.features));
    CHECK(discriminant_predict_labels(lo, test.features) ==
          discriminant_predict_labels(src_only, test.features));

    const auto m0 = adaptive_blend(src, cal, 0.0, 0.3, kind);
    const auto m1 = adaptive_blend(src, cal, 1.0, 0.3, kind);
    const auto mt = adaptive_blend(src, cal, 0.3, 0.3, kind);
    const auto l0 = adaptive_blend(src, cal, 0.3, 0.0, kind);
    const auto l1 = adaptive_blend(src, cal, 0.3, 1.0, kind);
    for (int c = 0; c < 2; ++c) {
      const auto i = static_cast<size_t>(c);
      CHECK(mt.means()[i].isApprox(0.3 * m1.means()[i] + 0.7 * m0.means()[i], 1e-12));
      // Ridge is trace relative, so compare before regularization via the raw blend.
      const Matrix want = 0.3 * (kind == DiscriminantKind::kLda ? cal.pooled : cal.covariances[i]) +
                          0.7 * (kind == DiscriminantKind::kLda ? src.pooled : src.covariances[i]);
      CHECK(mt.covariance(c).isApprox(regularize_covariance(want), 1e-12));
      CHECK(l0.covariance(c).isApprox(
          regularize_covariance(kind == DiscriminantKind::kLda ? src.pooled : src.covariances[i]),
          1e-12));
      CHECK(l1.covariance(c).isApprox(
          regularize_covariance(kind == DiscriminantKind::kLda ? cal.pooled : cal.covariances[i]),
          1e-12));
    }
  }

  const auto s1 = fit_gaussian_stats(scalar_sequence({0.0, 0.0}), 1);
  const auto c1 = fit_gaussian_stats(scalar_sequence({2.0, 2.0}), 1);
  CHECK(adaptive_blend(s1, c1, 0.25, 0.5, DiscriminantKind::kLda).means()[0][0] == 0.5);

  CHECK_THROWS_AS(adaptive_blend(src, cal, 1.1, 0.5, DiscriminantKind::kLda), ConfigError);
  CHECK_THROWS_AS(adaptive_blend(src, cal, 0.5, -0.1, DiscriminantKind::kQda), ConfigError);
}

TEST_CASE("discriminant_predict symmetry, normalization, separable data") {
  std::vector<Vector> means{Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  const Vector priors = Vector::Constant(2, std::log(0.5));
  DiscriminantModel lda(DiscriminantKind::kLda, means, {Matrix::Identity(1, 1)}, priors);
  const auto p = discriminant_predict(lda, Vector::Zero(1));
  CHECK(p.probabilities[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.label == 1);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> wide(0.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const auto q = discriminant_predict(lda, Vector::Constant(1, wide(rng)));
    CHECK(std::abs(q.probabilities.sum() - 1.0) < 1e-12);
  }
  CHECK(discriminant_predict(lda, Vector::Constant(1, 1e300)).probabilities.allFinite());

  // 1-D separable classes: {-3,-2,-1} and {1,2,3.5}.
  Matrix x(6, 1);
  x << -3, -2, -1, 1, 2, 3.5;
  const auto cal = make_sequence(x, {1, 1, 1, 2, 2, 2});
  const auto stats = fit_gaussian_stats(cal, 2);
  const auto qda = adaptive_blend(stats, stats, 1.0, 1.0, DiscriminantKind::kQda);
  CHECK(discriminant_predict_labels(qda, x) == cal.labels);
}

TEST_CASE("temporal_halves splits each class in time order") {
  Matrix x = Matrix::Zero(7, 1);
  for (int i = 0; i < 7; ++i) x(i, 0) = i;
  const auto cal = make_sequence(x, {1, 1, 1, 1, 2, 2, 2});
  const auto [a, b] = temporal_halves(cal, 2);
  CHECK(a.labels == std::vector<int>{1, 1, 2});
  CHECK(a.features(2, 0) == 4.0);
  CHECK(b.labels == std::vector<int>{1, 1, 2, 2});
  CHECK(b.features(0, 0) == 2.0);
}

TEST_CASE("grid_search_cv enumerates 121 points deterministically with ordered ties") {
  std::mt19937_64 rng(5);
  const auto src = fit_gaussian_stats(two_class_blobs(rng, 100, 0.0), 2);
  const auto cal = two_class_blobs(rng, 12, 0.0);
  for (auto kind : {DiscriminantKind::kLda, DiscriminantKind::kQda}) {
    const auto a = grid_search_cv(cal, src, kind);
    const auto b = grid_search_cv(cal, src, kind);
    CHECK(a.status == GridSearchStatus::kOk);
    CHECK(a.evaluated.size() == 121);
    CHECK(a.tau == b.tau);
    CHECK(a.lambda == b.lambda);
    double best = -1.0;
    GridPoint first{};
    for (const auto& g : a.evaluated) {
      if (g.score > best) {
        best = g.score;
        first = g;
      }
    }
    CHECK(a.tau == first.tau);
    CHECK(a.lambda == first.lambda);
  }
  CHECK(blend_grid().size() == 11);
  CHECK(blend_grid().front() == 0.0);
  CHECK(blend_grid().back() == 1.0);
}

TEST_CASE("grid_search_cv picks tau = 1 when source means are far off") {
  std::mt19937_64 rng(6);
  // Source classes swapped and shifted far away: any source weight on the
  // means misclassifies the held-out calibration fold.
  auto src_seq = two_class_blobs(rng, 100, 40.0);
  for (int& l : src_seq.labels) l = 3 - l;
  const auto src = fit_gaussian_stats(src_seq, 2);
  const auto cal = two_class_blobs(rng, 20, 0.0, 6.0);
  const auto res = grid_search_cv(cal, src, DiscriminantKind::kLda);
  // Brute force: every tau < 1 scores worse than the best tau = 1 point.
  double best_tau1 = 0.0;
  double best_other = 0.0;
  for (const auto& g : res.evaluated) {
    (g.tau == 1.0 ? best_tau1 : best_other) =
        std::max(g.tau == 1.0 ? best_tau1 : best_other, g.score);
  }
  CHECK(best_tau1 > best_other);
  CHECK(res.tau == 1.0);
}

TEST_CASE("grid_search_cv falls back on tiny calibration sets") {
  std::mt19937_64 rng(7);
  const auto src = fit_gaussian_stats(two_class_blobs(rng, 20, 0.0), 2);
  const auto cal = make_sequence(Matrix::Random(2, 2), {1, 2});
  const auto res = grid_search_cv(cal, src, DiscriminantKind::kQda);
  CHECK(res.status == GridSearchStatus::kFallbackTooSmall);
  CHECK(res.tau == 0.0);
  CHECK(res.lambda == 0.0);
}

TEST_CASE("QDA copes with missing classes and singular covariances") {
  std::mt19937_64 rng(8);
  const auto src = fit_gaussian_stats(random_sequence(rng, 200, 3, 3), 3);
  // Calibration holds only class 1, with one repeated point.
  const auto cal = make_sequence(Matrix::Ones(4, 3), {1, 1, 1, 1});
  const auto cal_stats = fit_gaussian_stats(cal, 3);
  const auto model = adaptive_blend(src, cal_stats, 1.0, 1.0, DiscriminantKind::kQda);
  for (int c = 0; c < 3; ++c) CHECK(is_spd(model.covariance(c)));
  const auto res = grid_search_cv(cal, src, DiscriminantKind::kQda);
  CHECK(res.status == GridSearchStatus::kOk);
  const auto p = discriminant_predict(model, Vector::Constant(3, 1.0));
  CHECK(p.probabilities.allFinite());
}
