#include <doctest.h>

#include <cmath>

#include "fedol/errors.hpp"
#include "fedol/matrix.hpp"
#include "fedol/mlp.hpp"
#include "fedol/prob.hpp"
#include "test_util.hpp"

using namespace fedol;

TEST_CASE("matrix basics") {
  Matrix m(2, 3, 1.5);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  m(1, 2) = -4.0;
  CHECK(m(1, 2) == -4.0);
  CHECK(m.all_finite());
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
  CHECK_THROWS_AS(m.require_finite("test"), NumericError);

  CHECK_THROWS_AS(Matrix::from_rows({{1.0, 2.0}, {3.0}}), ShapeError);
}

TEST_CASE("softmax examples") {
  const auto even = softmax(std::vector<double>{0.0, 0.0});
  CHECK(even[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(even[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Shift stabilization: huge equal logits must not overflow.
  const auto big = softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(big[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  const auto p = softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(p[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(p[2] == doctest::Approx(0.66524096).epsilon(1e-7));

  CHECK_THROWS_AS(softmax(std::vector<double>{}), PreconditionError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(softmax(std::vector<double>{std::numeric_limits<double>::infinity()}),
                  NumericError);
}

TEST_CASE("softmax properties: normalization and shift invariance") {
  testutil::TestRand rng(3);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> logits(n), shifted(n);
    const double shift = rng.uniform(-50.0, 50.0);
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = rng.uniform(-10.0, 10.0);
      shifted[i] = logits[i] + shift;
    }
    const auto p = softmax(logits);
    const auto q = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i];
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(argmax(p) == argmax(q));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-9);
  }
}

TEST_CASE("entropy examples and bounds") {
  CHECK(entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(0.6931472).epsilon(1e-7));
  CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(1.3862944).epsilon(1e-7));

  testutil::TestRand rng(5);
  for (int it = 0; it < 100; ++it) {
    const std::size_t c = 2 + rng.index(6);
    const auto p = testutil::random_distribution(rng, c);
    const double h = entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(c)) + 1e-12);
  }
  // Uniform attains the maximum.
  const std::vector<double> uniform(5, 0.2);
  CHECK(entropy(uniform) == doctest::Approx(std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("cross_entropy examples") {
  const std::vector<double> onehot{1.0, 0.0};
  CHECK(cross_entropy(onehot, onehot) == 0.0);
  CHECK(cross_entropy(onehot, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.6931472).epsilon(1e-7));
  const std::vector<double> coin{0.5, 0.5};
  CHECK(cross_entropy(coin, coin) == doctest::Approx(0.6931472).epsilon(1e-7));
  CHECK_THROWS_AS(cross_entropy(onehot, std::vector<double>{1.0, 0.0, 0.0}), ShapeError);
}

TEST_CASE("kl examples and nonnegativity") {
  const std::vector<double> p{0.3, 0.7};
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.6931472).epsilon(1e-7));
  CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{1.0}), ShapeError);

  testutil::TestRand rng(7);
  for (int it = 0; it < 200; ++it) {
    const std::size_t c = 2 + rng.index(6);
    const auto a = testutil::random_distribution(rng, c);
    const auto b = testutil::random_distribution(rng, c);
    CHECK(kl_divergence(a, b) >= -1e-12);
    // CE(p, q) = KL(p || q) + H(p)
    CHECK(std::abs(cross_entropy(a, b) - (kl_divergence(a, b) + entropy(a))) < 1e-9);
  }
}

TEST_CASE("forward pass on hand-built models") {
  SUBCASE("zero model gives zero logits") {
    MlpModel model = init_mlp({3, 4, 2}, Activation::relu, 0);
    for (auto& w : model.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
    Matrix batch(5, 3, 1.0);
    const Matrix logits = forward(model, batch);
    for (double v : logits.data()) CHECK(v == 0.0);
  }
  SUBCASE("identity single layer passes input through") {
    MlpModel model = init_mlp({2, 2}, Activation::relu, 0);
    std::fill(model.weights[0].data().begin(), model.weights[0].data().end(), 0.0);
    model.weights[0](0, 0) = 1.0;
    model.weights[0](1, 1) = 1.0;
    const Matrix batch = Matrix::from_rows({{0.3, -0.8}, {2.0, 5.0}});
    CHECK(forward(model, batch) == batch);
  }
  SUBCASE("matches an independent hand-rolled pass") {
    const MlpModel model = init_mlp({2, 3, 2}, Activation::relu, 42);
    const Matrix batch = Matrix::from_rows({{0.5, -1.0}});
    // By-hand forward with scalar loops over the same parameters.
    std::vector<double> h(3);
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = model.biases[0][o];
      acc += model.weights[0](o, 0) * 0.5 + model.weights[0](o, 1) * -1.0;
      h[o] = std::max(acc, 0.0);
    }
    std::vector<double> z(2);
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = model.biases[1][o];
      for (std::size_t j = 0; j < 3; ++j) acc += model.weights[1](o, j) * h[j];
      z[o] = acc;
    }
    const Matrix logits = forward(model, batch);
    CHECK(logits(0, 0) == doctest::Approx(z[0]).epsilon(1e-12));
    CHECK(logits(0, 1) == doctest::Approx(z[1]).epsilon(1e-12));
  }
  SUBCASE("shape mismatch throws") {
    const MlpModel model = init_mlp({3, 2}, Activation::relu, 0);
    CHECK_THROWS_AS(forward(model, Matrix(1, 4)), ShapeError);
  }
}

TEST_CASE("supervised cross-entropy gradient matches finite differences") {
  testutil::TestRand rng(11);
  const std::vector<std::vector<std::size_t>> shapes = {
      {2, 2}, {3, 5, 2}, {4, 6, 3, 3}};
  for (const auto& shape : shapes) {
    for (Activation act : {Activation::relu, Activation::tanh}) {
      MlpModel model = init_mlp(shape, act, 77);
      const std::size_t n = 6;
      Matrix x(n, shape.front());
      for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
      std::vector<std::size_t> labels(n);
      for (auto& l : labels) l = rng.index(shape.back());
      const Matrix y = one_hot(labels, shape.back());

      const auto loss_at = [&]() {
        const Matrix logits = forward(model, x);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          loss += cross_entropy(y.row(i), softmax(logits.row(i)).values) / n;
        }
        return loss;
      };

      // Analytic gradient through the library's backprop.
      const ForwardTrace trace = forward_trace(model, x);
      Matrix probs = trace.logits;
      softmax_rows(probs);
      Matrix dlogits(n, shape.back());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < shape.back(); ++c) {
          dlogits(i, c) = (probs(i, c) - y(i, c)) / n;
        }
      }
      const Gradients grads = backward(model, x, trace, dlogits);

      double max_rel = 0.0;
      for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (std::size_t i = 0; i < model.weights[l].data().size(); ++i) {
          double& w = model.weights[l].data()[i];
          const double fd = testutil::central_difference(
              [&](double v) {
                const double saved = w;
                w = v;
                const double out = loss_at();
                w = saved;
                return out;
              },
              w);
          max_rel =
              std::max(max_rel, testutil::relative_error(grads.weights[l].data()[i], fd));
        }
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
          double& b = model.biases[l][i];
          const double fd = testutil::central_difference(
              [&](double v) {
                const double saved = b;
                b = v;
                const double out = loss_at();
                b = saved;
                return out;
              },
              b);
          max_rel = std::max(max_rel, testutil::relative_error(grads.biases[l][i], fd));
        }
      }
      CHECK(max_rel < 1e-4);
    }
  }
}

namespace {

// Two separable 2-D blobs, 20 points each.
fedol::Matrix blob_features(std::vector<std::size_t>& labels) {
  testutil::TestRand rng(404);
  fedol::Matrix x(40, 2);
  labels.resize(40);
  for (std::size_t i = 0; i < 40; ++i) {
    const bool second = i >= 20;
    const double cx = second ? 3.0 : -3.0;
    x(i, 0) = cx + rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    labels[i] = second ? 1 : 0;
  }
  return x;
}

// Plain logistic regression trained by gradient descent, used as the
// independent separability oracle.
double logistic_oracle_accuracy(const fedol::Matrix& x, const std::vector<std::size_t>& y) {
  double w0 = 0.0, w1 = 0.0, b = 0.0;
  for (int step = 0; step < 2000; ++step) {
    double g0 = 0.0, g1 = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double z = w0 * x(i, 0) + w1 * x(i, 1) + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double d = p - static_cast<double>(y[i]);
      g0 += d * x(i, 0);
      g1 += d * x(i, 1);
      gb += d;
    }
    w0 -= 0.05 * g0 / x.rows();
    w1 -= 0.05 * g1 / x.rows();
    b -= 0.05 * gb / x.rows();
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = w0 * x(i, 0) + w1 * x(i, 1) + b;
    if ((z > 0.0 ? 1u : 0u) == y[i]) ++hits;
  }
  return static_cast<double>(hits) / x.rows();
}

}  // namespace

TEST_CASE("train_supervised fits separable blobs") {
  std::vector<std::size_t> labels;
  const Matrix x = blob_features(labels);
  REQUIRE(logistic_oracle_accuracy(x, labels) >= 0.95);

  MlpModel model = init_mlp({2, 8, 2}, Activation::relu, 1);
  const TrainConfig cfg{50, 8, 0.05, 2};
  model = train_supervised(std::move(model), x, one_hot(labels, 2), cfg);
  CHECK(accuracy(model, x, labels) >= 0.95);
}

TEST_CASE("train_supervised edge cases") {
  const Matrix x = Matrix::from_rows({{0.1, 0.2}});
  const Matrix y = Matrix::from_rows({{1.0, 0.0}});

  SUBCASE("empty dataset is a precondition error") {
    MlpModel model = init_mlp({2, 2}, Activation::relu, 0);
    CHECK_THROWS_AS(train_supervised(std::move(model), Matrix(0, 2), Matrix(0, 2), {}),
                    PreconditionError);
  }
  SUBCASE("zero epochs is a precondition error") {
    MlpModel model = init_mlp({2, 2}, Activation::relu, 0);
    CHECK_THROWS_AS(train_supervised(std::move(model), x, y, {0, 1, 0.1, 0}),
                    PreconditionError);
  }
  SUBCASE("zero learning rate is a precondition error") {
    MlpModel model = init_mlp({2, 2}, Activation::relu, 0);
    CHECK_THROWS_AS(train_supervised(std::move(model), x, y, {1, 1, 0.0, 0}),
                    PreconditionError);
  }
  SUBCASE("tiny learning rate changes the model only negligibly") {
    const MlpModel init = init_mlp({2, 2}, Activation::relu, 0);
    MlpModel trained = train_supervised(init, x, y, {1, 1, 1e-300, 0});
    for (std::size_t l = 0; l < init.num_layers(); ++l) {
      for (std::size_t i = 0; i < init.weights[l].data().size(); ++i) {
        CHECK(trained.weights[l].data()[i] ==
              doctest::Approx(init.weights[l].data()[i]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("huge learning rate diverges with the expected error") {
    std::vector<std::size_t> labels;
    const Matrix blobs = blob_features(labels);
    MlpModel model = init_mlp({2, 8, 2}, Activation::relu, 3);
    CHECK_THROWS_AS(
        train_supervised(std::move(model), blobs, one_hot(labels, 2), {50, 4, 1e12, 0}),
        TrainingDivergedError);
  }
}

TEST_CASE("train_supervised is bit-deterministic") {
  std::vector<std::size_t> labels;
  const Matrix x = blob_features(labels);
  const Matrix y = one_hot(labels, 2);
  const TrainConfig cfg{10, 8, 0.05, 9};

  const MlpModel a = train_supervised(init_mlp({2, 6, 2}, Activation::relu, 4), x, y, cfg);
  const MlpModel b = train_supervised(init_mlp({2, 6, 2}, Activation::relu, 4), x, y, cfg);
  CHECK(a == b);
}
