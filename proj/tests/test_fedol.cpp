#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedol/errors.hpp"
#include "fedol/fedol.hpp"
#include "fedol/prob.hpp"
#include "oracle_pseudo_labels.hpp"
#include "test_util.hpp"

using namespace fedol;

namespace {

std::vector<PredictionUpload> uploads_from(const std::vector<Matrix>& matrices) {
  std::vector<PredictionUpload> uploads;
  for (std::size_t k = 0; k < matrices.size(); ++k) uploads.push_back({k, matrices[k]});
  return uploads;
}

}  // namespace

TEST_CASE("class_confidence is the column mean") {
  Matrix uniform(3, 4, 0.25);
  auto c = class_confidence(uniform);
  for (double s : c.scores) CHECK(s == doctest::Approx(0.25).epsilon(1e-12));

  const Matrix two = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  auto c2 = class_confidence(two);
  CHECK(c2.scores[0] == doctest::Approx(0.5));
  CHECK(c2.scores[1] == doctest::Approx(0.5));

  const Matrix three = Matrix::from_rows({{0.9, 0.1}, {0.6, 0.4}, {0.3, 0.7}});
  auto c3 = class_confidence(three);
  CHECK(c3.scores[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(c3.scores[1] == doctest::Approx(0.4).epsilon(1e-12));

  CHECK_THROWS_AS(class_confidence(Matrix(0, 3)), PreconditionError);
}

TEST_CASE("class_confidence sums to 1") {
  testutil::TestRand rng(11);
  for (int it = 0; it < 20; ++it) {
    const Matrix m = testutil::random_prob_matrix(rng, 1 + rng.index(30), 2 + rng.index(6));
    auto c = class_confidence(m);
    double sum = 0.0;
    for (double s : c.scores) sum += s;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("entropy_baseline order statistics") {
  // Rows with entropies 0.1 < 0.2 < 0.3 < 0.4 are awkward to construct
  // exactly, so check against independently sorted row entropies instead.
  testutil::TestRand rng(7);
  const Matrix m = testutil::random_prob_matrix(rng, 4, 3);
  std::vector<double> h;
  for (std::size_t i = 0; i < 4; ++i) h.push_back(entropy(m.row(i)));
  std::vector<double> sorted = h;
  std::sort(sorted.begin(), sorted.end());

  CHECK(entropy_baseline(m, 1.0) == sorted[3]);   // max entropy: everyone admitted
  CHECK(entropy_baseline(m, 0.5) == sorted[1]);   // ceil(2) = 2nd smallest
  CHECK(entropy_baseline(m, 0.1) == sorted[0]);   // ceil(0.4) = 1
  CHECK_THROWS_AS(entropy_baseline(m, 0.0), PreconditionError);
  CHECK_THROWS_AS(entropy_baseline(m, 1.5), PreconditionError);
}

TEST_CASE("entropy_baseline is non-decreasing in rho") {
  testutil::TestRand rng(13);
  for (int it = 0; it < 10; ++it) {
    const Matrix m = testutil::random_prob_matrix(rng, 5 + rng.index(40), 2 + rng.index(5));
    double prev = -1.0;
    for (double rho = 0.1; rho <= 1.0; rho += 0.05) {
      const double b = entropy_baseline(m, rho);
      CHECK(b >= prev);
      prev = b;
    }
  }
}

TEST_CASE("reliable_set compares entropy against per-model baselines") {
  const std::vector<std::vector<double>> probs = {
      {0.99, 0.01},  // low entropy
      {0.5, 0.5},    // max entropy ln 2
  };
  const double inf = std::numeric_limits<double>::infinity();

  CHECK(reliable_set(probs, {inf, inf}) == std::vector<std::size_t>{0, 1});
  CHECK(reliable_set(probs, {-1.0, -1.0}).empty());
  // A in (entropy below baseline), B out (entropy above baseline).
  CHECK(reliable_set(probs, {0.2, 0.4}) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(reliable_set(probs, {1.0}), ShapeError);
}

TEST_CASE("vote_vector endorses the argmax and rejects the rest") {
  CHECK(vote_vector(std::vector<double>{0.7, 0.2, 0.1}) == std::vector<int>{1, -1, -1});
  CHECK(vote_vector(std::vector<double>{0.5, 0.5}) == std::vector<int>{1, -1});
  CHECK(vote_vector(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
        std::vector<int>{1, -1, -1, -1});
}

TEST_CASE("aggregate_vote weighted examples") {
  SUBCASE("single model: weights cancel") {
    const std::vector<std::vector<int>> votes = {{1, -1, -1}};
    const std::vector<ClassConfidence> conf = {{{0.5, 0.3, 0.2}}};
    const auto g = aggregate_vote(votes, conf);
    CHECK(g == std::vector<double>{1.0, -1.0, -1.0});
  }
  SUBCASE("opposite votes with equal confidence cancel to zero") {
    const std::vector<std::vector<int>> votes = {{1, -1}, {-1, 1}};
    const std::vector<ClassConfidence> conf = {{{0.5, 0.5}}, {{0.5, 0.5}}};
    const auto g = aggregate_vote(votes, conf);
    CHECK(g[0] == doctest::Approx(0.0));
    CHECK(g[1] == doctest::Approx(0.0));
  }
  SUBCASE("hand-evaluated weighted vote") {
    const std::vector<std::vector<int>> votes = {{1, -1}, {-1, 1}};
    const std::vector<ClassConfidence> conf = {{{0.8, 0.2}}, {{0.4, 0.6}}};
    const auto g = aggregate_vote(votes, conf);
    CHECK(g[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("zero confidence mass on a class rejects it") {
    const std::vector<std::vector<int>> votes = {{1, -1}};
    const std::vector<ClassConfidence> conf = {{{1.0, 0.0}}};
    const auto g = aggregate_vote(votes, conf);
    CHECK(g[1] == -1.0);
  }
  CHECK_THROWS_AS(aggregate_vote({}, {}), PreconditionError);
}

TEST_CASE("aggregate_vote components stay in [-1, 1]") {
  testutil::TestRand rng(17);
  for (int it = 0; it < 50; ++it) {
    const std::size_t classes = 2 + rng.index(5);
    const std::size_t models = 1 + rng.index(4);
    std::vector<std::vector<int>> votes;
    std::vector<ClassConfidence> conf;
    for (std::size_t m = 0; m < models; ++m) {
      const auto p = testutil::random_distribution(rng, classes);
      votes.push_back(vote_vector(p));
      conf.push_back({testutil::random_distribution(rng, classes)});
    }
    for (double g : aggregate_vote(votes, conf)) {
      CHECK(g >= -1.0 - 1e-12);
      CHECK(g <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("generate_pseudo_labels basic gate semantics") {
  SUBCASE("one confident client labels everything at rho = 1") {
    Matrix probs(6, 3);
    for (std::size_t i = 0; i < 6; ++i) {
      probs(i, 0) = 0.05;
      probs(i, 1) = 0.05;
      probs(i, 2) = 0.9;
    }
    const auto pseudo =
        generate_pseudo_labels({probs}, {class_confidence(probs)}, 1.0);
    for (const auto& l : pseudo.labels) {
      REQUIRE(l.has_value());
      CHECK(*l == 2);
    }
    CHECK(pseudo.abstain_fraction() == 0.0);
  }
  SUBCASE("tiny rho admits only each model's single most confident sample") {
    // Entropies strictly increase with row index; rho small -> only row 0 clears.
    Matrix probs = Matrix::from_rows({{0.99, 0.01}, {0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}});
    const auto pseudo =
        generate_pseudo_labels({probs}, {class_confidence(probs)}, 0.01);
    CHECK(pseudo.labels[0].has_value());
    for (std::size_t i = 1; i < 4; ++i) CHECK_FALSE(pseudo.labels[i].has_value());
    CHECK(pseudo.abstain_count() == 3);
  }
}

TEST_CASE("generate_pseudo_labels satisfies the one-hot-or-zero constraint") {
  testutil::TestRand rng(23);
  for (int it = 0; it < 20; ++it) {
    const std::size_t n = 5 + rng.index(30);
    const std::size_t classes = 2 + rng.index(4);
    const std::size_t models = 1 + rng.index(4);
    std::vector<Matrix> sources;
    std::vector<ClassConfidence> conf;
    for (std::size_t m = 0; m < models; ++m) {
      sources.push_back(testutil::random_prob_matrix(rng, n, classes));
      conf.push_back(class_confidence(sources.back()));
    }
    const double rho = rng.uniform(0.05, 1.0);
    const auto pseudo = generate_pseudo_labels(sources, conf, rho);
    REQUIRE(pseudo.size() == n);
    for (const auto& l : pseudo.labels) {
      if (l.has_value()) CHECK(*l < classes);
    }
  }
}

TEST_CASE("generate_pseudo_labels matches the brute-force reference") {
  testutil::TestRand rng(2024);
  for (int instance = 0; instance < 60; ++instance) {
    const std::size_t n = 1 + rng.index(50);
    const std::size_t classes = 2 + rng.index(4);   // <= 5
    const std::size_t models = 1 + rng.index(4);    // <= 4
    const double rho = rng.uniform(0.05, 0.95);

    std::vector<std::vector<std::vector<double>>> raw(models);
    std::vector<std::vector<double>> raw_conf(models);
    std::vector<Matrix> sources;
    std::vector<ClassConfidence> conf;
    for (std::size_t m = 0; m < models; ++m) {
      raw[m].resize(n);
      Matrix mat(n, classes);
      for (std::size_t i = 0; i < n; ++i) {
        raw[m][i] = testutil::random_distribution(rng, classes);
        std::copy(raw[m][i].begin(), raw[m][i].end(), mat.row(i).begin());
      }
      // Column means computed by the test, handed identically to both sides.
      std::vector<double> cc(classes, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < classes; ++c) cc[c] += raw[m][i][c];
      }
      for (double& v : cc) v /= static_cast<double>(n);
      raw_conf[m] = cc;
      sources.push_back(std::move(mat));
      conf.push_back({cc});
    }

    const auto expected = oracle::pseudo_labels(raw, raw_conf, rho);
    const auto actual = generate_pseudo_labels(sources, conf, rho);
    REQUIRE(actual.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      if (expected[i] == oracle::kAbstain) {
        CHECK_FALSE(actual.labels[i].has_value());
      } else {
        REQUIRE(actual.labels[i].has_value());
        CHECK(*actual.labels[i] == expected[i]);
      }
    }
  }
}

TEST_CASE("distill_weights closed forms") {
  testutil::TestRand rng(31);

  SUBCASE("single client gets weight 1") {
    const auto probs = testutil::random_prob_matrix(rng, 3, 4);
    const auto w = distill_weights(uploads_from({probs}), 1);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == doctest::Approx(1.0));
  }
  SUBCASE("identical entropies share weight equally") {
    Matrix uniform(2, 4, 0.25);
    const auto w = distill_weights(uploads_from({uniform, uniform, uniform}), 0);
    for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("entropies (0, ln 2) split 2/3 vs 1/3") {
    const Matrix confident = Matrix::from_rows({{1.0, 0.0}});
    const Matrix coin = Matrix::from_rows({{0.5, 0.5}});
    const auto w = distill_weights(uploads_from({confident, coin}), 0);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
}

TEST_CASE("distill_weights sum to 1 and are permutation-equivariant") {
  testutil::TestRand rng(37);
  for (int it = 0; it < 20; ++it) {
    const std::size_t k = 2 + rng.index(4);
    std::vector<Matrix> probs;
    for (std::size_t m = 0; m < k; ++m) {
      probs.push_back(testutil::random_prob_matrix(rng, 4, 3));
    }
    const auto w = distill_weights(uploads_from(probs), 2);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    std::vector<Matrix> rotated(probs.begin() + 1, probs.end());
    rotated.push_back(probs.front());
    const auto w2 = distill_weights(uploads_from(rotated), 2);
    for (std::size_t m = 0; m < k; ++m) {
      CHECK(w2[(m + k - 1) % k] == doctest::Approx(w[m]).epsilon(1e-12));
    }
  }
}

TEST_CASE("server_loss zero cases") {
  testutil::TestRand rng(41);
  Matrix features(5, 3);
  for (double& v : features.data()) v = rng.uniform(-1.0, 1.0);
  const MlpModel server = init_mlp({3, 4, 2}, Activation::relu, 99);

  Matrix server_probs = forward(server, features);
  softmax_rows(server_probs);

  PseudoLabelSet all_abstain;
  all_abstain.labels.resize(5);

  SUBCASE("teacher equals server and tau = 0 gives exactly zero") {
    const auto loss =
        server_loss(server, features, uploads_from({server_probs}), all_abstain, 0.0);
    CHECK(loss.total == 0.0);
    CHECK(loss.distill == 0.0);
  }
  SUBCASE("all abstained labels leave only the distillation term") {
    const Matrix teacher = testutil::random_prob_matrix(rng, 5, 2);
    const auto loss =
        server_loss(server, features, uploads_from({teacher}), all_abstain, 0.7);
    CHECK(loss.pseudo == 0.0);
    CHECK(loss.total == doctest::Approx(loss.distill).epsilon(1e-12));
    CHECK(loss.total >= 0.0);
  }
}

TEST_CASE("server_loss gradient matches central finite differences") {
  testutil::TestRand rng(43);
  for (int instance = 0; instance < 5; ++instance) {
    const std::size_t n = 4 + rng.index(6);
    const std::size_t dims = 2 + rng.index(3);
    const std::size_t classes = 2 + rng.index(3);
    const std::size_t k = 1 + rng.index(3);

    Matrix features(n, dims);
    for (double& v : features.data()) v = rng.uniform(-1.5, 1.5);
    std::vector<Matrix> teacher;
    for (std::size_t m = 0; m < k; ++m) {
      teacher.push_back(testutil::random_prob_matrix(rng, n, classes));
    }
    const auto uploads = uploads_from(teacher);

    PseudoLabelSet pseudo;
    pseudo.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform01() < 0.7) pseudo.labels[i] = rng.index(classes);
    }
    const double tau = rng.uniform(0.0, 1.0);

    MlpModel server = init_mlp({dims, 5, classes}, Activation::tanh,
                               1000 + static_cast<std::uint64_t>(instance));
    const auto analytic = server_loss(server, features, uploads, pseudo, tau);

    double max_rel = 0.0;
    for (std::size_t l = 0; l < server.num_layers(); ++l) {
      for (std::size_t i = 0; i < server.weights[l].data().size(); ++i) {
        double& w = server.weights[l].data()[i];
        const double fd = testutil::central_difference(
            [&](double x) {
              const double saved = w;
              w = x;
              const double v = server_loss(server, features, uploads, pseudo, tau).total;
              w = saved;
              return v;
            },
            w);
        max_rel = std::max(max_rel,
                           testutil::relative_error(analytic.grad.weights[l].data()[i], fd));
      }
      for (std::size_t i = 0; i < server.biases[l].size(); ++i) {
        double& b = server.biases[l][i];
        const double fd = testutil::central_difference(
            [&](double x) {
              const double saved = b;
              b = x;
              const double v = server_loss(server, features, uploads, pseudo, tau).total;
              b = saved;
              return v;
            },
            b);
        max_rel =
            std::max(max_rel, testutil::relative_error(analytic.grad.biases[l][i], fd));
      }
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("rho schedule anneals from rho_start and caps at 1") {
  const RhoSchedule s{0.1, 0.05};
  CHECK(s.at(0) == doctest::Approx(0.1));
  CHECK(s.at(1) == doctest::Approx(0.15));
  CHECK(s.at(9) == doctest::Approx(0.55));
  CHECK(s.at(100) == 1.0);
}

TEST_CASE("run_fedol is deterministic") {
  testutil::TestRand rng(53);
  Matrix features(20, 4);
  for (double& v : features.data()) v = rng.uniform(-2.0, 2.0);
  std::vector<Matrix> teacher = {testutil::random_prob_matrix(rng, 20, 3),
                                 testutil::random_prob_matrix(rng, 20, 3)};
  const auto uploads = uploads_from(teacher);

  FedolOptions opt;
  opt.server_arch = {4, 8, 3};
  opt.iterations = 3;
  opt.train = {5, 8, 0.01, 0};
  opt.seed = 7;

  const FedolResult a = run_fedol(uploads, features, opt);
  const FedolResult b = run_fedol(uploads, features, opt);
  CHECK(a.server == b.server);
  REQUIRE(a.history.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(a.history[t].distill_loss == b.history[t].distill_loss);
    CHECK(a.history[t].pseudo_loss == b.history[t].pseudo_loss);
  }
}

TEST_CASE("run_fedol with tau 0 and all-abstain labels is pure distillation") {
  // A single teacher whose rows all share one entropy value: with rho = 1 every
  // sample is admitted, so instead force abstention by tau = 0 comparison.
  testutil::TestRand rng(59);
  Matrix features(16, 3);
  for (double& v : features.data()) v = rng.uniform(-1.0, 1.0);
  const auto teacher = testutil::random_prob_matrix(rng, 16, 3);
  const auto uploads = uploads_from({teacher});

  FedolOptions opt;
  opt.server_arch = {3, 6, 3};
  opt.iterations = 2;
  opt.tau = 0.0;
  opt.train = {4, 8, 0.01, 0};
  opt.seed = 11;

  // Reference run: same seeds, tau 0 but rho forced so low that only a couple
  // of samples receive labels; with tau = 0 those labels must not matter.
  FedolOptions opt_low_rho = opt;
  opt_low_rho.schedule = {0.01, 0.0};

  const FedolResult a = run_fedol(uploads, features, opt);
  const FedolResult b = run_fedol(uploads, features, opt_low_rho);
  CHECK(a.server == b.server);
}

TEST_CASE("single-teacher distillation roughly transfers accuracy") {
  // Regression sanity run: a well-trained client teaches a fresh server
  // through one fedol iteration on a separable pool.
  const Dataset ds = make_synthetic(3, 4, 60, 6.0, 505);
  auto [test, rest] = split_labeled(ds, 60, 606);
  auto [pub, priv] = split_labeled(rest, 60, 707);

  ClientSpec spec{0, {4, 16, 3}, {60, 16, 0.01, 3}};
  const MlpModel client_model = local_train(spec, priv);
  const double client_acc = accuracy(client_model, test.features, test.labels);
  REQUIRE(client_acc >= 0.9);

  const auto upload = predict_public(0, client_model, pub.features);
  FedolOptions opt;
  opt.server_arch = {4, 24, 3};
  opt.schedule = {1.0, 0.0};
  opt.iterations = 1;
  opt.train = {80, 16, 0.02, 0};
  opt.seed = 21;
  const FedolResult result = run_fedol({upload}, pub.features, opt);
  const double server_acc = accuracy(result.server, test.features, test.labels);
  CHECK(server_acc >= client_acc - 0.05);
}

TEST_CASE("run_fedol rejects bad arguments") {
  Matrix features(4, 2, 0.5);
  FedolOptions opt;
  opt.server_arch = {2, 3};
  CHECK_THROWS_AS(run_fedol({}, features, opt), PreconditionError);

  testutil::TestRand rng(61);
  const auto uploads = uploads_from({testutil::random_prob_matrix(rng, 4, 3)});
  opt.iterations = 0;
  CHECK_THROWS_AS(run_fedol(uploads, features, opt), PreconditionError);
}
