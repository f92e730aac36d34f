#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kgbilm/numcore/grad_check.hpp"
#include "kgbilm/numcore/ops.hpp"

namespace kgbilm {
namespace {

template <class T>
BasicTensor<T> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  BasicTensor<T> t = BasicTensor<T>::matrix(r, c);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor t({2, 3}, std::vector<float>(6, 1.0f));
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Ops, MatmulMatchesTripleLoopExactly) {
  std::mt19937_64 rng(7);
  Tape<float> tape;
  auto a = tape.leaf(random_matrix<float>(3, 4, rng));
  auto b = tape.leaf(random_matrix<float>(4, 2, rng));
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < 4; ++k) acc += a.value()(i, k) * b.value()(k, j);
      EXPECT_EQ(c.value()(i, j), acc);
    }
  }
}

TEST(Ops, MatmulShapeErrorNamesOpAndShapes) {
  Tape<float> tape;
  auto a = tape.leaf(Tensor::matrix(3, 4));
  auto b = tape.leaf(Tensor::matrix(5, 2));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[3, 4]"), std::string::npos);
    EXPECT_NE(msg.find("[5, 2]"), std::string::npos);
  }
}

TEST(Ops, MaskedSoftmaxZeroesMaskedEntry) {
  Tape<float> tape;
  auto s = tape.leaf(Tensor({1, 2}, {0.0f, 0.0f}));
  Tensor mask({1, 2}, {0.0f, masked_value<float>()});
  auto y = masked_softmax(s, mask);
  EXPECT_EQ(y.value()[0], 1.0f);
  EXPECT_EQ(y.value()[1], 0.0f);
}

TEST(Ops, MaskedSoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  Tape<float> tape;
  auto s = tape.leaf(random_matrix<float>(6, 6, rng, 3.0));
  Tensor mask = Tensor::matrix(6, 6);
  std::bernoulli_distribution forbid(0.4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      if (i != j && forbid(rng)) mask(i, j) = masked_value<float>();
    }
  auto y = masked_softmax(s, mask);
  for (std::size_t i = 0; i < 6; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      total += y.value()(i, j);
      if (is_masked(mask(i, j))) {
        EXPECT_EQ(y.value()(i, j), 0.0f);
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Ops, FullyMaskedRowFails) {
  Tape<float> tape;
  auto s = tape.leaf(Tensor::matrix(1, 2));
  Tensor mask({1, 2}, {masked_value<float>(), masked_value<float>()});
  EXPECT_THROW(masked_softmax(s, mask), NumericalError);
}

TEST(Ops, LayerNormOfConstantRowIsZero) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor({1, 4}, {2.5f, 2.5f, 2.5f, 2.5f}));
  auto g = tape.leaf(Tensor({4}, 1.0f));
  auto b = tape.leaf(Tensor({4}, 0.0f));
  auto y = layer_norm(x, g, b);
  for (float v : y.value().data()) EXPECT_EQ(v, 0.0f);
}

TEST(Ops, DropoutZeroIsIdentity) {
  std::mt19937_64 rng(1);
  Tape<float> tape;
  auto x = tape.leaf(random_matrix<float>(4, 4, rng));
  auto y = dropout(x, 0.0, rng);
  EXPECT_EQ(y.value(), x.value());
}

TEST(Ops, DropoutPreservesExpectation) {
  std::mt19937_64 rng(11);
  Tape<float> tape;
  auto x = tape.constant(Tensor({1, 4}, {1.0f, -2.0f, 0.5f, 3.0f}));
  std::vector<double> acc(4, 0.0);
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    Tape<float> t;
    auto xi = t.constant(x.value());
    auto y = dropout(xi, 0.3, rng);
    for (std::size_t i = 0; i < 4; ++i) acc[i] += y.value()[i];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(acc[i] / draws, x.value()[i], 0.02 * std::abs(x.value()[i]));
  }
}

TEST(Backward, SumGivesOnes) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto loss = sum(x);
  tape.backward(loss);
  for (float g : x.grad().data()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SquareOfThree) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor::scalar(3.0f));
  auto loss = mul(x, x);
  tape.backward(loss);
  EXPECT_EQ(x.grad()[0], 6.0f);
}

TEST(Backward, NonScalarLossFails) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor::matrix(2, 2));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor({2}, {1, 2}));
  auto unused = tape.leaf(Tensor({3}, {1, 2, 3}));
  tape.backward(sum(x));
  ASSERT_EQ(unused.grad().shape(), unused.value().shape());
  for (float g : unused.grad().data()) EXPECT_EQ(g, 0.0f);
}

TEST(Backward, SeededBackwardMatchesScalarLoss) {
  // d/dx sum(w * f(x)) via a scalar loss equals backward seeded with w at f(x).
  std::mt19937_64 rng(5);
  const auto xv = random_matrix<double>(3, 4, rng);
  const auto wv = random_matrix<double>(3, 4, rng);
  Tape<double> t1;
  auto x1 = t1.leaf(xv);
  auto y1 = gelu(x1);
  t1.backward(sum(mul(y1, t1.constant(wv))));
  Tape<double> t2;
  auto x2 = t2.leaf(xv);
  auto y2 = gelu(x2);
  Seed<double> seed{y2, wv};
  t2.backward(std::span<const Seed<double>>(&seed, 1));
  for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_NEAR(x1.grad()[i], x2.grad()[i], 1e-14);
}

TEST(GradCheck, SumOfSquaresIsExact) {
  std::mt19937_64 rng(2);
  auto p = random_matrix<double>(3, 3, rng);
  std::vector<NamedParam<double>> params{{"p", &p}};
  LossBuilder<double> f = [](Tape<double>&, const std::vector<Var<double>>& v) {
    return sum(mul(v[0], v[0]));
  };
  auto report = grad_check(f, params, 1e-3);
  EXPECT_LT(report.max_relative_error, 1e-6);
}

TEST(GradCheck, UnusedParameterIsExactlyZero) {
  std::mt19937_64 rng(2);
  auto p = random_matrix<double>(2, 2, rng);
  auto q = random_matrix<double>(2, 2, rng);
  std::vector<NamedParam<double>> params{{"p", &p}, {"q", &q}};
  LossBuilder<double> f = [](Tape<double>&, const std::vector<Var<double>>& v) {
    return sum(mul(v[0], v[0]));
  };
  auto report = grad_check(f, params, 1e-3);
  EXPECT_LT(report.max_relative_error, 1e-6);
  Tape<double> tape;
  auto a = tape.leaf(p);
  auto b = tape.leaf(q);
  tape.backward(sum(mul(a, a)));
  for (double g : b.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, NonFinitePerturbationNamesParameter) {
  auto p = Tensor::scalar(1e-4f).cast<double>();
  std::vector<NamedParam<double>> params{{"tiny", &p}};
  LossBuilder<double> f = [](Tape<double>& tape, const std::vector<Var<double>>& v) {
    // log(x) is undefined for x <= 0, which the step crosses.
    BasicTensor<double> out = v[0].value();
    out[0] = std::log(out[0]);
    return tape.record(std::move(out), {v[0]}, [](Tape<double>&, std::size_t) {});
  };
  try {
    grad_check(f, params, 1e-3);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
}

// Every differentiable op composed into one scalar, checked against central
// differences in double precision.
TEST(GradCheck, CompositionOfAllOps) {
  std::mt19937_64 rng(9);
  auto x = random_matrix<double>(4, 6, rng);
  auto w = random_matrix<double>(6, 6, rng, 0.5);
  auto g = random_matrix<double>(1, 6, rng);
  auto b = random_matrix<double>(1, 6, rng);
  auto e = random_matrix<double>(5, 6, rng);
  std::vector<NamedParam<double>> params{{"x", &x}, {"w", &w}, {"g", &g}, {"b", &b}, {"e", &e}};
  BasicTensor<double> mask = BasicTensor<double>::matrix(4, 4);
  mask(0, 3) = masked_value<double>();
  mask(2, 1) = masked_value<double>();
  LossBuilder<double> f = [&mask](Tape<double>&, const std::vector<Var<double>>& v) {
    std::mt19937_64 drop_rng(123);
    const std::vector<std::size_t> ids{0, 3, 3, 1};
    auto h = add(v[0], gather_rows(v[4], ids));
    auto q = matmul(h, v[1]);
    auto heads = split_heads(q, 2);
    std::vector<Var<double>> outs;
    for (auto& hd : heads) {
      auto s = scale(matmul_nt(hd, hd), 1.0 / std::sqrt(3.0));
      auto a = dropout(masked_softmax(s, mask), 0.2, drop_rng);
      outs.push_back(matmul(a, hd));
    }
    auto m = merge_heads<double>(outs);
    auto ln = layer_norm(add(m, h), v[2], v[3]);
    auto act = gelu(ln);
    auto pooled = l2_normalize_rows(mean_rows(act));
    auto tr = transpose(act);
    auto both = concat_rows<double>(std::vector<Var<double>>{pooled, slice_cols(ln, 0, 6)});
    const std::vector<std::size_t> targets{2, 0, 5, 1, 4};
    return add(cross_entropy(both, targets), scale(sum(mul(tr, tr)), 0.01));
  };
  auto report = grad_check(f, params, 1e-5);
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst_param << "[" << report.worst_index << "]";
}

}  // namespace
}  // namespace kgbilm
