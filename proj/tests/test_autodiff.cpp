#include <doctest.h>

#include <cstring>

#include "srlm/autodiff.hpp"
#include "srlm/rng.hpp"
#include "test_oracles.hpp"

using namespace srlm;
using ad::Matrix;
using ad::Tape;
using ad::Value;

namespace {

Matrix colvec(std::initializer_list<double> vals) {
  Matrix m(static_cast<Eigen::Index>(vals.size()), 1);
  Eigen::Index i = 0;
  for (double v : vals) m(i++, 0) = v;
  return m;
}

Matrix random_matrix(int rows, int cols, RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("grad of z*z is 2z") {
  auto f = [](Tape&, const std::vector<Value>& xs) { return ad::mul(xs[0], xs[0]); };
  const auto gs = ad::grad(f, {colvec({3.0})});
  CHECK(gs.size() == 1);
  CHECK(gs[0](0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad of a constant function is zero") {
  auto f = [](Tape& t, const std::vector<Value>&) { return t.scalar(4.25); };
  const auto gs = ad::grad(f, {colvec({1.0, -2.0, 0.5})});
  CHECK(gs[0].isZero(0.0));
}

TEST_CASE("grad rejects non-scalar outputs") {
  auto f = [](Tape&, const std::vector<Value>& xs) { return ad::add(xs[0], xs[0]); };
  CHECK_THROWS_AS(ad::grad(f, {colvec({1.0, 2.0})}), ad::AdError);
}

TEST_CASE("linear-Gaussian log-joint gradient matches finite differences") {
  RngStream rng(41);
  const int p = 3, d = 2;
  const Matrix w = random_matrix(p, d, rng);
  const Matrix x = random_matrix(p, 1, rng);
  const double sigma2 = 0.7;

  auto joint = [&](Tape& t, Value z) {
    Value wz = ad::matmul(t.constant(w), z);
    Value diff = ad::sub(t.constant(x), wz);
    Value quad = ad::scale(ad::sum(ad::mul(diff, diff)), -0.5 / sigma2);
    Value prior = ad::scale(ad::sum(ad::mul(z, z)), -0.5);
    return ad::add(prior, quad);
  };

  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd z0 = random_matrix(d, 1, rng);
    auto f = [&](Tape& t, const std::vector<Value>& xs) { return joint(t, xs[0]); };
    const Eigen::VectorXd g = ad::grad(f, {z0})[0];
    const Eigen::VectorXd fd = testutil::fd_grad(
        [&](const Eigen::VectorXd& z) {
          const Eigen::VectorXd diff = x - w * z;
          return -0.5 * z.squaredNorm() - 0.5 / sigma2 * diff.squaredNorm();
        },
        z0);
    for (int i = 0; i < d; ++i) {
      CHECK(testutil::rel_err(g[i], fd[i]) < 1e-4);
    }
  }
}

TEST_CASE("jvp of a linear map applies the matrix") {
  Matrix a(2, 2);
  a << 2.0, 0.0, 0.0, 3.0;
  auto f = [&](Tape& t, Value z) { return ad::matmul(t.constant(a), z); };
  const Matrix out = ad::jvp(f, colvec({1.0, 1.0}), colvec({1.0, 0.0}));
  CHECK(out(0, 0) == doctest::Approx(2.0));
  CHECK(out(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("jvp of the identity returns the direction") {
  auto f = [](Tape&, Value z) { return z; };
  const Matrix v = colvec({0.5, -1.5, 2.0});
  const Matrix out = ad::jvp(f, colvec({1.0, 2.0, 3.0}), v);
  CHECK((out - v).norm() == doctest::Approx(0.0));
}

TEST_CASE("jvp mismatched shapes throw") {
  auto f = [](Tape&, Value z) { return z; };
  CHECK_THROWS_AS(ad::jvp(f, colvec({1.0, 2.0}), colvec({1.0})), ad::AdError);
}

TEST_CASE("jvp through one Langevin drift step on a quadratic log-posterior") {
  // drift(z) = z + s * grad log N(z;0,I) = (1 - s) z; Jacobian (1-s) I.
  const double s = 0.1;
  auto drift = [&](Tape& t, Value z) {
    Value g = ad::scale(z, -1.0);
    return ad::add(z, ad::scale(g, s));
  };
  const Eigen::VectorXd z0 = colvec({0.3, -1.2});
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    e[i] = 1.0;
    const Matrix col = ad::jvp(drift, z0, e);
    const Eigen::MatrixXd fd = testutil::fd_jacobian(
        [&](const Eigen::VectorXd& z) -> Eigen::VectorXd { return (1.0 - s) * z; }, z0);
    CHECK((col - fd.col(i)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(col(i, 0) == doctest::Approx(1.0 - s).epsilon(1e-10));
  }
}

TEST_CASE("every elementary operation matches finite differences at random points") {
  RngStream rng(7);

  struct Case {
    const char* name;
    std::vector<std::pair<int, int>> shapes;  // input shapes
    ad::ScalarFn fn;
    bool positive_inputs = false;
  };

  // Fixed weight constants give each output entry a distinct sensitivity;
  // frozen per case so repeated evaluations see the same function.
  RngStream wrng(99);
  auto weights = [&wrng](int rows, int cols) { return random_matrix(rows, cols, wrng); };
  auto weighted = [](Matrix w) {
    return [w = std::move(w)](Tape& t, Value v) { return ad::sum(ad::mul(t.constant(w), v)); };
  };

  std::vector<Case> cases;
  cases.push_back({"add", {{4, 1}, {4, 1}},
                   [ws = weighted(weights(4, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::add(xs[0], xs[1]));
                   }});
  cases.push_back({"add_scalar", {{4, 1}, {1, 1}},
                   [ws = weighted(weights(4, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::add(xs[0], xs[1]));
                   }});
  cases.push_back({"mul", {{4, 1}, {4, 1}},
                   [ws = weighted(weights(4, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::mul(xs[0], xs[1]));
                   }});
  cases.push_back({"mul_scalar", {{1, 1}, {4, 1}},
                   [ws = weighted(weights(4, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::mul(xs[0], xs[1]));
                   }});
  cases.push_back({"matmul", {{3, 4}, {4, 1}},
                   [ws = weighted(weights(3, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::matmul(xs[0], xs[1]));
                   }});
  cases.push_back({"tanh", {{5, 1}},
                   [ws = weighted(weights(5, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::tanh(xs[0]));
                   }});
  cases.push_back({"sigmoid", {{5, 1}},
                   [ws = weighted(weights(5, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::sigmoid(xs[0]));
                   }});
  cases.push_back({"exp", {{5, 1}},
                   [ws = weighted(weights(5, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::exp(xs[0]));
                   }});
  cases.push_back({"log", {{5, 1}},
                   [ws = weighted(weights(5, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::log(xs[0]));
                   },
                   true});
  cases.push_back({"softmax_xent", {{6, 1}}, [](Tape&, const std::vector<Value>& xs) {
                     return ad::softmax_xent(xs[0], 2);
                   }});
  cases.push_back({"concat", {{3, 1}, {2, 1}},
                   [ws = weighted(weights(5, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::concat(xs[0], xs[1]));
                   }});
  cases.push_back({"slice", {{6, 1}},
                   [ws = weighted(weights(3, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::slice(xs[0], 1, 4));
                   }});
  cases.push_back({"slice_matrix", {{4, 3}},
                   [ws = weighted(weights(2, 1))](Tape& t, const std::vector<Value>& xs) {
                     return ws(t, ad::slice(xs[0], 1, 3, 1, 2));
                   }});
  cases.push_back({"sum", {{5, 1}}, [&](Tape&, const std::vector<Value>& xs) {
                     Value s = ad::sum(xs[0]);
                     return ad::mul(s, s);
                   }});

  for (const Case& c : cases) {
    CAPTURE(c.name);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<Matrix> inputs;
      for (auto [r, cc] : c.shapes) {
        Matrix m = random_matrix(r, cc, rng, 0.8);
        if (c.positive_inputs) m = m.array().abs() + 0.2;
        inputs.push_back(std::move(m));
      }
      const auto grads = ad::grad(c.fn, inputs);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Eigen::MatrixXd fd = testutil::fd_grad_matrix(
            [&](const Matrix& perturbed) {
              std::vector<Matrix> probe = inputs;
              probe[k] = perturbed;
              Tape t;
              std::vector<Value> xs;
              for (const Matrix& m : probe) xs.push_back(t.input(m, false));
              return c.fn(t, xs).data()(0, 0);
            },
            inputs[k]);
        const double err = (grads[k] - fd).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
        REQUIRE_MESSAGE(err / scale < 1e-4, c.name << " rep " << rep << " input " << k);
      }
    }
  }
}

TEST_CASE("jvp and grad are consistent on a polynomial") {
  RngStream rng(11);
  // f(x) = sum(x * x * x) + sum(x)
  auto f_multi = [](Tape& t, const std::vector<Value>& xs) {
    Value cube = ad::mul(xs[0], ad::mul(xs[0], xs[0]));
    return ad::add(ad::sum(cube), ad::sum(xs[0]));
  };
  auto f_single = [](Tape& t, Value x) {
    Value cube = ad::mul(x, ad::mul(x, x));
    return ad::add(ad::sum(cube), ad::sum(x));
  };
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd x = random_matrix(6, 1, rng);
    const Eigen::VectorXd v = random_matrix(6, 1, rng);
    const Eigen::VectorXd g = ad::grad(f_multi, {x})[0];
    const Matrix dir = ad::jvp(f_single, x, v);
    CHECK(std::abs(dir(0, 0) - g.dot(v)) < 1e-10);
  }
}

TEST_CASE("gradients are deterministic for identical graphs") {
  RngStream rng(23);
  const Matrix a = random_matrix(4, 4, rng);
  const Matrix x = random_matrix(4, 1, rng);
  auto f = [&](Tape& t, const std::vector<Value>& xs) {
    Value h = ad::tanh(ad::matmul(t.constant(a), xs[0]));
    return ad::sum(ad::mul(h, h));
  };
  const Matrix g1 = ad::grad(f, {x})[0];
  const Matrix g2 = ad::grad(f, {x})[0];
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);
}

TEST_CASE("non-finite forward values raise errors") {
  Tape t;
  Value x = t.input(colvec({-1.0}));
  CHECK_THROWS_AS(ad::log(x), ad::AdError);  // log of a negative value
  Value big = t.input(colvec({1000.0}));
  CHECK_THROWS_AS(ad::exp(big), ad::AdError);  // overflow to inf
}

TEST_CASE("non-finite backward gradients raise errors") {
  // log at a subnormal argument: forward is finite, backward 1/a overflows.
  auto f = [](Tape&, const std::vector<Value>& xs) { return ad::sum(ad::log(xs[0])); };
  CHECK_THROWS_WITH_AS(ad::grad(f, {colvec({1e-320})}), "NaN encountered during backward pass",
                       ad::AdError);
}

TEST_CASE("backward replays the tape once in topological order") {
  Tape t;
  Value x = t.input(colvec({2.0}));
  Value a = ad::mul(x, x);
  Value b = ad::add(a, a);  // diamond: a consumed twice
  Value out = ad::sum(b);
  t.backward(out);
  // Reachable grad-requiring nodes: x, a, b, out.
  CHECK(t.backward_visits() == 4);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(8.0));
  CHECK_THROWS_AS(t.backward(out), ad::AdError);  // no double replay
}

TEST_CASE("forward-over-reverse Hessian columns match finite differences of the gradient") {
  RngStream rng(101);
  const int n = 6;
  const Matrix a = random_matrix(4, n, rng, 0.6);
  const Matrix b = random_matrix(5, 4, rng, 0.6);
  const Matrix c0 = random_matrix(5, 1, rng, 0.3);

  // Touches every op with a tangent rule: slice, concat, sigmoid, tanh,
  // matmul, mul, add, softmax_xent, exp, log, sum.
  auto build = [&](Tape& t, Value x) {
    Value u = ad::slice(x, 0, 3);
    Value v = ad::slice(x, 3, n);
    Value h = ad::tanh(ad::matmul(t.constant(a), ad::concat(u, ad::sigmoid(v))));
    Value hh = ad::mul(h, h);
    Value logits = ad::add(ad::matmul(t.constant(b), h), t.constant(c0));
    Value xe = ad::softmax_xent(logits, 1);
    Value w = ad::log(ad::shift(ad::exp(ad::slice(x, 0, 1)), 1.5));
    return ad::add(ad::add(ad::sum(hh), ad::scale(xe, 0.7)), ad::scale(ad::sum(w), 1.3));
  };

  auto grad_at = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Tape t;
    Value xv = t.input(x);
    Value out = build(t, xv);
    t.backward(out);
    return t.grad(xv);
  };

  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd x = random_matrix(n, 1, rng, 0.7);
    Tape t(n);
    Value xv = t.input_with_tangent(x, Matrix::Identity(n, n));
    Value out = build(t, xv);
    t.backward(out);
    const Matrix hess = t.grad_tangent(xv);

    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e[j] = 1.0;
      const double h = 1e-5;
      const Eigen::VectorXd fd = (grad_at(x + h * e) - grad_at(x - h * e)) / (2.0 * h);
      const double err = (hess.col(j) - fd).cwiseAbs().maxCoeff();
      REQUIRE_MESSAGE(err < 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()),
                      "hessian column " << j << " rep " << rep);
    }
  }
}
