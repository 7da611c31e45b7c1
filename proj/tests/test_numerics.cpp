#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssg/errors.hpp"
#include "ssg/rng.hpp"
#include "ssg/tensor.hpp"

using namespace ssg;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform01();
    return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// FD check for a single-op loss built from one parameter.
void check_grad(const std::function<Tensor(Tensor&)>& build, Parameter& p, double tol = 1e-5) {
    std::vector<Parameter> params{p};
    auto report = finite_diff_check([&] { return build(params[0].tensor()); },
                                    std::span<Parameter>(params), 1e-6);
    CAPTURE(report.worst_parameter);
    CAPTURE(report.worst_index);
    CHECK(report.all_finite);
    CHECK(report.max_rel_error <= tol);
}

}  // namespace

TEST_CASE("matmul identity and hand-computed product") {
    Tensor x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor y = matmul(Tensor::identity(3), x);
    for (std::size_t i = 0; i < 6; ++i) CHECK(y.value_at(i) == doctest::Approx(x.value_at(i)));

    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_values({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.value_at(0) == doctest::Approx(3.0));
    CHECK(c.value_at(1) == doctest::Approx(7.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor({3, 4}, rng, false);
        Tensor b = random_tensor({4, 5}, rng, false);
        Tensor c = random_tensor({5, 2}, rng, false);
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            CHECK(std::abs(left.value_at(i) - right.value_at(i)) <= 1e-9);
        }
    }
}

TEST_CASE("elementwise op values") {
    Tensor r = relu(Tensor::from_values({3}, {1, -2, 3}));
    CHECK(r.value_at(0) == 1.0);
    CHECK(r.value_at(1) == 0.0);
    CHECK(r.value_at(2) == 3.0);

    CHECK(exp(Tensor::scalar(0.0)).scalar_value() == doctest::Approx(1.0));
    CHECK(log(Tensor::scalar(M_E)).scalar_value() == doctest::Approx(1.0));

    Tensor s = sub(Tensor::from_values({2}, {3, 1}), Tensor::from_values({2}, {1, 4}));
    CHECK(s.value_at(0) == 2.0);
    CHECK(s.value_at(1) == -3.0);
}

TEST_CASE("log rejects negative input and clamps at 1e-12") {
    CHECK_THROWS_AS(log(Tensor::scalar(-1.0)), DomainValueError);
    CHECK_THROWS_AS(log(Tensor::scalar(-1e-300)), DomainValueError);

    // at and below the clamp the output freezes and the gradient vanishes
    CHECK(log(Tensor::scalar(0.0)).scalar_value() == std::log(1e-12));
    CHECK(log(Tensor::scalar(1e-15)).scalar_value() == std::log(1e-12));
    Parameter x("x", Tensor::scalar(1e-15));
    backward(log(x.tensor()));
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("entropy of an underflowed one-hot softmax is zero") {
    // logits this far apart push the losing probabilities to exactly 0.0
    Tensor logits = Tensor::from_values({3}, {0.0, -800.0, -800.0});
    Tensor p = softmax(logits);
    CHECK(p.value_at(1) == 0.0);
    Tensor entropy = scale(sum(mul(p, log(p))), -1.0);
    CHECK(entropy.scalar_value() == 0.0);
}

TEST_CASE("elementwise shape mismatch") {
    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("softmax basics") {
    Tensor p = softmax(Tensor::from_values({2}, {0, 0}));
    CHECK(p.value_at(0) == doctest::Approx(0.5));
    CHECK(p.value_at(1) == doctest::Approx(0.5));

    Tensor q = softmax(Tensor::from_values({4}, {7.25, 7.25, 7.25, 7.25}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(q.value_at(i) == doctest::Approx(0.25));

    Tensor r = softmax(Tensor::from_values({2}, {std::log(1.0), std::log(3.0)}));
    CHECK(r.value_at(0) == doctest::Approx(0.25));
    CHECK(r.value_at(1) == doctest::Approx(0.75));

    CHECK_THROWS_AS(softmax(Tensor::from_values({0}, {})), DimensionError);
}

TEST_CASE("softmax sums to one and is shift-invariant") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits = random_tensor({7}, rng, false, -4.0, 4.0);
        Tensor p = softmax(logits);
        double total = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p.value_at(i) > 0.0);
            total += p.value_at(i);
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);

        const double shift = -6.0 + 12.0 * rng.uniform01();
        std::vector<double> shifted(logits.values().begin(), logits.values().end());
        for (double& v : shifted) v += shift;
        Tensor p2 = softmax(Tensor::from_values({7}, std::move(shifted)));
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(std::abs(p.value_at(i) - p2.value_at(i)) <= 1e-12);
        }
    }
}

TEST_CASE("backward on x*x") {
    Parameter x("x", Tensor::scalar(3.0));
    Tensor loss = mul(x.tensor(), x.tensor());
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of sum(W v)") {
    Parameter w("w", Tensor::identity(2));
    Tensor v = Tensor::from_values({2, 1}, {1, 1});
    Tensor loss = sum(matmul(w.tensor(), v));
    backward(loss);
    for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("gradients accumulate across backward calls") {
    Parameter x("x", Tensor::scalar(3.0));
    Tensor loss = mul(x.tensor(), x.tensor());
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(12.0));

    x.zero_grad();
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    Parameter x("x", Tensor::from_values({2}, {1, 2}));
    Tensor y = relu(x.tensor());
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("backward through shared subexpression") {
    // loss = (x+x) * x = 2x^2 -> dloss/dx = 4x
    Parameter x("x", Tensor::scalar(1.5));
    Tensor loss = mul(add(x.tensor(), x.tensor()), x.tensor());
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("sgd_step arithmetic") {
    Parameter w("w", Tensor::scalar(1.0));
    Tensor loss = scale(w.tensor(), 0.5);  // grad 0.5
    backward(loss);
    std::vector<Parameter> params{w};
    sgd_step(params, 0.1);
    CHECK(params[0].values()[0] == doctest::Approx(0.95));

    // zero gradient leaves the value unchanged
    Parameter u("u", Tensor::scalar(2.0));
    std::vector<Parameter> params2{u};
    sgd_step(params2, 0.1);
    CHECK(params2[0].values()[0] == 2.0);
}

TEST_CASE("sgd_step with lr=0 is the identity") {
    Rng rng(3);
    Parameter w("w", random_tensor({4, 3}, rng, true));
    std::vector<double> before(w.values().begin(), w.values().end());
    backward(sum(mul(w.tensor(), w.tensor())));
    std::vector<Parameter> params{w};
    sgd_step(params, 0.0);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(params[0].values()[i] == before[i]);
}

TEST_CASE("sgd_step reports non-finite gradients by name") {
    Parameter w("bad_param", Tensor::scalar(1.0));
    Tensor g = log(Tensor::scalar(1e-13));  // clamped, fine
    (void)g;
    // inject a NaN gradient directly
    backward(mul(w.tensor(), w.tensor()));
    const_cast<double&>(w.grad()[0]) = std::nan("");
    std::vector<Parameter> params{w};
    try {
        sgd_step(params, 0.1);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("bad_param") != std::string::npos);
    }
}

TEST_CASE("finite_diff_check on quadratic") {
    Parameter x("x", Tensor::scalar(3.0));
    std::vector<Parameter> params{x};
    auto report = finite_diff_check([&] { return mul(params[0].tensor(), params[0].tensor()); },
                                    std::span<Parameter>(params), 1e-6);
    CHECK(report.max_rel_error <= 1e-8);
    CHECK(report.coordinates_checked == 1);
}

TEST_CASE("finite_diff_check on constant function") {
    Parameter x("x", Tensor::scalar(3.0));
    std::vector<Parameter> params{x};
    Tensor c = Tensor::scalar(4.0);
    auto report =
        finite_diff_check([&] { return add(scale(params[0].tensor(), 0.0), c); },
                          std::span<Parameter>(params), 1e-6);
    CHECK(report.max_rel_error <= 1e-10);
}

TEST_CASE("gradient check per op") {
    Rng rng(17);

    SUBCASE("matmul") {
        Parameter a("a", random_tensor({3, 4}, rng, true));
        Tensor b = random_tensor({4, 2}, rng, false);
        Tensor c = random_tensor({3, 2}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(matmul(t, b), c)); }, a);
    }
    SUBCASE("add sub mul") {
        Parameter a("a", random_tensor({2, 3}, rng, true));
        Tensor b = random_tensor({2, 3}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(add(t, b), sub(t, b))); }, a);
    }
    SUBCASE("exp") {
        Parameter a("a", random_tensor({5}, rng, true));
        check_grad([&](Tensor& t) { return sum(exp(t)); }, a);
    }
    SUBCASE("log") {
        Parameter a("a", random_tensor({5}, rng, true, 0.5, 2.0));
        check_grad([&](Tensor& t) { return sum(log(t)); }, a);
    }
    SUBCASE("relu away from the kink") {
        Tensor init = random_tensor({6}, rng, false, 0.1, 1.0);
        std::vector<double> v(init.values().begin(), init.values().end());
        for (std::size_t i = 0; i < v.size(); i += 2) v[i] = -v[i];
        Parameter a("a", Tensor::from_values({6}, std::move(v)));
        check_grad([&](Tensor& t) { return sum(mul(relu(t), t)); }, a);
    }
    SUBCASE("scale") {
        Parameter a("a", random_tensor({4}, rng, true));
        check_grad([&](Tensor& t) { return sum(scale(t, -2.5)); }, a);
    }
    SUBCASE("softmax") {
        Parameter a("a", random_tensor({6}, rng, true, -2.0, 2.0));
        Tensor w = random_tensor({6}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(softmax(t), w)); }, a);
    }
    SUBCASE("softmax_rows") {
        Parameter a("a", random_tensor({3, 5}, rng, true, -2.0, 2.0));
        Tensor w = random_tensor({3, 5}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(softmax_rows(t), w)); }, a);
    }
    SUBCASE("transpose") {
        Parameter a("a", random_tensor({3, 4}, rng, true));
        Tensor w = random_tensor({4, 3}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(transpose(t), w)); }, a);
    }
    SUBCASE("concat_rows") {
        Parameter a("a", random_tensor({2, 3}, rng, true));
        Tensor b = random_tensor({4, 3}, rng, false);
        Tensor w = random_tensor({6, 3}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(concat_rows(t, b), w)); }, a);
        check_grad([&](Tensor& t) { return sum(mul(concat_rows(b, t), w)); }, a);
    }
    SUBCASE("gather_rows with repeats") {
        Parameter a("a", random_tensor({4, 3}, rng, true));
        std::vector<std::size_t> idx{2, 0, 2, 3};
        Tensor w = random_tensor({4, 3}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(gather_rows(t, idx), w)); }, a);
    }
    SUBCASE("slice_cols") {
        Parameter a("a", random_tensor({3, 6}, rng, true));
        Tensor w = random_tensor({3, 2}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(slice_cols(t, 1, 3), w)); }, a);
    }
    SUBCASE("add_row_vector both sides") {
        Parameter a("a", random_tensor({3, 4}, rng, true));
        Parameter v("v", random_tensor({4}, rng, true));
        std::vector<Parameter> params{a, v};
        auto report = finite_diff_check(
            [&] {
                return sum(mul(add_row_vector(params[0].tensor(), params[1].tensor()),
                               add_row_vector(params[0].tensor(), params[1].tensor())));
            },
            std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
    SUBCASE("row_sums") {
        Parameter a("a", random_tensor({3, 4}, rng, true));
        Tensor w = random_tensor({3}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(row_sums(t), w)); }, a);
    }
    SUBCASE("rsqrt") {
        Parameter a("a", random_tensor({5}, rng, true, 0.5, 3.0));
        check_grad([&](Tensor& t) { return sum(rsqrt(t)); }, a);
    }
    SUBCASE("sym_scale both inputs") {
        Parameter a("a", random_tensor({4, 4}, rng, true));
        Parameter s("s", random_tensor({4}, rng, true, 0.5, 1.5));
        std::vector<Parameter> params{a, s};
        auto report = finite_diff_check(
            [&] { return sum(mul(sym_scale(params[0].tensor(), params[1].tensor()),
                                 sym_scale(params[0].tensor(), params[1].tensor()))); },
            std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
    SUBCASE("pairwise_sqdist") {
        Parameter z("z", random_tensor({5, 3}, rng, true));
        Tensor w = random_tensor({5, 5}, rng, false);
        check_grad([&](Tensor& t) { return sum(mul(pairwise_sqdist(t), w)); }, z);
    }
    SUBCASE("clamp_min away from the boundary") {
        Parameter a("a", random_tensor({5}, rng, true, -3.0, 3.0));
        check_grad([&](Tensor& t) { return sum(mul(clamp_min(t, -0.001), t)); }, a);
    }
    SUBCASE("cross_entropy_rows") {
        Parameter a("a", random_tensor({4, 3}, rng, true, -2.0, 2.0));
        std::vector<int> labels{0, 2, 1, 2};
        check_grad([&](Tensor& t) { return cross_entropy_rows(t, labels); }, a);
    }
}

TEST_CASE("cross_entropy_rows label validation") {
    Tensor logits = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(cross_entropy_rows(logits, {0, 3}), LabelError);
    CHECK_THROWS_AS(cross_entropy_rows(logits, {-1, 0}), LabelError);
}

TEST_CASE("pairwise_sqdist is exactly symmetric with zero diagonal") {
    Rng rng(23);
    Tensor z = random_tensor({6, 4}, rng, false);
    Tensor d = pairwise_sqdist(z);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(d.at(i, i) == 0.0);
        for (std::size_t j = 0; j < 6; ++j) CHECK(d.at(i, j) == d.at(j, i));
    }
}
