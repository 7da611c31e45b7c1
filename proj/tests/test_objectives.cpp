#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssg/errors.hpp"
#include "ssg/objectives.hpp"
#include "ssg/rng.hpp"

using namespace ssg;

namespace {

Tensor random_logits(std::size_t m, std::size_t k, Rng& rng, double span = 3.0) {
    std::vector<double> v(m * k);
    for (double& x : v) x = -span + 2.0 * span * rng.uniform01();
    return Tensor::from_values({m, k}, std::move(v));
}

}  // namespace

TEST_CASE("source_ce values") {
    // strongly one-hot logits -> loss near zero
    Tensor confident = Tensor::from_values({1, 3}, {50.0, 0.0, 0.0});
    CHECK(source_ce(confident, {0}).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));

    // uniform logits over 4 classes -> ln 4
    Tensor uniform = Tensor::zeros({1, 4});
    CHECK(source_ce(uniform, {2}).scalar_value() == doctest::Approx(std::log(4.0)));
    CHECK(source_ce(uniform, {2}).scalar_value() == doctest::Approx(1.386294).epsilon(1e-5));

    // batch mean equals the average of individual losses
    Rng rng(4);
    Tensor two = random_logits(2, 5, rng);
    Tensor first = Tensor::from_values({1, 5}, {two.at(0, 0), two.at(0, 1), two.at(0, 2),
                                                two.at(0, 3), two.at(0, 4)});
    Tensor second = Tensor::from_values({1, 5}, {two.at(1, 0), two.at(1, 1), two.at(1, 2),
                                                 two.at(1, 3), two.at(1, 4)});
    double mean = source_ce(two, {1, 3}).scalar_value();
    double individual = 0.5 * (source_ce(first, {1}).scalar_value() +
                               source_ce(second, {3}).scalar_value());
    CHECK(mean == doctest::Approx(individual).epsilon(1e-12));

    CHECK_THROWS_AS(source_ce(uniform, {4}), LabelError);
}

TEST_CASE("target_entropy values and bounds") {
    Tensor uniform10 = Tensor::zeros({1, 10});
    CHECK(target_entropy(uniform10).scalar_value() == doctest::Approx(std::log(10.0)));
    CHECK(target_entropy(uniform10).scalar_value() == doctest::Approx(2.302585).epsilon(1e-5));

    Tensor one_hot = Tensor::from_values({1, 4}, {80.0, 0.0, 0.0, 0.0});
    CHECK(target_entropy(one_hot).scalar_value() == doctest::Approx(0.0).epsilon(1e-9));

    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 2 + rng.index(6);
        Tensor logits = random_logits(3, c, rng, 20.0);
        const double h = target_entropy(logits).scalar_value();
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(c)) + 1e-12);
    }
}

TEST_CASE("ss_domain_ce covers the combined batch") {
    Tensor logits = Tensor::zeros({2, 3});
    // one "source" row and one "target" row, both with domain labels
    CHECK(ss_domain_ce(logits, {0, 2}).scalar_value() == doctest::Approx(std::log(3.0)));
    CHECK(ss_domain_ce(logits, {0, 2}).scalar_value() == doctest::Approx(1.098612).epsilon(1e-5));

    Tensor perfect = Tensor::from_values({2, 2}, {60.0, 0.0, 0.0, 60.0});
    CHECK(ss_domain_ce(perfect, {0, 1}).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(ss_domain_ce(logits, {0, 3}), LabelError);
}

TEST_CASE("multitask combination") {
    LossWeights defaults;
    LossBreakdown b = multitask(1.0, 0.2, 1.0, defaults);
    CHECK(b.l_total == doctest::Approx(2.1).epsilon(1e-12));

    LossWeights no_ss = defaults;
    no_ss.alpha2 = 0.0;
    CHECK(multitask(1.0, 0.2, 7.0, no_ss).l_total == doctest::Approx(2.0));

    LossWeights src_only = defaults;
    src_only.alpha2 = 0.0;
    src_only.lambda = 0.0;
    CHECK(multitask(1.0, 9.0, 7.0, src_only).l_total == doctest::Approx(1.0));

    CHECK_THROWS_AS(multitask(std::nan(""), 0.0, 0.0, defaults), TrainingError);
    LossWeights bad;
    bad.alpha1 = -1.0;
    CHECK_THROWS_AS(multitask(1.0, 1.0, 1.0, bad), ConfigError);
}

TEST_CASE("loss identity holds on random inputs") {
    Rng rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        LossWeights w;
        w.alpha1 = 2.0 * rng.uniform01();
        w.alpha2 = 2.0 * rng.uniform01();
        w.lambda = 8.0 * rng.uniform01();
        const double ls = 4.0 * rng.uniform01();
        const double lt = 4.0 * rng.uniform01();
        const double lss = 4.0 * rng.uniform01();
        LossBreakdown b = multitask(ls, lt, lss, w);
        CHECK(std::abs(b.l_total - (w.alpha1 * (b.l_src + w.lambda * b.l_tgt) +
                                    w.alpha2 * b.l_ss)) <= 1e-12);
    }
}

TEST_CASE("graph-level multitask matches value-level multitask") {
    Rng rng(3);
    LossWeights w;
    Tensor ls = Tensor::scalar(1.3, true);
    Tensor lt = Tensor::scalar(0.4, true);
    Tensor lss = Tensor::scalar(0.9, true);
    Tensor total = multitask_total(ls, &lt, &lss, w);
    LossBreakdown b = multitask(1.3, 0.4, 0.9, w);
    CHECK(total.scalar_value() == doctest::Approx(b.l_total).epsilon(1e-12));

    // dropped branches contribute nothing to the recorded graph
    LossWeights no_extras;
    no_extras.alpha2 = 0.0;
    no_extras.lambda = 0.0;
    Tensor src_only = multitask_total(ls, &lt, &lss, no_extras);
    backward(src_only);
    CHECK(ls.grad()[0] == doctest::Approx(1.0));
    CHECK(lt.grad()[0] == 0.0);
    CHECK(lss.grad()[0] == 0.0);
}

TEST_CASE("loss gradients pass finite differences") {
    Rng rng(44);

    SUBCASE("source_ce") {
        Parameter logits("logits", random_logits(4, 3, rng));
        std::vector<int> labels{0, 1, 2, 1};
        std::vector<Parameter> params{logits};
        auto report = finite_diff_check(
            [&] { return source_ce(params[0].tensor(), labels); },
            std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
    SUBCASE("target_entropy") {
        Parameter logits("logits", random_logits(4, 5, rng));
        std::vector<Parameter> params{logits};
        auto report = finite_diff_check([&] { return target_entropy(params[0].tensor()); },
                                        std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
    SUBCASE("ss_domain_ce") {
        Parameter logits("logits", random_logits(5, 3, rng));
        std::vector<int> domains{0, 1, 2, 0, 1};
        std::vector<Parameter> params{logits};
        auto report = finite_diff_check(
            [&] { return ss_domain_ce(params[0].tensor(), domains); },
            std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
    SUBCASE("full multitask combination") {
        Parameter logits("logits", random_logits(6, 4, rng));
        std::vector<int> labels{0, 1, 2, 3, 0, 1};
        std::vector<int> domains{0, 0, 1, 1, 2, 2};
        LossWeights w;
        std::vector<Parameter> params{logits};
        auto report = finite_diff_check(
            [&] {
                Tensor ls = source_ce(params[0].tensor(), labels);
                Tensor lt = target_entropy(params[0].tensor());
                Tensor lss = ss_domain_ce(params[0].tensor(), domains);
                return multitask_total(ls, &lt, &lss, w);
            },
            std::span<Parameter>(params), 1e-6);
        CHECK(report.max_rel_error <= 1e-5);
    }
}

TEST_CASE("linear head prediction") {
    Tensor w_sup = Tensor::identity(3);
    Tensor w_ss = Tensor::full({2, 3}, 0.5);
    Tensor x = Tensor::from_values({1, 3}, {1.0, -2.0, 3.0});
    auto [cat, dom] = linear_head_predict(x, w_sup, w_ss);
    CHECK(cat.at(0, 0) == doctest::Approx(1.0));
    CHECK(cat.at(0, 1) == doctest::Approx(0.0));  // relu folds the negative away
    CHECK(cat.at(0, 2) == doctest::Approx(3.0));
    CHECK(dom.at(0, 0) == doctest::Approx(2.0));

    auto [zc, zd] = linear_head_predict(Tensor::zeros({2, 3}), w_sup, w_ss);
    for (std::size_t i = 0; i < zc.size(); ++i) CHECK(zc.value_at(i) == 0.0);
    for (std::size_t i = 0; i < zd.size(); ++i) CHECK(zd.value_at(i) == 0.0);

    CHECK_THROWS_AS(linear_head_predict(Tensor::zeros({2, 4}), w_sup, w_ss), DimensionError);
}
