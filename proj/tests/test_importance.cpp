#include <catch2/catch.hpp>

#include <cmath>

#include "clbench/importance.hpp"
#include "test_support.hpp"

using namespace clbench;

TEST_CASE("fisher of a detached hidden unit is zero") {
    MlpNetwork net = testsupport::random_net(2, {3}, 2, 17);
    // cut unit 1's fan-out: the head never reads it
    net.layers[1].weights(0, 1) = 0.0;
    net.layers[1].weights(1, 1) = 0.0;

    Matrix data = testsupport::random_batch(20, 2, 18);
    Rng rng(19);
    ParameterImportance fisher = estimate_fisher(net, data, rng);
    for (std::size_t j = 0; j < 2; ++j) CHECK(fisher.values.weights[0](1, j) == 0.0);
    CHECK(fisher.values.biases[0][1] == 0.0);
}

TEST_CASE("fisher of a one-parameter logistic model matches the closed form") {
    // logits [w*x, 0] give p(class0) = sigmoid(w*x)
    MlpNetwork net;
    LinearLayer head;
    head.weights = Matrix(2, 1);
    head.weights(0, 0) = 0.8;
    head.bias = {0.0, 0.0};
    head.activation = Activation::kIdentity;
    net.layers.push_back(head);

    const double x = 1.7;
    Matrix data(1, 1);
    data(0, 0) = x;

    const std::uint64_t seed = 23;
    Rng rng(seed);
    ParameterImportance fisher = estimate_fisher(net, data, rng);

    // replicate the single label draw to know which class was sampled
    const double p0 = 1.0 / (1.0 + std::exp(-0.8 * x));
    Rng probe(seed);
    const std::size_t label = probe.uniform() < p0 ? 0 : 1;
    const double residual = p0 - (label == 0 ? 1.0 : 0.0);
    CHECK(fisher.values.weights[0](0, 0) == Approx(residual * residual * x * x).margin(1e-12));
}

TEST_CASE("fisher entries are nonnegative and finite on random nets") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        MlpNetwork net = testsupport::random_net(3, {5, 4}, 3, seed);
        Matrix data = testsupport::random_batch(15, 3, seed + 5);
        Rng rng(seed + 9);
        ParameterImportance fisher = estimate_fisher(net, data, rng);
        CHECK(fisher.values.all_finite());
        for (const auto& w : fisher.values.weights)
            for (double v : w.data) CHECK(v >= 0.0);
        for (const auto& b : fisher.values.biases)
            for (double v : b) CHECK(v >= 0.0);
    }
}

TEST_CASE("importance estimators require data") {
    MlpNetwork net = testsupport::random_net(2, {3}, 2, 40);
    Matrix empty(0, 2);
    Rng rng(1);
    CHECK_THROWS_AS(estimate_fisher(net, empty, rng), ShapeError);
    CHECK_THROWS_AS(mas_importance(net, empty), ShapeError);
}

TEST_CASE("mas importance of a scalar linear model is |x|") {
    MlpNetwork net;
    LinearLayer head;
    head.weights = Matrix(1, 1);
    head.weights(0, 0) = -0.35;
    head.bias = {0.0};
    head.activation = Activation::kIdentity;
    net.layers.push_back(head);

    Matrix data(1, 1);
    data(0, 0) = -2.4;
    ParameterImportance omega = mas_importance(net, data);
    CHECK(omega.values.weights[0](0, 0) == Approx(2.4));
}

TEST_CASE("mas importance of first-layer weights is zero for zero input") {
    MlpNetwork net = testsupport::random_net(3, {4}, 2, 45);
    for (auto& layer : net.layers) std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    Matrix data(5, 3);  // all zeros
    ParameterImportance omega = mas_importance(net, data);
    for (double v : omega.values.weights[0].data) CHECK(v == 0.0);
}

TEST_CASE("mas importance matches the perturbation oracle within 5%") {
    MlpNetwork net = testsupport::random_net(3, {4}, 3, 52);
    Matrix data = testsupport::random_batch(1, 3, 53);  // single sample: omega = |g|
    ParameterImportance omega = mas_importance(net, data);
    const std::vector<double> flat = testsupport::flatten(omega.values);

    auto functional = [&](const MlpNetwork& n) {
        const ForwardCache c = forward(n, data);
        double s = 0.0;
        for (double v : c.logits().data) s += v * v;
        return s;
    };

    const double delta = 1e-5;
    MlpNetwork work = net;
    const double base = functional(work);
    double max_omega = 0.0;
    for (double v : flat) max_omega = std::max(max_omega, v);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat[i] < 0.05 * max_omega) continue;  // skip near-flat directions
        double* p = testsupport::param_ptr(work, i);
        const double orig = *p;
        *p = orig + delta;
        const double sensed = std::abs(functional(work) - base) / delta;
        *p = orig;
        CHECK(sensed == Approx(flat[i]).epsilon(0.05));
    }
}

TEST_CASE("mas importance averages per-sample sensitivities") {
    MlpNetwork net = testsupport::random_net(2, {3}, 2, 60);
    Matrix a = testsupport::random_batch(1, 2, 61);
    Matrix b = testsupport::random_batch(1, 2, 62);
    Matrix both(2, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        both(0, j) = a(0, j);
        both(1, j) = b(0, j);
    }
    ParameterImportance oa = mas_importance(net, a);
    ParameterImportance ob = mas_importance(net, b);
    ParameterImportance om = mas_importance(net, both);
    for (std::size_t l = 0; l < om.values.weights.size(); ++l)
        for (std::size_t i = 0; i < om.values.weights[l].data.size(); ++i)
            CHECK(om.values.weights[l].data[i] ==
                  Approx(0.5 * (oa.values.weights[l].data[i] + ob.values.weights[l].data[i]))
                      .margin(1e-12));
}
