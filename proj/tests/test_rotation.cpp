#include <catch2/catch.hpp>

#include <cmath>

#include "clbench/rotation.hpp"
#include "test_support.hpp"

using namespace clbench;

namespace {

// anisotropic inputs so the rotations are nontrivial
Matrix skewed_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const double shared = rng.normal();
        for (std::size_t j = 0; j < cols; ++j)
            m(i, j) = shared * (1.0 + 0.5 * double(j)) + 0.3 * rng.normal();
    }
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

void check_orthogonal(const Matrix& u, double tolerance) {
    const Matrix utu = transposed_matmul(u, u);
    for (std::size_t i = 0; i < u.rows; ++i)
        for (std::size_t j = 0; j < u.cols; ++j)
            CHECK(std::abs(utu(i, j) - (i == j ? 1.0 : 0.0)) < tolerance);
}

}  // namespace

TEST_CASE("rotation preserves the feed-forward response") {
    MlpNetwork net = testsupport::random_net(4, {6, 5}, 3, 101);
    const MlpNetwork original = net;
    Matrix data = skewed_batch(60, 4, 102);
    Rng rng(103);
    rwc_rotate(net, data, rng);

    for (int probe = 0; probe < 100; ++probe) {
        Matrix x = testsupport::random_batch(1, 4, 200 + probe, 2.0);
        const ForwardCache before_cache = forward(original, x);
        const Matrix& before = before_cache.logits();
        const ForwardCache after_cache = forward(net, x);
        const Matrix& after = after_cache.logits();
        CHECK(max_abs_diff(before, after) < 1e-6);
    }
}

TEST_CASE("rotation matrices are orthogonal") {
    MlpNetwork net = testsupport::random_net(4, {6, 5}, 3, 110);
    Matrix data = skewed_batch(50, 4, 111);
    Rng rng(112);
    rwc_rotate(net, data, rng);
    const RotationContext ctx = rotation_context(net);
    for (const auto& u : ctx.input_rotations) check_orthogonal(u, 1e-8);
    for (const auto& u : ctx.output_rotations) check_orthogonal(u, 1e-8);
}

TEST_CASE("the head never rotates its output coordinates") {
    MlpNetwork net = testsupport::random_net(3, {4}, 5, 120);
    Matrix data = skewed_batch(40, 3, 121);
    Rng rng(122);
    rwc_rotate(net, data, rng);
    CHECK_FALSE(net.layers.back().has_output_rotation());
    CHECK(net.layers.back().has_input_rotation());
}

TEST_CASE("a second rotation composes and still preserves the function") {
    MlpNetwork net = testsupport::random_net(4, {5}, 3, 130);
    const MlpNetwork original = net;
    Rng rng(131);
    rwc_rotate(net, skewed_batch(50, 4, 132), rng);
    rwc_rotate(net, skewed_batch(50, 4, 133), rng);

    const RotationContext ctx = rotation_context(net);
    for (const auto& u : ctx.input_rotations) check_orthogonal(u, 1e-8);
    for (const auto& u : ctx.output_rotations) check_orthogonal(u, 1e-8);

    for (int probe = 0; probe < 20; ++probe) {
        Matrix x = testsupport::random_batch(2, 4, 300 + probe);
        const ForwardCache c1 = forward(original, x);
        const ForwardCache c2 = forward(net, x);
        CHECK(max_abs_diff(c1.logits(), c2.logits()) < 1e-6);
    }
}

TEST_CASE("orthonormal inputs to a head-only net leave it unchanged") {
    // E[x x^T] diagonal -> eigenbasis identity -> no rotation effect
    MlpNetwork net;
    LinearLayer head;
    head.weights = Matrix(2, 3);
    head.weights(0, 0) = 0.5;
    head.weights(0, 2) = -1.5;
    head.weights(1, 1) = 2.0;
    head.bias = {0.1, -0.2};
    head.activation = Activation::kIdentity;
    net.layers.push_back(head);
    const Matrix before = net.layers[0].weights;

    Matrix data(3, 3);  // rows e_0, e_1, e_2
    data(0, 0) = 1.0;
    data(1, 1) = 1.0;
    data(2, 2) = 1.0;
    Rng rng(140);
    rwc_rotate(net, data, rng);
    CHECK(net.layers[0].weights.data == before.data);
}

TEST_CASE("rotate_anchor matches rotating the parameters themselves") {
    MlpNetwork net = testsupport::random_net(3, {4, 4}, 2, 150);
    ParamTensors anchor = ParamTensors::parameters_of(net);
    Rng rng(151);
    const RwcRotation rot = rwc_rotate(net, skewed_batch(40, 3, 152), rng);
    rotate_anchor(anchor, rot);

    const ParamTensors rotated = ParamTensors::parameters_of(net);
    for (std::size_t l = 0; l < rotated.weights.size(); ++l) {
        for (std::size_t i = 0; i < rotated.weights[l].data.size(); ++i)
            CHECK(anchor.weights[l].data[i] == Approx(rotated.weights[l].data[i]).margin(1e-10));
        for (std::size_t i = 0; i < rotated.biases[l].size(); ++i)
            CHECK(anchor.biases[l][i] == Approx(rotated.biases[l][i]).margin(1e-10));
    }
}

TEST_CASE("rotate_importance preserves nonnegativity and total mass") {
    MlpNetwork net = testsupport::random_net(3, {5}, 2, 160);
    Rng imp_rng(161);
    ParamTensors importance = ParamTensors::zeros_like(net);
    double total_before = 0.0;
    for (auto& w : importance.weights)
        for (double& v : w.data) {
            v = imp_rng.uniform();
            total_before += v;
        }
    for (auto& b : importance.biases)
        for (double& v : b) {
            v = imp_rng.uniform();
            total_before += v;
        }

    Rng rng(162);
    const RwcRotation rot = rwc_rotate(net, skewed_batch(40, 3, 163), rng);
    rotate_importance(importance, rot);

    double total_after = 0.0;
    for (const auto& w : importance.weights)
        for (double v : w.data) {
            CHECK(v >= 0.0);
            total_after += v;
        }
    for (const auto& b : importance.biases)
        for (double v : b) {
            CHECK(v >= 0.0);
            total_after += v;
        }
    CHECK(total_after == Approx(total_before).epsilon(1e-9));
}

TEST_CASE("gradients stay correct on a rotated network") {
    MlpNetwork net = testsupport::random_net(4, {5}, 3, 170);
    Rng rng(171);
    rwc_rotate(net, skewed_batch(40, 4, 172), rng);

    Matrix x = testsupport::random_batch(4, 4, 173);
    Matrix weight = testsupport::random_batch(4, 3, 174);
    auto loss = [&](const MlpNetwork& n) {
        const ForwardCache c = forward(n, x);
        double s = 0.0;
        for (std::size_t i = 0; i < weight.data.size(); ++i)
            s += weight.data[i] * c.logits().data[i];
        return s;
    };
    ForwardCache cache = forward(net, x);
    std::vector<double> analytic = testsupport::flatten(backward(net, cache, weight));
    std::vector<double> fd = testsupport::fd_gradient(net, loss);
    CHECK(testsupport::max_rel_error(analytic, fd) < 1e-4);
}
