#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "flowfuse/autodiff.hpp"
#include "flowfuse/tensor.hpp"
#include "test_support.hpp"

using namespace flowfuse;
using namespace flowfuse::testing;

TEST_CASE("adding a zero tensor is the identity") {
    const Tensor x = random_tensor({3, 4}, 11);
    Tape tape;
    Var out = add(tape.constant(x), tape.constant(Tensor({3, 4}, 0.0)));
    CHECK(bit_identical(out.value(), x));
}

TEST_CASE("average pooling a constant plane keeps the constant at half extent") {
    Tape tape;
    Var out = avg_pool2(tape.constant(Tensor({1, 6, 8}, 0.37)));
    CHECK(out.value().shape == std::vector<int>{1, 3, 4});
    for (double v : out.value().data) CHECK(v == 0.37);
}

TEST_CASE("softmax of the zero vector is uniform") {
    Tape tape;
    Var out = softmax(tape.constant(Tensor({16}, 0.0)));
    for (double v : out.value().data) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-15));
    CHECK(out.value().sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sum of squares has the analytic gradient 2x") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_data({3}, {1, 2, 3}), true);
    Var loss = sum(square(x));
    const Tensor g = tape.backward(loss).grad(x);
    CHECK(g.data == std::vector<double>{2, 4, 6});
}

TEST_CASE("a leaf the loss never touches gets a zero gradient") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_data({2}, {1, 2}), true);
    Var w = tape.leaf(Tensor::from_data({2}, {5, 6}), true);
    Var loss = sum(square(x));
    const GradMap grads = tape.backward(loss);
    CHECK(grads.maybe_grad(w) == nullptr);
    const Tensor gw = grads.grad(w);
    CHECK(gw.shape == std::vector<int>{2});
    CHECK(gw.data == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects a non-scalar root") {
    Tape tape;
    Var x = tape.leaf(Tensor::from_data({2}, {1, 2}), true);
    CHECK_THROWS_AS((void)tape.backward(square(x)), ContractViolation);
}

TEST_CASE("shape mismatch names both shapes") {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}, 1.0));
    Var b = tape.constant(Tensor({3, 2}, 1.0));
    try {
        (void)add(a, b);
        FAIL("expected a contract violation");
    } catch (const ContractViolation& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("every elementwise and reduction op matches finite differences") {
    const Tensor x0 = random_tensor({2, 5, 6}, 21, 0.8);
    const Tensor w = random_tensor({2, 5, 6}, 22);
    const Tensor other = random_tensor({2, 5, 6}, 23, 0.8);

    auto proj = [&](std::function<Var(Tape&, Var)> op) {
        return [&, op](Tape& t, Var x) { return project_loss(t, op(t, x), w); };
    };

    CHECK(fd_max_rel_err(x0, proj([&](Tape& t, Var x) {
              return add(x, t.constant(other));
          })) < 1e-4);
    CHECK(fd_max_rel_err(x0, proj([&](Tape& t, Var x) {
              return sub(t.constant(other), x);
          })) < 1e-4);
    CHECK(fd_max_rel_err(x0, proj([&](Tape& t, Var x) {
              return mul(x, t.constant(other));
          })) < 1e-4);
    CHECK(fd_max_rel_err(x0, proj([](Tape&, Var x) { return scale(x, -1.7); })) < 1e-4);
    CHECK(fd_max_rel_err(x0, proj([](Tape&, Var x) { return square(x); })) < 1e-4);
    CHECK(fd_max_rel_err(x0, proj([](Tape&, Var x) { return sigmoid(x); })) < 1e-4);
    CHECK(fd_max_rel_err(x0, [](Tape&, Var x) { return sum(x); }) < 1e-4);
    CHECK(fd_max_rel_err(x0, [](Tape&, Var x) { return mean(square(x)); }) < 1e-4);
    CHECK(fd_max_rel_err(x0, [](Tape&, Var x) { return l2_norm_sq(x); }) < 1e-4);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return mse_loss(x, t.constant(other));
          }) < 1e-4);

    // relu and l1_norm are kinked at 0; keep samples away from the kink.
    Tensor shifted = x0;
    for (double& v : shifted.data) v += (v >= 0 ? 0.5 : -0.5);
    CHECK(fd_max_rel_err(shifted, proj([](Tape&, Var x) { return relu(x); })) < 1e-4);
    CHECK(fd_max_rel_err(shifted, [](Tape&, Var x) { return l1_norm(x); }) < 1e-4);
}

TEST_CASE("structural ops match finite differences") {
    const Tensor x0 = random_tensor({3, 4, 6}, 31, 0.8);

    const Tensor wpool = random_tensor({3, 2, 3}, 32);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, avg_pool2(x), wpool);
          }) < 1e-4);

    const Tensor wup = random_tensor({3, 8, 12}, 33);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, upsample_nearest2(x), wup);
          }) < 1e-4);

    const Tensor wcat = random_tensor({6, 4, 6}, 34);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, concat_bands({x, x}), wcat);
          }) < 1e-4);

    const Tensor wslice = random_tensor({2, 4, 6}, 35);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, slice_bands(x, 1, 2), wslice);
          }) < 1e-4);

    const Tensor wflat = random_tensor({72}, 36);
    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, reshape(x, {72}), wflat);
          }) < 1e-4);
}

TEST_CASE("softmax and the spectral projection match finite differences") {
    const Tensor logits = random_tensor({5}, 41, 0.7);
    const Tensor wsoft = random_tensor({5}, 42);
    CHECK(fd_max_rel_err(logits, [&](Tape& t, Var x) {
              return project_loss(t, softmax(x), wsoft);
          }) < 1e-4);

    const Tensor cube = random_tensor({5, 4, 4}, 43, 0.8);
    const Tensor wplane = random_tensor({4, 4}, 44);

    // Gradient w.r.t. the cube at fixed weights.
    CHECK(fd_max_rel_err(cube, [&](Tape& t, Var x) {
              Var weights = softmax(t.constant(logits));
              return project_loss(t, spectral_project(x, weights), wplane);
          }) < 1e-4);

    // Gradient w.r.t. the logits through softmax at a fixed cube.
    CHECK(fd_max_rel_err(logits, [&](Tape& t, Var x) {
              return project_loss(t, spectral_project(t.constant(cube), softmax(x)), wplane);
          }) < 1e-4);
}

TEST_CASE("conv2d matches finite differences in input, kernel, and bias") {
    const Tensor x0 = random_tensor({2, 5, 5}, 51, 0.7);
    const Tensor k0 = random_tensor({3, 2, 3, 3}, 52, 0.5);
    const Tensor b0 = random_tensor({3}, 53, 0.5);
    const Tensor w = random_tensor({3, 5, 5}, 54);

    CHECK(fd_max_rel_err(x0, [&](Tape& t, Var x) {
              return project_loss(t, conv2d(x, t.constant(k0), t.constant(b0)), w);
          }) < 1e-4);
    CHECK(fd_max_rel_err(k0, [&](Tape& t, Var k) {
              return project_loss(t, conv2d(t.constant(x0), k, t.constant(b0)), w);
          }) < 1e-4);
    CHECK(fd_max_rel_err(b0, [&](Tape& t, Var b) {
              return project_loss(t, conv2d(t.constant(x0), t.constant(k0), b), w);
          }) < 1e-4);
}

TEST_CASE("broadcasting by singleton axes reduces gradients back to the leaf shape") {
    const Tensor small = random_tensor({2, 1, 3}, 61, 0.8);
    const Tensor big = random_tensor({2, 4, 3}, 62, 0.8);
    const Tensor w = random_tensor({2, 4, 3}, 63);
    CHECK(fd_max_rel_err(small, [&](Tape& t, Var x) {
              return project_loss(t, mul(x, t.constant(big)), w);
          }) < 1e-4);

    Tape tape;
    Var x = tape.leaf(small, true);
    Var loss = sum(mul(x, tape.constant(big)));
    CHECK(tape.backward(loss).grad(x).shape == std::vector<int>{2, 1, 3});
}

TEST_CASE("backward is linear in the loss") {
    const Tensor x0 = random_tensor({3, 3}, 71, 0.8);
    const double a = 0.7, b = -1.3;

    Tape tape;
    Var x = tape.leaf(x0, true);
    Var l1 = l2_norm_sq(x);
    Var l2 = sum(sigmoid(x));
    const Tensor g1 = tape.backward(l1).grad(x);
    const Tensor g2 = tape.backward(l2).grad(x);
    const Tensor combined = tape.backward(add(scale(l1, a), scale(l2, b))).grad(x);

    for (size_t i = 0; i < x0.data.size(); ++i)
        CHECK(combined.data[i] ==
              doctest::Approx(a * g1.data[i] + b * g2.data[i]).epsilon(1e-12));
}

TEST_CASE("identical seeds give bit-identical forwards and gradients") {
    auto run = [] {
        Tensor x0 = random_tensor({2, 4, 4}, 81, 0.8);
        Tape tape;
        Var x = tape.leaf(x0, true);
        Var loss = l2_norm_sq(sigmoid(conv2d(x, tape.constant(random_tensor({2, 2, 3, 3}, 82)))));
        Tensor g = tape.backward(loss).grad(x);
        return std::pair{loss.value().data[0], g};
    };
    const auto [v1, g1] = run();
    const auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(bit_identical(g1, g2));
}
