#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "maskinfill/adam.hpp"
#include "maskinfill/gradcheck.hpp"
#include "maskinfill/rng.hpp"
#include "maskinfill/tape.hpp"
#include "maskinfill/tensor.hpp"

using namespace maskinfill;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

// Wraps a graph builder so that gradient_check drives it end to end.
double max_grad_err(std::vector<Tensor> params,
                    const std::function<Var(Tape&, const std::vector<Var>&)>& fn,
                    std::uint64_t seed = 1) {
    return gradient_check(std::move(params), fn, 1e-5, 200, seed).max_rel_err;
}

}  // namespace

TEST_CASE("elementwise and scaling ops match finite differences") {
    Rng rng(11);
    std::vector<Tensor> params = {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};

    auto check = [&](auto build) {
        return max_grad_err(params, [&](Tape& t, const std::vector<Var>& v) {
            return sum(build(t, v));
        });
    };

    CHECK(check([](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return scale(v[0], -2.5); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return tanh(v[0]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return gelu(v[0]); }) < 1e-4);
    CHECK(check([](Tape&, const std::vector<Var>& v) { return mul(relu(v[0]), v[1]); }) < 1e-4);
}

TEST_CASE("matrix product ops match finite differences") {
    Rng rng(12);
    {
        std::vector<Tensor> p = {random_tensor({3, 5}, rng), random_tensor({5, 2}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(matmul(v[0], v[1]));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({4, 3}, rng), random_tensor({3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(matvec(v[0], v[1]));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({3}, rng), random_tensor({3, 4}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(vecmat(v[0], v[1]));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({4, 3}, rng), random_tensor({3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(add_rowwise(v[0], v[1]));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({4, 3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(transpose(v[0])));
              }) < 1e-4);
    }
}

TEST_CASE("gather, slice and stack ops match finite differences") {
    Rng rng(13);
    {
        // Duplicate ids make the scatter-add path observable.
        std::vector<Tensor> p = {random_tensor({6, 4}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(rows(v[0], {0, 2, 2, 5})));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({4, 6}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(mul(row(v[0], 2), row(v[0], 1)));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({8}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(slice(v[0], 2, 6)));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({3, 8}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(mul(slice_cols(v[0], 0, 4), slice_cols(v[0], 4, 8)));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(concat_cols({v[0], v[1]})));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({3}, rng), random_tensor({4}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(concat_vecs({v[0], v[1]})));
              }) < 1e-4);
    }
    {
        // One var row, one constant row.
        std::vector<Tensor> p = {random_tensor({5}, rng)};
        CHECK(max_grad_err(p, [](Tape& t, const std::vector<Var>& v) {
                  Tensor fixed({5});
                  for (std::size_t i = 0; i < 5; ++i) fixed[i] = 0.3 * static_cast<double>(i);
                  Var stacked = stack_rows(t, {RowSpec(v[0]), RowSpec(fixed)});
                  return sum(tanh(stacked));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({6, 3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(tanh(im2col_rows(v[0], 3)));
              }) < 1e-4);
    }
}

TEST_CASE("softmax, cross entropy, pooling and layer norm match finite differences") {
    Rng rng(14);
    {
        std::vector<Tensor> p = {random_tensor({3, 5}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(mul(softmax_rows(v[0], 0.7), v[0]));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({4, 6}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return ce_rows(v[0], {1, 0, 5, 2}, {1.0, 0.0, 0.5, 2.0});
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({5, 3}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(max_pool_cols(scale(v[0], 2.0)));
              }) < 1e-4);
    }
    {
        std::vector<Tensor> p = {random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                 random_tensor({6}, rng)};
        CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
                  return sum(mul(layer_norm_rows(v[0], v[1], v[2]), v[0]));
              }) < 1e-4);
    }
}

TEST_CASE("constant computation has zero analytic and numeric gradient") {
    std::vector<Tensor> p = {Tensor({3, 3}, 0.5)};
    auto report = gradient_check(p, [](Tape& t, const std::vector<Var>& v) {
        (void)v;
        return t.leaf(Tensor::scalar(7.0));
    });
    CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("softmax cross entropy gradient equals p minus one-hot") {
    Rng rng(15);
    Tensor logits = random_tensor({6}, rng);
    Tape tape;
    Var x = tape.leaf(logits);
    Var loss = ce_rows(x, {3}, {1.0});
    tape.backward(loss);

    const std::vector<double> probs =
        softmax_temperature(std::vector<double>(logits.data(), logits.data() + 6), 1.0);
    for (std::size_t j = 0; j < 6; ++j) {
        const double expected = probs[j] - (j == 3 ? 1.0 : 0.0);
        CHECK(std::abs(x.grad()[j] - expected) < 1e-12);
    }

    std::vector<Tensor> p = {logits};
    CHECK(max_grad_err(p, [](Tape&, const std::vector<Var>& v) {
              return ce_rows(v[0], {3}, {1.0});
          }) < 1e-6);
}

TEST_CASE("softmax temperature values") {
    CHECK(softmax_temperature(std::vector<double>{0.0, 0.0}, 1.0)[0] == Catch::Approx(0.5));

    const auto sharp = softmax_temperature(std::vector<double>{1.0, 0.0}, 0.5);
    CHECK(sharp[0] == Catch::Approx(0.8808).margin(1e-4));
    CHECK(sharp[1] == Catch::Approx(0.1192).margin(1e-4));

    const auto cold = softmax_temperature(std::vector<double>{2.0, 1.0, -1.0}, 0.01);
    CHECK(cold[0] >= 1.0 - 1e-6);

    CHECK_THROWS_AS(softmax_temperature(std::vector<double>{1.0, 2.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(softmax_temperature(std::vector<double>{1.0, 2.0}, -1.0), std::invalid_argument);

    // Tape version agrees and is differentiable.
    Tape tape;
    Var x = tape.leaf(Tensor::row({1.0, 0.0}));
    Var y = softmax_temperature(x, 0.5);
    CHECK(y.value()[0] == Catch::Approx(0.8808).margin(1e-4));
}

TEST_CASE("softmax rows produce valid distributions") {
    Rng rng(16);
    for (int rep = 0; rep < 20; ++rep) {
        Tape tape;
        Var x = tape.leaf(random_tensor({4, 7}, rng, 5.0));
        Var y = softmax_rows(x, rng.uniform(0.05, 3.0));
        for (std::size_t i = 0; i < 4; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(y.value().at(i, j) >= 0.0);
                total += y.value().at(i, j);
            }
            CHECK(total == Catch::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("non-finite values are a hard error") {
    Tape tape;
    Var x = tape.leaf(Tensor::row({1e200}));
    Var w = tape.leaf(Tensor::row({1e200}));
    CHECK_THROWS_AS(mul(x, w), std::runtime_error);  // overflows to inf
    CHECK_THROWS((void)tape.leaf(Tensor::row({std::numeric_limits<double>::infinity()})));
}

TEST_CASE("backward rejects non-scalar outputs") {
    Tape tape;
    Var x = tape.leaf(Tensor::row({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("Adam is bit-deterministic for a fixed seed and data order") {
    auto run = [&] {
        Rng rng(99);
        Tensor w = random_tensor({4, 4}, rng, 0.3);
        Tensor b = random_tensor({4}, rng, 0.3);
        Adam opt(1e-2);
        for (int step = 0; step < 25; ++step) {
            Tape tape;
            Var wv = tape.leaf(w);
            Var bv = tape.leaf(b);
            Var x = tape.leaf(random_tensor({3, 4}, rng));
            Var h = tanh(add_rowwise(matmul(x, wv), bv));
            Var loss = sum(mul(h, h));
            tape.backward(loss);
            const Tensor gw = wv.grad();
            const Tensor gb = bv.grad();
            opt.step({&w, &b}, {&gw, &gb});
        }
        return std::make_pair(w, b);
    };
    auto [w1, b1] = run();
    auto [w2, b2] = run();
    for (std::size_t i = 0; i < w1.size(); ++i) CHECK(w1[i] == w2[i]);
    for (std::size_t i = 0; i < b1.size(); ++i) CHECK(b1[i] == b2[i]);
}

TEST_CASE("Rng stream is stable across invocations") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
    }
    Rng c(7);
    Rng d = c.fork("task");
    Rng e(7);
    Rng f = e.fork("task");
    CHECK(d.next_u64() == f.next_u64());
}
