#include "hfgn/numkernel.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hfgn::nk;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(r, c);
    for (double& v : t.values()) v = u(rng);
    return t;
}

/// Keeps entries away from the LeakyReLU kink.
Tensor away_from_zero(Tensor t) {
    for (double& v : t.values()) {
        if (std::abs(v) < 1e-2) v = v < 0 ? -0.5 : 0.5;
    }
    return t;
}

using OpFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max relative error of the analytic gradient of sum(op(params) ⊙ W) for a fixed random W.
double op_gradient_error(std::vector<Parameter>& params, const OpFn& op, std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    Tensor weights;
    auto loss_on = [&](Tape& tape) {
        std::vector<Var> vars;
        for (auto& p : params) vars.push_back(tape.param(p));
        Var out = op(tape, vars);
        if (weights.empty()) weights = random_tensor(out.rows(), out.cols(), rng);
        return sum(hadamard(out, tape.constant(weights)));
    };
    Tape tape;
    Var loss = loss_on(tape);
    tape.backward(loss);
    std::vector<Parameter*> ptrs;
    std::vector<Tensor> grads;
    for (auto& p : params) {
        ptrs.push_back(&p);
        grads.push_back(tape.gradient(p));
    }
    auto f = [&] {
        Tape t;
        return loss_on(t).value()[0];
    };
    return finite_diff_check(f, ptrs, grads, 1e-5).max_rel_error;
}

} // namespace

TEST_CASE("tensor construction and shape checks") {
    Tensor t(2, 3, 1.5);
    CHECK(t.size() == 6);
    CHECK(t(1, 2) == 1.5);
    CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK(Tensor::column({1, 2, 3}).rows() == 3);
    CHECK(Tensor::row({1, 2, 3}).cols() == 3);
    CHECK(Tensor::identity(2)(1, 1) == 1.0);
    CHECK(Tensor::identity(2)(0, 1) == 0.0);
}

TEST_CASE("matmul values") {
    Tape tape;
    Var id = tape.constant(Tensor::identity(2));
    Var m = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
    CHECK(matmul(id, m).value() == Tensor(2, 2, {1, 2, 3, 4}));
    CHECK(matmul(tape.constant(Tensor::row({1, 2})), tape.constant(Tensor::column({3, 4}))).value()[0] == 11.0);
    CHECK_THROWS_AS(matmul(m, tape.constant(Tensor(3, 1))), ShapeError);
    CHECK(matmul_nt(m, m).value() == Tensor(2, 2, {5, 11, 11, 25}));
}

TEST_CASE("hadamard values") {
    Tape tape;
    Var a = tape.constant(Tensor::row({1, -1}));
    CHECK(hadamard(a, tape.constant(Tensor::row({1, 1}))).value() == Tensor::row({1, -1}));
    CHECK(hadamard(a, tape.constant(Tensor(1, 2))).value() == Tensor(1, 2));
    CHECK_THROWS_AS(hadamard(a, tape.constant(Tensor(2, 1))), ShapeError);
}

TEST_CASE("leaky_relu values and slope contract") {
    Tape tape;
    Var x = tape.constant(Tensor::row({-1, 0, 2}));
    const Tensor y = leaky_relu(x, 0.2).value();
    CHECK(y[0] == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
    CHECK(leaky_relu(tape.constant(Tensor(2, 2)), 0.2).value() == Tensor(2, 2));
    CHECK_THROWS_AS(leaky_relu(x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(leaky_relu(x, 1.0), std::invalid_argument);
}

TEST_CASE("leaky_relu subgradient at zero equals the slope") {
    Parameter p{"p", Tensor::row({0.0})};
    Tape tape;
    Var out = sum(leaky_relu(tape.param(p), 0.2));
    tape.backward(out);
    CHECK(tape.gradient(p)[0] == 0.2);
}

TEST_CASE("softmax_rows values, stability and normalization") {
    Tape tape;
    const Tensor eq = softmax_rows(tape.constant(Tensor::row({3, 3, 3, 3}))).value();
    for (double v : eq.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    const Tensor big = softmax_rows(tape.constant(Tensor::row({1000, 0}))).value();
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor s = softmax_rows(tape.constant(random_tensor(4, 7, rng, -30, 30))).value();
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0.0;
            for (double v : s.row_span(r)) total += v;
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("sigmoid and log_sigmoid scalars") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-745.0) > 0.0);
    CHECK(std::isfinite(log_sigmoid(-745.0)));
    CHECK(log_sigmoid(-745.0) == doctest::Approx(-745.0));
    CHECK(log_sigmoid(800.0) == 0.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-40, 40);
    for (int k = 0; k < 1000; ++k) {
        const double x = u(rng);
        CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12);
    }
}

TEST_CASE("backward on simple losses") {
    Parameter p{"p", Tensor::row({1, 2})};
    Parameter q{"q", Tensor::row({5, 5})};
    Tape tape;
    Var pv = tape.param(p);
    Var loss = sum(hadamard(pv, pv));
    tape.backward(loss);
    CHECK(tape.gradient(p) == Tensor::row({2, 4}));
    CHECK(tape.gradient(q) == Tensor(1, 2));
    CHECK_FALSE(tape.touched(q));
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
}

TEST_CASE("backward rejects a non-scalar root") {
    Parameter p{"p", Tensor::row({1, 2})};
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.param(p)), ShapeError);
}

TEST_CASE("gradients accumulate across uses of one parameter") {
    std::mt19937_64 rng(9);
    Parameter p{"p", random_tensor(3, 2, rng)};
    Parameter c{"c", random_tensor(3, 2, rng)};
    // p used twice through separate binds vs a single doubled use.
    Tape t1;
    Var l1 = add(sum(hadamard(t1.param(p), t1.param(c))), sum(hadamard(t1.param(p), t1.param(c))));
    t1.backward(l1);
    Tape t2;
    Var l2 = scale(sum(hadamard(t2.param(p), t2.param(c))), 2.0);
    t2.backward(l2);
    const Tensor g1 = t1.gradient(p), g2 = t2.gradient(p);
    for (std::size_t k = 0; k < g1.size(); ++k) CHECK(g1[k] == doctest::Approx(g2[k]).epsilon(1e-14));

    // Rows gathered twice from an embedding accumulate as well.
    Tape t3;
    const std::size_t rows[] = {1, 1, 2};
    Var g = t3.param_rows(p, rows);
    t3.backward(sum(g));
    const Tensor ge = t3.gradient(p);
    CHECK(ge(0, 0) == 0.0);
    CHECK(ge(1, 0) == 2.0);
    CHECK(ge(2, 1) == 1.0);
}

TEST_CASE("non-finite values are rejected") {
    Tape tape;
    Var x = tape.constant(Tensor::row({1e308, 1e308}));
    CHECK_THROWS_AS(add(x, x), NonFiniteError);
    CHECK_THROWS_AS(tape.constant(Tensor::row({std::nan("")})), NonFiniteError);
}

TEST_CASE("finite-difference check is exact for a quadratic") {
    Parameter p{"p", Tensor::row({1, 2, 3})};
    Tape tape;
    Var v = tape.param(p);
    tape.backward(sum(hadamard(v, v)));
    std::vector<Parameter*> ps{&p};
    std::vector<Tensor> g{tape.gradient(p)};
    auto f = [&] {
        double s = 0;
        for (double x : p.value.values()) s += x * x;
        return s;
    };
    const auto report = finite_diff_check(f, ps, g, 1e-5);
    CHECK(report.max_rel_error < 1e-8);
    CHECK(p.value == Tensor::row({1, 2, 3})); // restored
}

TEST_CASE("every op passes a finite-difference check") {
    std::mt19937_64 rng(17);
    const std::vector<std::size_t> offsets{0, 2, 3, 6};
    const std::vector<std::size_t> gather{4, 0, 0, 2, 5};
    const std::vector<double> row_w{0.5, -1.0, 2.0, 0.25, 1.5, -0.75};

    struct Case {
        const char* name;
        std::vector<std::pair<std::size_t, std::size_t>> shapes;
        OpFn op;
        bool avoid_kink = false;
    };
    const std::vector<Case> cases = {
        {"matmul", {{3, 4}, {4, 2}}, [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }},
        {"matmul_nt", {{3, 4}, {2, 4}}, [](Tape&, const std::vector<Var>& v) { return matmul_nt(v[0], v[1]); }},
        {"transpose", {{3, 4}}, [](Tape&, const std::vector<Var>& v) { return transpose(v[0]); }},
        {"add", {{2, 3}, {2, 3}}, [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }},
        {"sub", {{2, 3}, {2, 3}}, [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }},
        {"hadamard", {{1, 5}, {1, 5}}, [](Tape&, const std::vector<Var>& v) { return hadamard(v[0], v[1]); }},
        {"scale", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return scale(v[0], -1.7); }},
        {"add_row", {{4, 3}, {1, 3}}, [](Tape&, const std::vector<Var>& v) { return add_row(v[0], v[1]); }},
        {"leaky_relu", {{3, 5}}, [](Tape&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.2); }, true},
        {"softmax_rows", {{2, 3}}, [](Tape&, const std::vector<Var>& v) { return softmax_rows(v[0]); }},
        {"segment_softmax", {{6, 3}},
         [&](Tape&, const std::vector<Var>& v) { return segment_softmax(v[0], offsets); }},
        {"segment_sum", {{6, 3}}, [&](Tape&, const std::vector<Var>& v) { return segment_sum(v[0], offsets); }},
        {"gather_rows", {{6, 2}}, [&](Tape&, const std::vector<Var>& v) { return gather_rows(v[0], gather); }},
        {"scatter_add_rows", {{5, 2}},
         [&](Tape&, const std::vector<Var>& v) { return scatter_add_rows(v[0], gather, 6); }},
        {"scale_rows", {{6, 2}}, [&](Tape&, const std::vector<Var>& v) { return scale_rows(v[0], row_w); }},
        {"row_sum", {{4, 3}}, [](Tape&, const std::vector<Var>& v) { return row_sum(v[0]); }},
        {"sum", {{4, 3}}, [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }},
        {"log_sigmoid", {{4, 1}}, [](Tape&, const std::vector<Var>& v) { return log_sigmoid(v[0]); }},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        std::vector<Parameter> params;
        for (const auto& [r, cols] : c.shapes) {
            Tensor t = random_tensor(r, cols, rng);
            if (c.avoid_kink) t = away_from_zero(std::move(t));
            params.push_back({c.name, std::move(t)});
        }
        CHECK(op_gradient_error(params, c.op) < 1e-6);
    }
}

TEST_CASE("segment_softmax normalizes each column within each segment") {
    std::mt19937_64 rng(2);
    const std::vector<std::size_t> offsets{0, 1, 4, 8};
    Tape tape;
    const Tensor s = segment_softmax(tape.constant(random_tensor(8, 3, rng, -5, 5)), offsets).value();
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
        for (std::size_t c = 0; c < 3; ++c) {
            double total = 0.0;
            for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r) total += s(r, c);
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(segment_softmax(tape.constant(Tensor(3, 1)), std::vector<std::size_t>{0, 2}), ShapeError);
}

TEST_CASE("touched_sq_norm covers whole parameters and distinct gathered rows") {
    Parameter e{"e", Tensor(4, 2, {1, 1, 2, 2, 3, 3, 4, 4})};
    Parameter w{"w", Tensor::row({0.5, 0.5})};
    Parameter unused{"unused", Tensor::row({100.0})};
    Tape tape;
    const std::size_t rows[] = {2, 0, 2};
    Var g = tape.param_rows(e, rows);
    Var x = add_row(g, tape.param(w));
    Var reg = tape.touched_sq_norm();
    // rows 0 and 2 once each: 1+1+9+9, plus w: 0.25+0.25
    CHECK(reg.value()[0] == doctest::Approx(20.5).epsilon(1e-15));
    tape.backward(add(sum(x), reg));
    const Tensor ge = tape.gradient(e);
    // d/de of sum(x): 2 for row 2, 1 for row 0; reg adds 2*e for touched rows.
    CHECK(ge(2, 0) == doctest::Approx(2.0 + 6.0));
    CHECK(ge(0, 0) == doctest::Approx(1.0 + 2.0));
    CHECK(ge(1, 0) == 0.0);
    CHECK(tape.gradient(unused)[0] == 0.0);
}

TEST_CASE("identical inputs give bit-identical results") {
    auto run = [] {
        std::mt19937_64 rng(77);
        Parameter a{"a", random_tensor(5, 4, rng)};
        Parameter b{"b", random_tensor(3, 4, rng)};
        Tape tape;
        Var out = sum(softmax_rows(matmul_nt(tape.param(a), tape.param(b))));
        tape.backward(out);
        return tape.gradient(a);
    };
    CHECK(run() == run());
}
