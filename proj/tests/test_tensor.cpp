#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "quisg/errors.hpp"
#include "quisg/params.hpp"
#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"

using namespace quisg;
using nn::Init;
using nn::ParameterStore;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

namespace {

// Collapses any matrix to 1x1 by multiplying with ones on both sides.
Tensor sum_all(Tape& tape, const Tensor& t) {
  Tensor left = Tensor::constant({1, t.shape().rows}, 1.0);
  Tensor right = Tensor::constant({t.shape().cols, 1}, 1.0);
  return tape.matmul(tape.matmul(left, t), right);
}

void expect_clean_check(const nn::LossFn& loss, std::uint64_t seed,
                        const std::vector<std::pair<std::string, Shape>>& params) {
  ParameterStore store(seed);
  for (const auto& [name, shape] : params)
    store.get_or_create(name, shape, Init::kUniformFanIn);
  auto report = nn::finite_diff_check(loss, store, 1e-5, 1e-4);
  CHECK(report.ok());
  if (!report.ok()) {
    for (const auto& f : report.failures)
      MESSAGE(f.name, "[", f.index, "] analytic=", f.analytic,
              " numeric=", f.numeric, " rel=", f.rel_error);
  }
  CHECK(report.checked > 0);
}

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() / stem;
}

bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(fa)), {});
  std::string cb((std::istreambuf_iterator<char>(fb)), {});
  return !ca.empty() && ca == cb;
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.shape().rows == 2);
  CHECK(t.shape().cols == 3);
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(1, 2) == 6.0);
  Tensor z = Tensor::zeros({2, 2});
  CHECK(z.at(1, 1) == 0.0);
  Tensor c = Tensor::constant({1, 4}, 2.5);
  CHECK(c.at(0, 3) == 2.5);
  Tensor s = Tensor::scalar(7.0);
  CHECK(s.shape().rows == 1);
  CHECK(s.shape().cols == 1);
  CHECK(s.value() == 7.0);
}

TEST_CASE("copies share storage; tensors are views of one buffer") {
  Tensor a = Tensor::from_values({1, 2}, {1, 2});
  Tensor b = a;
  CHECK(a.same_storage(b));
  b.set(0, 1, 9.0);
  CHECK(a.at(0, 1) == 9.0);
}

TEST_CASE("sigmoid of zero is one half") {
  Tape tape;
  Tensor x = Tensor::scalar(0.0);
  CHECK(tape.sigmoid(x).value() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax of a uniform row is exactly uniform") {
  Tape tape;
  Tensor x = Tensor::constant({1, 4}, 3.7);
  Tensor y = tape.softmax_rows(x);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(y.at(0, c) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("binary cross-entropy of an even guess is ln 2") {
  Tape tape;
  Tensor p = Tensor::constant({1, 1}, 0.5);
  Tensor label = Tensor::constant({1, 1}, 1.0);
  CHECK(tape.bce_sum(p, label).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("gradient of bce(sigmoid(x), 1) at x=0 is -0.5") {
  Tape tape;
  Tensor x = Tensor::from_values({1, 1}, {0.0}, true);
  Tensor loss = tape.bce_sum(tape.sigmoid(x), Tensor::constant({1, 1}, 1.0));
  tape.backward(loss);
  CHECK(x.grad().at(0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("cross entropy of a uniform row over 4 classes is ln 4") {
  Tape tape;
  Tensor logits = Tensor::constant({1, 4}, 0.0);
  CHECK(tape.cross_entropy(logits, 2).value() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("two consumers of one tensor accumulate both gradients") {
  // loss = sum(x) + sum(x * x); d/dx = 1 + 2x
  Tape tape;
  Tensor x = Tensor::from_values({1, 3}, {0.5, -1.0, 2.0}, true);
  Tensor loss = tape.add(sum_all(tape, x), sum_all(tape, tape.mul(x, x)));
  tape.backward(loss);
  CHECK(x.grad().at(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad().at(1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(x.grad().at(2) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("backward refuses a second replay and non-scalar losses") {
  Tape tape;
  Tensor x = Tensor::from_values({1, 1}, {1.0}, true);
  Tensor loss = tape.mul(x, x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), PreconditionError);

  Tape tape2;
  Tensor y = Tensor::from_values({1, 2}, {1.0, 2.0}, true);
  Tensor wide = tape2.mul(y, y);
  CHECK_THROWS_AS(tape2.backward(wide), PreconditionError);
}

TEST_CASE("fully masked softmax row raises a numeric error") {
  Tape tape;
  Tensor x = Tensor::constant({2, 3}, 1.0);
  Tensor mask = Tensor::from_values({2, 3}, {1, 1, 1, 0, 0, 0});
  CHECK_THROWS_AS(tape.softmax_rows(x, &mask), NumericError);
}

TEST_CASE("masked softmax puts exact zeros on masked entries") {
  Tape tape;
  Tensor x = Tensor::from_values({1, 4}, {5.0, 1.0, -2.0, 0.5});
  Tensor mask = Tensor::from_values({1, 4}, {1, 0, 1, 0});
  Tensor y = tape.softmax_rows(x, &mask);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(0, 3) == 0.0);
  CHECK(y.at(0, 0) + y.at(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
}

// ------------------------------------------------- finite differences --

TEST_CASE("finite differences: matmul / transpose / add / mul chains") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor a = store.get("a");
        Tensor b = store.get("b");
        Tensor prod = tape.matmul(a, b);
        Tensor mixed = tape.mul(prod, tape.transpose(tape.matmul(
                                          tape.transpose(b), tape.transpose(a))));
        return sum_all(tape, tape.add(prod, mixed));
      },
      11, {{"a", {3, 4}}, {"b", {4, 5}}});
}

TEST_CASE("finite differences: scale and add_rowvec") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor bias = store.get("bias");
        return sum_all(tape, tape.scale(tape.add_rowvec(x, bias), -1.7));
      },
      12, {{"x", {4, 6}}, {"bias", {1, 6}}});
}

TEST_CASE("finite differences: concat and slice round trips") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor a = store.get("a");
        Tensor b = store.get("b");
        std::vector<Tensor> cols{a, b};
        Tensor wide = tape.concat_cols(cols);
        std::vector<Tensor> rows{wide, wide};
        Tensor tall = tape.concat_rows(rows);
        Tensor s1 = tape.slice_rows(tall, 1, 4);
        Tensor s2 = tape.slice_cols(s1, 2, 5);
        return sum_all(tape, tape.mul(s2, s2));
      },
      13, {{"a", {3, 3}}, {"b", {3, 4}}});
}

TEST_CASE("finite differences: gather with repeats and scatter_add") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor table = store.get("table");
        Tensor base = store.get("base");
        Tensor picked = tape.gather_rows(table, {0, 2, 2, 4, 1});
        Tensor spread =
            tape.scatter_add_rows(base, picked, {1, 0, 3, 1, 2});
        return sum_all(tape, tape.mul(spread, spread));
      },
      14, {{"table", {5, 3}}, {"base", {4, 3}}});
}

TEST_CASE("finite differences: nonlinearities") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor mid = tape.elu(tape.scale(x, 1.9));
        Tensor lk = tape.leaky_relu(mid, 0.2);
        return sum_all(tape, tape.sigmoid(lk));
      },
      15, {{"x", {4, 5}}});
}

TEST_CASE("finite differences: softmax rows with and without mask") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor plain = tape.softmax_rows(x);
        Tensor mask = Tensor::from_values(
            {3, 4}, {1, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 0});
        Tensor masked = tape.softmax_rows(x, &mask);
        return sum_all(tape, tape.mul(plain, masked));
      },
      16, {{"x", {3, 4}}});
}

TEST_CASE("finite differences: pooling") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor mx = tape.maxpool_rows(x, 1, 5);
        Tensor mean = tape.meanpool_rows(x, {0, 2, 2, 5});
        std::vector<Tensor> parts{mx, mean};
        return sum_all(tape, tape.mul(tape.concat_rows(parts),
                                      tape.concat_rows(parts)));
      },
      17, {{"x", {6, 4}}});
}

TEST_CASE("finite differences: losses") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor labels = Tensor::from_values({4, 1}, {1, 0, 1, 0});
        Tensor bce = tape.bce_sum(tape.sigmoid(x), labels);
        Tensor row = store.get("row");
        Tensor ce_row = tape.cross_entropy(row, 2);
        Tensor col = store.get("col");
        Tensor ce_col = tape.cross_entropy(col, 3);
        return tape.add(bce, tape.add(ce_row, ce_col));
      },
      18, {{"x", {4, 1}}, {"row", {1, 5}}, {"col", {6, 1}}});
}

TEST_CASE("finite differences: custom unary with a correct derivative") {
  expect_clean_check(
      [](Tape& tape, ParameterStore& store) {
        Tensor x = store.get("x");
        Tensor cubed = tape.custom_unary(
            x, "cube", [](double v) { return v * v * v; },
            [](double in, double) { return 3.0 * in * in; });
        return sum_all(tape, cubed);
      },
      19, {{"x", {3, 3}}});
}

TEST_CASE("a corrupted derivative is caught and localized") {
  // The unary op lies about its derivative. Only parameters feeding the
  // corrupted op fail the check; the clean branch stays green.
  ParameterStore store(20);
  store.get_or_create("bad_in", {2, 2}, Init::kUniformFanIn);
  store.get_or_create("clean_in", {2, 2}, Init::kUniformFanIn);
  auto loss = [](Tape& tape, ParameterStore& store) {
    Tensor mangled = tape.custom_unary(
        store.get("bad_in"), "broken_elu",
        [](double v) { return v > 0 ? v : std::expm1(v); },
        [](double, double) { return 1.0; });  // wrong on the negative side
    return tape.add(sum_all(tape, mangled),
                    sum_all(tape, tape.mul(store.get("clean_in"),
                                           store.get("clean_in"))));
  };
  auto report = nn::finite_diff_check(loss, store, 1e-5, 1e-4);
  CHECK_FALSE(report.ok());
  bool bad_named = false;
  for (const auto& f : report.failures) {
    CHECK(f.name == "bad_in");
    if (f.name == "bad_in") bad_named = true;
  }
  CHECK(bad_named);
}

TEST_CASE("finite_diff_check rejects a non-deterministic loss") {
  ParameterStore store(21);
  store.get_or_create("x", {2, 2}, Init::kUniformFanIn);
  int calls = 0;
  auto loss = [&calls](Tape& tape, ParameterStore& store) {
    ++calls;
    return sum_all(tape, tape.scale(store.get("x"), 1.0 + 0.001 * calls));
  };
  CHECK_THROWS_AS(nn::finite_diff_check(loss, store, 1e-5, 1e-4),
                  PreconditionError);
}

// --------------------------------------------------------------- adam --

TEST_CASE("first adam step moves by lr / (1 + eps) for unit gradient") {
  ParameterStore store(30);
  Tensor w = store.get_or_create("w", {1, 1}, Init::kZeros);
  double before = w.value();
  {
    Tape tape;
    Tensor loss = tape.scale(store.get("w"), 1.0);  // dL/dw = 1
    tape.backward(loss);
  }
  store.adam_step(0.1);
  double moved = before - store.get("w").value();
  CHECK(moved == doctest::Approx(0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(store.step_count() == 1);
}

TEST_CASE("adam leaves parameters exactly fixed under zero gradients") {
  ParameterStore store(31);
  store.get_or_create("w", {2, 2}, Init::kUniformFanIn);
  auto before = store.get("w").values();
  std::vector<double> snapshot(before.begin(), before.end());
  {
    Tape tape;
    Tensor loss = sum_all(tape, tape.scale(store.get("w"), 0.0));
    tape.backward(loss);
  }
  store.adam_step(0.5);
  auto after = store.get("w").values();
  for (std::size_t i = 0; i < snapshot.size(); ++i)
    CHECK(after[i] == snapshot[i]);
}

TEST_CASE("adam_step without gradients names the missing parameter") {
  ParameterStore store(32);
  store.get_or_create("lonely", {1, 1}, Init::kZeros);
  CHECK_THROWS_AS(store.adam_step(0.1), PreconditionError);
}

TEST_CASE("ten optimizer steps are bit-identical across runs") {
  auto run = [](const std::filesystem::path& out) {
    ParameterStore store(33);
    store.get_or_create("w", {3, 3}, Init::kUniformFanIn);
    store.get_or_create("b", {1, 3}, Init::kZeros);
    for (int step = 0; step < 10; ++step) {
      Tape tape;
      Tensor h = Tensor::constant({2, 3}, 0.5 + 0.1 * step);
      Tensor y = tape.add_rowvec(tape.matmul(h, store.get("w")), store.get("b"));
      Tensor loss = tape.bce_sum(tape.sigmoid(tape.matmul(
                                     Tensor::constant({1, 2}, 1.0), y)),
                                 Tensor::constant({1, 3}, 1.0));
      tape.backward(loss);
      store.adam_step(1e-2);
    }
    store.save(out);
  };
  auto p1 = temp_file("quisg_adam_a.bin");
  auto p2 = temp_file("quisg_adam_b.bin");
  run(p1);
  run(p2);
  CHECK(same_bytes(p1, p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

// --------------------------------------------------------- checkpoints --

TEST_CASE("checkpoints round trip bit-exactly with optimizer state") {
  ParameterStore store(34);
  store.get_or_create("layer.W", {4, 2}, Init::kUniformFanIn);
  store.get_or_create("layer.b", {1, 2}, Init::kZeros);
  {
    Tape tape;
    Tensor y = tape.matmul(Tensor::constant({1, 4}, 1.0), store.get("layer.W"));
    Tensor loss = tape.bce_sum(tape.sigmoid(tape.add(y, store.get("layer.b"))),
                               Tensor::constant({1, 2}, 0.0));
    tape.backward(loss);
  }
  store.adam_step(1e-3);

  auto p1 = temp_file("quisg_ckpt_a.bin");
  auto p2 = temp_file("quisg_ckpt_b.bin");
  store.save(p1);

  ParameterStore restored(999);  // seed does not matter for loading
  restored.load(p1);
  CHECK(restored.step_count() == store.step_count());
  auto names = store.names();
  for (const auto& name : names) {
    auto a = store.get(name).values();
    auto b = restored.get(name).values();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  restored.save(p2);
  CHECK(same_bytes(p1, p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("get_or_create enforces shape agreement") {
  ParameterStore store(35);
  store.get_or_create("w", {2, 3}, Init::kZeros);
  CHECK_THROWS_AS(store.get_or_create("w", {3, 2}, Init::kZeros),
                  LookupError);
  CHECK_THROWS_AS(store.get("nope"), LookupError);
  CHECK(store.contains("w"));
  CHECK_FALSE(store.contains("nope"));
}

TEST_CASE("same seed reproduces identical initial values") {
  ParameterStore s1(42), s2(42), s3(43);
  Tensor a = s1.get_or_create("w", {4, 4}, Init::kUniformFanIn);
  Tensor b = s2.get_or_create("w", {4, 4}, Init::kUniformFanIn);
  Tensor c = s3.get_or_create("w", {4, 4}, Init::kUniformFanIn);
  auto va = a.values(), vb = b.values(), vc = c.values();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    all_equal = all_equal && va[i] == vb[i];
    any_diff = any_diff || va[i] != vc[i];
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("maxpool picks the first maximum on ties") {
  Tape tape;
  Tensor x = Tensor::from_values({3, 2}, {5, 1, 5, 3, 2, 3}, true);
  Tensor pooled = tape.maxpool_rows(x, 0, 3);
  CHECK(pooled.at(0, 0) == 5.0);
  CHECK(pooled.at(0, 1) == 3.0);
  Tensor loss = sum_all(tape, pooled);
  tape.backward(loss);
  // gradient flows to row 0 col 0 and row 1 col 1 only
  CHECK(x.grad().at(0 * 2 + 0) == 1.0);
  CHECK(x.grad().at(1 * 2 + 0) == 0.0);
  CHECK(x.grad().at(1 * 2 + 1) == 1.0);
  CHECK(x.grad().at(2 * 2 + 1) == 0.0);
}
