#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mapsam/adapt.hpp"
#include "support.hpp"

using namespace mapsam;
using testsupport::check_gradients;
using testsupport::random_tensor;

TEST_CASE("column_norms basics") {
  auto w = Tensor::from_data({2, 1}, {3, 4});
  CHECK(column_norms(w)->data[0] == doctest::Approx(5.0));

  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto n = column_norms(eye);
  CHECK(n->data[0] == 1.0);
  CHECK(n->data[1] == 1.0);
}

TEST_CASE("column_norms matches per-column sqrt-of-squares oracle") {
  Rng rng(31);
  auto w = random_tensor({8, 4}, rng, false);
  auto n = column_norms(w);
  for (int j = 0; j < 4; ++j) {
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) acc += w->data[i * 4 + j] * w->data[i * 4 + j];
    CHECK(std::fabs(n->data[j] - std::sqrt(acc)) < 1e-12);
  }
}

TEST_CASE("lora_merged zero B reproduces the base weight") {
  Rng rng(32);
  auto w0 = random_tensor({6, 5}, rng, false);
  auto a = random_tensor({2, 5}, rng, false);
  auto b = Tensor::create({6, 2});
  auto merged = lora_merged(w0, a, b);
  CHECK(merged->data == w0->data);
}

TEST_CASE("lora_merged full-rank cancellation and dense oracle") {
  Rng rng(33);
  auto w0 = random_tensor({3, 3}, rng, false);
  auto a = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto b = Tensor::create({3, 3});
  for (int i = 0; i < 9; ++i) b->data[i] = -w0->data[i];
  auto zero = lora_merged(w0, a, b);
  for (double v : zero->data) CHECK(std::fabs(v) < 1e-15);

  auto a2 = random_tensor({2, 4}, rng, false);
  auto b2 = random_tensor({5, 2}, rng, false);
  auto w02 = random_tensor({5, 4}, rng, false);
  auto merged = lora_merged(w02, a2, b2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = w02->data[i * 4 + j];
      for (int r = 0; r < 2; ++r) acc += b2->data[i * 2 + r] * a2->data[r * 4 + j];
      CHECK(merged->data[i * 4 + j] == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("lora_merged rejects rank mismatch") {
  auto w0 = Tensor::create({4, 4});
  auto a = Tensor::create({3, 4});
  auto b = Tensor::create({4, 2});
  CHECK_THROWS_AS(lora_merged(w0, a, b), ShapeError);
}

TEST_CASE("dora_merged initialization identity") {
  Rng rng(34);
  auto w0 = random_tensor({7, 5}, rng, false, -1.0, 1.0);
  auto a = random_tensor({3, 5}, rng, false, -0.01, 0.01);
  auto b = Tensor::create({7, 3});
  auto m = column_norms(w0);
  auto merged = dora_merged(w0, a, b, m);
  for (std::size_t i = 0; i < merged->data.size(); ++i)
    CHECK(std::fabs(merged->data[i] - w0->data[i]) < 1e-12);
}

TEST_CASE("dora_merged magnitude linearity and column-norm identity") {
  Rng rng(35);
  auto w0 = random_tensor({6, 4}, rng, false);
  auto a = random_tensor({2, 4}, rng, false, -0.3, 0.3);
  auto b = random_tensor({6, 2}, rng, false, -0.3, 0.3);
  auto m = random_tensor({1, 4}, rng, false, 0.5, 2.0);
  auto merged = dora_merged(w0, a, b, m);

  auto m2 = scale(m, 2.0);
  auto merged2 = dora_merged(w0, a, b, m2);
  for (std::size_t i = 0; i < merged->data.size(); ++i)
    CHECK(merged2->data[i] == doctest::Approx(2.0 * merged->data[i]).epsilon(1e-13));

  auto norms = column_norms(merged);
  for (int j = 0; j < 4; ++j)
    CHECK(std::fabs(norms->data[j] - std::fabs(m->data[j])) < 1e-9);
}

TEST_CASE("dora_merged rejects a zero-norm column") {
  auto w0 = Tensor::from_data({2, 2}, {1, 0, 1, 0});
  auto a = Tensor::create({1, 2});
  auto b = Tensor::create({2, 1});
  auto m = Tensor::from_data({1, 2}, {1, 1});
  CHECK_THROWS_AS(dora_merged(w0, a, b, m), SingularityError);
}

TEST_CASE("dora gradients flow into A, B, m but never W0") {
  Rng rng(36);
  auto w0 = random_tensor({5, 4}, rng, false);  // frozen
  auto a = random_tensor({2, 4}, rng, true, -0.2, 0.2);
  auto b = random_tensor({5, 2}, rng, true, -0.2, 0.2);
  auto m = random_tensor({1, 4}, rng, true, 0.5, 1.5);
  auto x = random_tensor({3, 4}, rng, false);

  auto res = check_gradients(
      [&]() { return sum_all(matmul_nt(x, dora_merged(w0, a, b, m))); }, {a, b, m});
  CHECK(res.max_rel_err < 1e-4);
  CHECK_FALSE(w0->has_grad());
}

TEST_CASE("adapted_forward step-0 equivalence across modes") {
  Rng rng(37);
  ParamStore params;
  auto w0 = random_tensor({8, 6}, rng, false);
  auto x = random_tensor({4, 6}, rng, false);

  AdaptedLinear frozen(w0);
  auto y_frozen = frozen.forward(x);

  AdaptedLinear dora(w0);
  dora.attach_adapter(AdaptMode::Dora, 3, 3.0, rng, params, "t.dora");
  auto y_dora = dora.forward(x);
  for (std::size_t i = 0; i < y_frozen->data.size(); ++i)
    CHECK(std::fabs(y_dora->data[i] - y_frozen->data[i]) < 1e-12);

  AdaptedLinear lora(w0);
  lora.attach_adapter(AdaptMode::Lora, 3, 3.0, rng, params, "t.lora");
  auto y_lora = lora.forward(x);
  CHECK(y_lora->data == y_frozen->data);  // B = 0 makes it exact
}

TEST_CASE("one gradient step changes output while W0 stays bitwise fixed") {
  Rng rng(38);
  ParamStore params;
  auto w0 = random_tensor({5, 5}, rng, false);
  const auto w0_snapshot = w0->data;
  AdaptedLinear lin(w0);
  lin.attach_adapter(AdaptMode::Dora, 2, 2.0, rng, params, "l");
  auto x = random_tensor({2, 5}, rng, false);

  Tape::current().clear();
  auto before = lin.forward(x);
  auto loss = mean_all(mul(before, before));
  backward(loss);
  // plain SGD step on the adapter parameters
  for (const auto& name : params.trainable_names()) {
    auto p = params.get(name);
    p->ensure_grad();
    for (std::size_t i = 0; i < p->data.size(); ++i) p->data[i] -= 0.1 * p->grad[i];
  }
  NoGradGuard ng;
  auto after = lin.forward(x);
  bool changed = false;
  for (std::size_t i = 0; i < after->data.size(); ++i)
    changed = changed || after->data[i] != before->data[i];
  CHECK(changed);
  CHECK(w0->data == w0_snapshot);
}

TEST_CASE("parameter counts: dora adds exactly k over lora") {
  Rng rng(39);
  const int d = 8, k = 6, r = 3;

  ParamStore frozen_store;
  frozen_store.add("w0", random_tensor({d, k}, rng, false));
  auto counts = frozen_store.parameter_counts();
  CHECK(counts.first == 0);
  CHECK(counts.second == d * k);

  ParamStore dora_store;
  auto w0d = random_tensor({d, k}, rng, false);
  dora_store.add("w0", w0d);
  AdaptedLinear dora(w0d);
  dora.attach_adapter(AdaptMode::Dora, r, static_cast<double>(r), rng, dora_store, "q");
  CHECK(dora_store.parameter_counts().first == r * (d + k) + k);

  ParamStore lora_store;
  auto w0l = random_tensor({d, k}, rng, false);
  lora_store.add("w0", w0l);
  AdaptedLinear lora(w0l);
  lora.attach_adapter(AdaptMode::Lora, r, static_cast<double>(r), rng, lora_store, "q");
  CHECK(dora_store.parameter_counts().first - lora_store.parameter_counts().first == k);
}
