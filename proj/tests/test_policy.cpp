#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kehrl/graph.hpp"
#include "kehrl/policy.hpp"
#include "kehrl/rng.hpp"
#include "kehrl/tensor.hpp"

using namespace kehrl;

namespace {

Tensor random_state(int dim, Rng& rng) {
  Tensor t(1, dim);
  for (double& x : t.v) x = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("zero-initialized output layer yields probability one half everywhere") {
  Policy pol(5, 4);
  Rng rng(3);
  pol.init_params(rng);
  Graph g;
  ParamBinder bind(g, pol.params());
  Rng srng(4);
  const Tensor probs = g.value(pol.forward(g, bind, g.input(random_state(20, srng))));
  REQUIRE(probs.cols == 5);
  for (int i = 0; i < 5; ++i) CHECK(probs.at(0, i) == 0.5);
}

TEST_CASE("policy forward validates the state shape and clamps probabilities") {
  Policy pol(3, 2);
  Rng rng(5);
  pol.init_params(rng);
  // Huge output weights saturate the sigmoid; the clamp must hold.
  for (double& x : pol.params().tensor("w2").v) x = 200.0;
  Graph g;
  ParamBinder bind(g, pol.params());
  Rng srng(6);
  const Tensor probs = g.value(pol.forward(g, bind, g.input(random_state(6, srng))));
  for (int i = 0; i < 3; ++i) {
    CHECK(probs.at(0, i) >= Policy::kProbFloor);
    CHECK(probs.at(0, i) <= 1.0 - Policy::kProbFloor);
  }
  CHECK_THROWS_AS(pol.forward(g, bind, g.input(random_state(5, srng))), std::invalid_argument);
}

TEST_CASE("sampling law: empirical frequency tracks the probabilities") {
  Rng rng(101);

  SUBCASE("p = 0.5 per bit, 10k draws, within two percent") {
    const Tensor probs = Tensor::full(1, 4, 0.5);
    std::vector<int> ones(4, 0);
    for (int t = 0; t < 10000; ++t) {
      const ActionSample a = sample_action(probs, rng, false);
      for (int i = 0; i < 4; ++i) ones[static_cast<std::size_t>(i)] += a.bits[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < 4; ++i) {
      const double rate = ones[static_cast<std::size_t>(i)] / 10000.0;
      CHECK(rate > 0.48);
      CHECK(rate < 0.52);
    }
  }

  SUBCASE("saturated probabilities pin the action") {
    Tensor probs(1, 2);
    probs.at(0, 0) = 1.0 - 1e-6;
    probs.at(0, 1) = 1e-6;
    int match = 0;
    for (int t = 0; t < 10000; ++t) {
      const ActionSample a = sample_action(probs, rng, false);
      if (a.bits[0] == 1 && a.bits[1] == 0) ++match;
    }
    CHECK(match > 9990);
  }
}

TEST_CASE("all-zero high-level draws are resampled once then forced to the argmax") {
  Tensor probs(1, 4);
  for (int i = 0; i < 4; ++i) probs.at(0, i) = Policy::kProbFloor;
  probs.at(0, 2) = 2 * Policy::kProbFloor;  // argmax slot

  Rng rng(7);
  int forced = 0;
  for (int t = 0; t < 200; ++t) {
    const ActionSample a = sample_action(probs, rng, true);
    int sum = 0;
    for (int b : a.bits) sum += b;
    CHECK(sum >= 1);  // never all-zero under forcing
    if (a.forced) {
      ++forced;
      CHECK(a.bits == std::vector<int>{0, 0, 1, 0});
    }
  }
  CHECK(forced == 200);  // p ~ 1e-6: both draws all-zero essentially always

  // Without forcing, the all-zero action stays.
  Rng rng2(8);
  const ActionSample a = sample_action(probs, rng2, false);
  CHECK(a.bits == std::vector<int>{0, 0, 0, 0});
  CHECK_FALSE(a.forced);
}

TEST_CASE("log-probability and entropy arithmetic") {
  const Tensor half = Tensor::full(1, 2, 0.5);
  CHECK(bernoulli_logprob_value(half, {1, 1}) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-15));
  CHECK(bernoulli_logprob_value(half, {0, 1}) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-15));
  CHECK(bernoulli_entropy(half) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // The graph node agrees with the numeric helper.
  Graph g;
  const int probs = g.input(Tensor::row({0.25, 0.75}));
  const int lp = g.bernoulli_logprob(probs, {1, 0});
  CHECK(g.scalar(lp) == doctest::Approx(std::log(0.25) + std::log(0.25)).epsilon(1e-12));
  CHECK(g.scalar(lp) ==
        doctest::Approx(bernoulli_logprob_value(Tensor::row({0.25, 0.75}), {1, 0})).epsilon(1e-15));
}

TEST_CASE("gradcheck: advantage-weighted log-probability through the policy network") {
  Policy pol(3, 2);
  Rng rng(19);
  pol.init_params(rng);
  for (double& x : pol.params().tensor("w2").v) x = 0.3 * rng.normal();
  for (double& x : pol.params().tensor("b2").v) x = 0.1 * rng.normal();
  const Tensor state = random_state(6, rng);
  const std::vector<int> bits{1, 0, 1};
  const double advantage = 1.7;

  auto build = [&](Graph& g, ParamBinder& bind) {
    const int probs = pol.forward(g, bind, g.input(state));
    return g.scale(g.bernoulli_logprob(probs, bits), advantage);
  };
  auto eval = [&]() {
    Graph g;
    ParamBinder bind(g, pol.params());
    return g.scalar(build(g, bind));
  };

  Graph g;
  ParamBinder bind(g, pol.params());
  g.backward(build(g, bind));
  std::vector<Tensor> analytic(static_cast<std::size_t>(pol.params().size()));
  g.for_each_param_grad(
      [&](int pid, const Tensor& gr) { analytic[static_cast<std::size_t>(pid)] = gr; });

  const double h = 1e-5;
  for (int pid = 0; pid < pol.params().size(); ++pid) {
    Tensor& t = pol.params().tensor(pid);
    for (std::size_t e = 0; e < t.v.size(); ++e) {
      const double keep = t.v[e];
      t.v[e] = keep + h;
      const double lp = eval();
      t.v[e] = keep - h;
      const double lm = eval();
      t.v[e] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[static_cast<std::size_t>(pid)].v[e];
      const double err = std::fabs(an - fd) / std::max(1e-6, std::fabs(an) + std::fabs(fd));
      INFO("param ", pol.params().name(pid), " entry ", e, " analytic ", an, " fd ", fd);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("high state assembly: mention order, padding, truncation") {
  const int d = 4;
  std::vector<Tensor> ents;
  for (int i = 0; i < 3; ++i) ents.push_back(Tensor::full(1, d, 1.0 + i));

  SUBCASE("padding slots are drawn from existing mentions") {
    Rng rng(21);
    const HighStateBuild hs = build_high_state(ents, 5, rng);
    CHECK(hs.state.cols == 20);
    REQUIRE(hs.slot_mention.size() == 5);
    for (int i = 0; i < 3; ++i) CHECK(hs.slot_mention[static_cast<std::size_t>(i)] == i);
    for (int i = 3; i < 5; ++i) {
      const int m = hs.slot_mention[static_cast<std::size_t>(i)];
      CHECK(m >= 0);
      CHECK(m < 3);
      for (int c = 0; c < d; ++c) CHECK(hs.state.at(0, i * d + c) == 1.0 + m);
    }
  }

  SUBCASE("deterministic under a fixed seed") {
    Rng a(33), b(33);
    const HighStateBuild ha = build_high_state(ents, 5, a);
    const HighStateBuild hb = build_high_state(ents, 5, b);
    CHECK(ha.slot_mention == hb.slot_mention);
    for (std::size_t i = 0; i < ha.state.v.size(); ++i) CHECK(ha.state.v[i] == hb.state.v[i]);
  }

  SUBCASE("exact fit and truncation") {
    std::vector<Tensor> six;
    for (int i = 0; i < 6; ++i) six.push_back(Tensor::full(1, d, static_cast<double>(i)));
    Rng rng(1);
    const HighStateBuild fit = build_high_state(six, 6, rng);
    CHECK(fit.slot_mention == std::vector<int>{0, 1, 2, 3, 4, 5});
    const HighStateBuild cut = build_high_state(six, 4, rng);
    CHECK(cut.slot_mention == std::vector<int>{0, 1, 2, 3});
    CHECK(cut.state.cols == 16);
  }

  SUBCASE("no eligible entities is an error") {
    Rng rng(2);
    CHECK_THROWS_AS(build_high_state({}, 5, rng), std::invalid_argument);
  }
}

TEST_CASE("low-level triggering follows the high bits exactly") {
  CHECK(trigger_low_level({1, 0, 1, 0, 0}, {0, 1, 2, 3, 4}) == std::vector<int>{0, 2});
  CHECK(trigger_low_level({0, 0, 0, 0, 0}, {0, 1, 2, 3, 4}).empty());
  // Padded slots repeating a mention collapse into one episode.
  CHECK(trigger_low_level({1, 0, 1, 1, 0}, {0, 1, 0, 2, 1}) == std::vector<int>{0, 2});
  // Order follows bit order, not mention value.
  CHECK(trigger_low_level({1, 1, 0}, {2, 0, 1}) == std::vector<int>{2, 0});
  CHECK_THROWS_AS(trigger_low_level({1, 0}, {0}), std::invalid_argument);
}

TEST_CASE("injection writes the mean of chosen triples across the whole span") {
  AnnotatedSentence s;
  s.tokens = {10, 11, 12, 13, 14};
  s.mentions.push_back({0, 1, 3});

  SUBCASE("single triple is written verbatim") {
    Graph g;
    const int u = g.input(Tensor::row({1.0, 2.0}));
    std::vector<std::pair<int, int>> inj;
    apply_injection(g, s, 0, {u}, inj);
    REQUIRE(inj.size() == 2);
    CHECK(inj[0].first == 1);
    CHECK(inj[1].first == 2);
    CHECK(inj[0].second == inj[1].second);
    CHECK(g.value(inj[0].second).at(0, 0) == 1.0);
    CHECK(g.value(inj[0].second).at(0, 1) == 2.0);
  }

  SUBCASE("two triples average") {
    Graph g;
    const int u = g.input(Tensor::row({1.0, 2.0}));
    const int v = g.input(Tensor::row({3.0, 6.0}));
    std::vector<std::pair<int, int>> inj;
    apply_injection(g, s, 0, {u, v}, inj);
    REQUIRE(inj.size() == 2);
    CHECK(g.value(inj[0].second).at(0, 0) == 2.0);
    CHECK(g.value(inj[0].second).at(0, 1) == 4.0);
  }

  SUBCASE("zero chosen triples leave the entity untouched") {
    Graph g;
    std::vector<std::pair<int, int>> inj;
    apply_injection(g, s, 0, {}, inj);
    CHECK(inj.empty());
  }
}

TEST_CASE("rewards: span conjunction and per-token tallies") {
  MaskPlan plan;
  plan.entity_spans = {{0, 2}, {5, 6}};
  plan.entity_positions = {0, 1, 5};
  plan.entity_golds = {100, 101, 105};
  plan.token_positions = {3, 7, 9};
  plan.token_golds = {103, 107, 109};

  SUBCASE("all correct") {
    const Rewards r = compute_rewards(plan, {100, 101, 105, 103, 107, 109});
    CHECK(r.r_high == std::vector<int>{1, 1});
    CHECK(r.r_low == std::vector<int>{1, 1, 1});
    CHECK(r.R_high == 2);
    CHECK(r.R_low == 3);
  }

  SUBCASE("one wrong token inside a two-token span zeroes that entity") {
    const Rewards r = compute_rewards(plan, {100, 999, 105, 103, 999, 109});
    CHECK(r.r_high == std::vector<int>{0, 1});
    CHECK(r.R_high == 1);
    CHECK(r.r_low == std::vector<int>{1, 0, 1});
    CHECK(r.R_low == 2);
  }

  SUBCASE("no masked entities gives an empty high sum") {
    MaskPlan tok_only;
    tok_only.token_positions = {2};
    tok_only.token_golds = {42};
    const Rewards r = compute_rewards(tok_only, {42});
    CHECK(r.R_high == 0);
    CHECK(r.r_high.empty());
    CHECK(r.R_low == 1);
  }

  SUBCASE("reward bounds hold under fuzzing") {
    Rng rng(55);
    for (int t = 0; t < 200; ++t) {
      std::vector<int> preds;
      for (std::size_t i = 0; i < plan.all_positions().size(); ++i)
        preds.push_back(rng.bernoulli(0.5) ? plan.all_golds()[i] : 999);
      const Rewards r = compute_rewards(plan, preds);
      CHECK(r.R_high >= 0);
      CHECK(r.R_high <= static_cast<int>(plan.entity_spans.size()));
      CHECK(r.R_low >= 0);
      CHECK(r.R_low <= static_cast<int>(plan.token_positions.size()));
    }
  }

  SUBCASE("prediction count must match the plan") {
    CHECK_THROWS_AS(compute_rewards(plan, {1, 2}), std::invalid_argument);
  }
}
