#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "kehrl/graph.hpp"
#include "kehrl/rng.hpp"
#include "kehrl/tensor.hpp"

using namespace kehrl;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double scale = 0.5) {
  Tensor t(r, c);
  for (double& x : t.v) x = scale * rng.normal();
  return t;
}

// Central-difference oracle: the builder must construct the same function
// from whatever values currently sit in `params`.
using BuildFn = std::function<int(Graph&, const std::vector<int>&)>;

void check_gradients(std::vector<Tensor> params, const BuildFn& build,
                     double h = 1e-5, double tol = 1e-4) {
  auto eval = [&]() {
    Graph g;
    std::vector<int> ids;
    ids.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      ids.push_back(g.param(params[i], static_cast<int>(i)));
    return std::pair<double, int>{0.0, build(g, ids)};
  };

  Graph g;
  std::vector<int> ids;
  for (std::size_t i = 0; i < params.size(); ++i)
    ids.push_back(g.param(params[i], static_cast<int>(i)));
  const int loss = build(g, ids);
  g.backward(loss);
  std::vector<Tensor> analytic(params.size());
  g.for_each_param_grad([&](int pid, const Tensor& gr) { analytic[static_cast<std::size_t>(pid)] = gr; });

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t e = 0; e < params[pi].v.size(); ++e) {
      const double keep = params[pi].v[e];
      params[pi].v[e] = keep + h;
      Graph gp;
      std::vector<int> idsp;
      for (std::size_t i = 0; i < params.size(); ++i)
        idsp.push_back(gp.param(params[i], static_cast<int>(i)));
      const double lp = gp.scalar(build(gp, idsp));
      params[pi].v[e] = keep - h;
      Graph gm;
      std::vector<int> idsm;
      for (std::size_t i = 0; i < params.size(); ++i)
        idsm.push_back(gm.param(params[i], static_cast<int>(i)));
      const double lm = gm.scalar(build(gm, idsm));
      params[pi].v[e] = keep;

      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi].v.empty() ? 0.0 : analytic[pi].v[e];
      const double err = std::fabs(an - fd) / std::max(1e-6, std::fabs(an) + std::fabs(fd));
      INFO("param ", pi, " entry ", e, " analytic ", an, " fd ", fd);
      CHECK(err < tol);
    }
  }
  (void)eval;
}

}  // namespace

TEST_CASE("gradcheck: dense chain with gelu, layernorm, softmax, cross-entropy") {
  Rng rng(42);
  std::vector<Tensor> params;
  params.push_back(random_tensor(2, 3, rng));  // x
  params.push_back(random_tensor(3, 4, rng));  // W
  params.push_back(random_tensor(1, 4, rng));  // b
  params.push_back(Tensor::full(1, 4, 1.1));   // ln gain
  params.push_back(random_tensor(1, 4, rng));  // ln bias
  params.push_back(random_tensor(4, 5, rng));  // W2

  check_gradients(params, [](Graph& g, const std::vector<int>& p) {
    int h = g.add_row_broadcast(g.matmul(p[0], p[1]), p[2]);
    int act = g.gelu(h);
    int ln = g.layer_norm(act, p[3], p[4]);
    int sm = g.softmax_rows(ln);
    int logits = g.matmul(sm, p[5]);
    int ce = g.cross_entropy_mean(logits, {0, 1}, {1, 3});
    int side = g.dot(g.mean_rows(g.sigmoid(g.tanh_(g.slice_cols(ln, 0, 2))), 0, 2),
                     g.input(std::vector<double>{0.3, -0.7}));
    return g.add_scaled({ce, side}, {1.0, 0.7});
  });
}

TEST_CASE("gradcheck: knowledge-mixing ops (dot attention over vectors, gather, replace)") {
  Rng rng(43);
  std::vector<Tensor> params;
  params.push_back(random_tensor(1, 4, rng));  // u1
  params.push_back(random_tensor(1, 4, rng));  // u2
  params.push_back(random_tensor(1, 4, rng));  // u3
  params.push_back(random_tensor(1, 4, rng));  // reference vector
  params.push_back(random_tensor(5, 4, rng));  // embedding table

  check_gradients(params, [](Graph& g, const std::vector<int>& p) {
    std::vector<int> scores;
    for (int i = 0; i < 3; ++i) scores.push_back(g.dot(p[static_cast<std::size_t>(i)], p[3]));
    int alpha = g.softmax_rows(g.stack_scalars(scores));
    int mixed = g.add_scaled({g.weighted_sum(alpha, {p[0], p[1], p[2]}), p[3]}, {0.5, 0.5});
    int seq = g.rows_gather(p[4], {1, 3, 3, 0});
    int injected = g.replace_rows(seq, {1}, {mixed});
    int pooled = g.mean_rows(injected, 0, 4);
    return g.dot(pooled, p[3]);
  });
}

TEST_CASE("gradcheck: policy head with clamp and bernoulli log-probability") {
  Rng rng(44);
  std::vector<Tensor> params;
  params.push_back(random_tensor(1, 6, rng));  // state
  params.push_back(random_tensor(6, 3, rng));  // W
  params.push_back(random_tensor(1, 3, rng));  // b

  check_gradients(params, [](Graph& g, const std::vector<int>& p) {
    int logits = g.add_row_broadcast(g.matmul(p[0], p[1]), p[2]);
    int probs = g.clamp(g.sigmoid(logits), 1e-6, 1.0 - 1e-6);
    int lp = g.bernoulli_logprob(probs, {1, 0, 1});
    return g.scale(lp, -0.35 * 1.7);
  });
}

TEST_CASE("gradcheck: two-head self-attention block") {
  Rng rng(45);
  std::vector<Tensor> params;
  params.push_back(random_tensor(3, 4, rng));  // x
  params.push_back(random_tensor(4, 4, rng));  // Wq
  params.push_back(random_tensor(4, 4, rng));  // Wk
  params.push_back(random_tensor(4, 4, rng));  // Wv
  params.push_back(random_tensor(4, 4, rng));  // Wo

  check_gradients(params, [](Graph& g, const std::vector<int>& p) {
    int q = g.matmul(p[0], p[1]);
    int k = g.matmul(p[0], p[2]);
    int v = g.matmul(p[0], p[3]);
    std::vector<int> heads;
    for (int hh = 0; hh < 2; ++hh) {
      int qh = g.slice_cols(q, 2 * hh, 2 * hh + 2);
      int kh = g.slice_cols(k, 2 * hh, 2 * hh + 2);
      int vh = g.slice_cols(v, 2 * hh, 2 * hh + 2);
      int probs = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(2.0)));
      heads.push_back(g.matmul(probs, vh));
    }
    int ctx = g.matmul(g.concat_cols(heads), p[4]);
    int res = g.add(ctx, p[0]);
    return g.cross_entropy_mean(res, {0, 2}, {1, 0});
  });
}

TEST_CASE("gradcheck: scalar-node product and subtraction") {
  Rng rng(46);
  std::vector<Tensor> params;
  params.push_back(random_tensor(1, 1, rng));  // scalar
  params.push_back(random_tensor(2, 3, rng));  // x
  params.push_back(random_tensor(2, 3, rng));  // y

  check_gradients(params, [](Graph& g, const std::vector<int>& p) {
    int scaled = g.mul_scalar_node(g.sub(p[1], p[2]), p[0]);
    int sq = g.mul(scaled, scaled);
    return g.dot(g.mean_rows(sq, 0, 2), g.input(std::vector<double>{1.0, 1.0, 1.0}));
  });
}

TEST_CASE("refresh re-executes the tape bitwise-identically to a fresh build") {
  // One builder touching every op; node ids align between builds because the
  // construction order is fixed.
  auto build = [](Graph& g, const std::vector<const Tensor*>& t) {
    std::vector<int> p;
    p.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      p.push_back(g.param(*t[i], static_cast<int>(i)));
    int h = g.add_row_broadcast(g.matmul(p[0], p[1]), p[2]);
    int ln = g.layer_norm(g.gelu(h), p[3], p[4]);
    int att = g.softmax_rows(g.scale(g.matmul_nt(ln, ln), 0.5));
    int ctx = g.add(g.matmul(att, ln), ln);
    int gath = g.rows_gather(p[5], {1, 0, 2});
    int mixed = g.weighted_sum(
        g.softmax_rows(g.stack_scalars({g.dot(p[6], p[7]), g.dot(p[6], p[6])})), {p[6], p[7]});
    int inj = g.replace_rows(gath, {1}, {mixed});
    int pooled = g.mean_rows(g.mul(inj, inj), 0, 3);
    int steer = g.tanh_(g.concat_cols({pooled, g.slice_cols(g.mean_rows(ctx, 0, 3), 0, 1)}));
    int probs = g.clamp(g.sigmoid(g.sub(steer, p[8])), 1e-6, 1.0 - 1e-6);
    int lp = g.bernoulli_logprob(probs, {1, 0, 1, 1, 0});
    int ce = g.cross_entropy_mean(g.matmul(ctx, p[9]), {0, 2}, {1, 3});
    int blend = g.mul_scalar_node(g.add_scaled({ce, g.scale(lp, -0.2)}, {0.3, 0.7}), g.dot(p[10], p[10]));
    return blend;
  };

  Rng rng(4711);
  std::vector<Tensor> params;
  params.push_back(random_tensor(3, 4, rng));   // x
  params.push_back(random_tensor(4, 4, rng));   // W
  params.push_back(random_tensor(1, 4, rng));   // b
  params.push_back(Tensor::full(1, 4, 1.05));   // ln gain
  params.push_back(random_tensor(1, 4, rng));   // ln bias
  params.push_back(random_tensor(4, 4, rng));   // table
  params.push_back(random_tensor(1, 4, rng));   // u
  params.push_back(random_tensor(1, 4, rng));   // v
  params.push_back(random_tensor(1, 5, rng));   // logit shift
  params.push_back(random_tensor(4, 6, rng));   // head
  params.push_back(random_tensor(1, 1, rng));   // scalar gate

  std::vector<const Tensor*> refs;
  for (const Tensor& t : params) refs.push_back(&t);

  Graph a;
  build(a, refs);

  SUBCASE("identity refresh changes nothing") {
    std::vector<Tensor> before;
    for (std::size_t i = 0; i < a.node_count(); ++i) before.push_back(a.value(static_cast<int>(i)));
    a.refresh();
    for (std::size_t i = 0; i < a.node_count(); ++i) {
      const Tensor& now = a.value(static_cast<int>(i));
      REQUIRE(now.v.size() == before[i].v.size());
      for (std::size_t j = 0; j < now.v.size(); ++j) CHECK(now.v[j] == before[i].v[j]);
    }
  }

  SUBCASE("refresh after perturbing bound parameters matches a fresh build") {
    Rng noise(99);
    for (Tensor& t : params)
      for (double& x : t.v) x += 0.05 * noise.normal();
    a.refresh();
    Graph b;
    build(b, refs);
    REQUIRE(a.node_count() == b.node_count());
    for (std::size_t i = 0; i < a.node_count(); ++i) {
      const Tensor& va = a.value(static_cast<int>(i));
      const Tensor& vb = b.value(static_cast<int>(i));
      REQUIRE(va.v.size() == vb.v.size());
      for (std::size_t j = 0; j < va.v.size(); ++j) CHECK(va.v[j] == vb.v[j]);
    }
  }

  SUBCASE("gradients survive a refresh untouched") {
    Graph c;
    const int loss = build(c, refs);
    c.backward(loss);
    Tensor g0 = c.grad(1);
    c.refresh();
    const Tensor& g1 = c.grad(1);
    REQUIRE(g0.v.size() == g1.v.size());
    for (std::size_t j = 0; j < g0.v.size(); ++j) CHECK(g0.v[j] == g1.v[j]);
  }
}

TEST_CASE("bernoulli log-probability of two fair coins is 2 ln(1/2)") {
  Graph g;
  int probs = g.input(std::vector<double>{0.5, 0.5});
  int lp = g.bernoulli_logprob(probs, {1, 0});
  CHECK(g.scalar(lp) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("dot of a vector with itself backpropagates exactly 2u") {
  Tensor u = Tensor::row({1.5, -2.0, 0.25});
  Graph g;
  int pu = g.param(u, 0);
  g.backward(g.dot(pu, pu));
  const Tensor& gr = g.grad(pu);
  REQUIRE(gr.rows == 1);
  for (int c = 0; c < 3; ++c) CHECK(gr.v[static_cast<std::size_t>(c)] == 2.0 * u.v[static_cast<std::size_t>(c)]);
}

TEST_CASE("gather with a repeated row accumulates both contributions") {
  Tensor table(3, 2);
  table.v = {1, 2, 3, 4, 5, 6};
  Graph g;
  int pt = g.param(table, 0);
  int seq = g.rows_gather(pt, {1, 1});
  int loss = g.dot(seq, g.input(Tensor::full(2, 2, 1.0)));
  g.backward(loss);
  const Tensor& gr = g.grad(pt);
  CHECK(gr.at(0, 0) == 0.0);
  CHECK(gr.at(1, 0) == 2.0);
  CHECK(gr.at(1, 1) == 2.0);
  CHECK(gr.at(2, 1) == 0.0);
}

TEST_CASE("clamp blocks gradient outside its range and passes it inside") {
  Tensor x = Tensor::row({-5.0, 0.2, 5.0});
  Graph g;
  int px = g.param(x, 0);
  int y = g.clamp(px, 0.0, 1.0);
  int loss = g.dot(y, g.input(std::vector<double>{1.0, 1.0, 1.0}));
  g.backward(loss);
  const Tensor& gr = g.grad(px);
  CHECK(gr.v[0] == 0.0);
  CHECK(gr.v[1] == 1.0);
  CHECK(gr.v[2] == 0.0);
}

TEST_CASE("a second backward without a fresh forward is an error") {
  Graph g;
  int a = g.param(Tensor::full(1, 1, 2.0), 0);
  int loss = g.mul(a, a);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), std::runtime_error);
}

TEST_CASE("replace_rows rejects duplicate positions and bad shapes") {
  Graph g;
  int x = g.input(Tensor(3, 2));
  int v = g.input(std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(g.replace_rows(x, {1, 1}, {v, v}), std::invalid_argument);
  int wide = g.input(std::vector<double>{1.0, 2.0, 3.0});
  CHECK_THROWS_AS(g.replace_rows(x, {0}, {wide}), std::invalid_argument);
}

TEST_CASE("unreached parameters are not visited by the gradient export") {
  Tensor a = Tensor::full(1, 1, 1.0);
  Tensor b = Tensor::full(1, 1, 1.0);
  Graph g;
  int pa = g.param(a, 0);
  g.param(b, 1);
  g.backward(g.mul(pa, pa));
  int visited = 0;
  int last_id = -1;
  g.for_each_param_grad([&](int pid, const Tensor&) {
    ++visited;
    last_id = pid;
  });
  CHECK(visited == 1);
  CHECK(last_id == 0);
}
