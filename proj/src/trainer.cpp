#include "kehrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>

namespace kehrl {

double total_loss(double l_mlm, double j_high, double j_low, const Omega& om) {
  // Same accumulation the graph's weighted add uses, so scalar bookkeeping
  // and the optimized node agree bitwise.
  long double acc = 0.0L;
  acc += static_cast<long double>(om.w1) * l_mlm;
  acc += static_cast<long double>(-om.w2) * j_high;
  acc += static_cast<long double>(-om.w3) * j_low;
  return static_cast<double>(acc);
}

void TrainConfig::validate() const {
  const auto bad = [](const std::string& field) {
    throw std::invalid_argument("train config: invalid " + field);
  };
  if (!(omega.w1 >= 0.0) || !std::isfinite(omega.w1)) bad("omega.w1");
  if (!(omega.w2 >= 0.0) || !std::isfinite(omega.w2)) bad("omega.w2");
  if (!(omega.w3 >= 0.0) || !std::isfinite(omega.w3)) bad("omega.w3");
  if (!(rollout.lambda >= 0.0 && rollout.lambda <= 1.0)) bad("lambda");
  if (rollout.count_min > rollout.count_max) bad("count_min");
  if (!(lr_encoder > 0.0)) bad("lr_encoder");
  if (!(lr_policy > 0.0)) bad("lr_policy");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("adam_beta1");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("adam_beta2");
  if (!(adam_eps > 0.0)) bad("adam_eps");
  if (!(weight_decay >= 0.0)) bad("weight_decay");
  if (epochs < 1) bad("epochs");
  if (batch_size < 1) bad("batch_size");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) bad("baseline_decay");
  if (probe_every < 1) bad("probe_every");
}

Trainer::Trainer(Encoder& enc, Policy& high, Policy& low, const KnowledgeStore& store,
                 const Vocab& vocab, const TrainConfig& cfg)
    : enc_(enc),
      high_(high),
      low_(low),
      store_(store),
      vocab_(vocab),
      cfg_(cfg),
      g_enc_(enc.params()),
      g_high_(high.params()),
      g_low_(low.params()) {
  cfg_.validate();
  const auto reserve = [this](const ParamSet& ps) {
    for (int i = 0; i < ps.size(); ++i) {
      m_.emplace_back(ps.tensor(i).rows, ps.tensor(i).cols);
      v_.emplace_back(ps.tensor(i).rows, ps.tensor(i).cols);
    }
  };
  reserve(enc.params());
  reserve(high.params());
  reserve(low.params());
}

TrainRow Trainer::step(const std::vector<const AnnotatedSentence*>& batch, int epoch,
                       int step_idx) {
  if (batch.empty()) throw std::invalid_argument("trainer: empty batch");
  g_enc_.clear();
  g_high_.clear();
  g_low_.clear();
  const int E = enc_.params().size();
  const int H = high_.params().size();
  const BaselineState snap = base_;  // one advantage reference for the step
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  double sum_mlm = 0.0;
  double sum_rh = 0.0, sum_rl = 0.0;
  int n_rh = 0, n_rl = 0;
  double sum_eh = 0.0, sum_el = 0.0;
  int n_eh = 0, n_el = 0;
  std::vector<double> high_rewards, low_rewards;

  for (const AnnotatedSentence* sp : batch) {
    const AnnotatedSentence& s = *sp;
    Rng rng(derive_seed(cfg_.seed, {0x5E, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(step_idx),
                                    static_cast<std::uint64_t>(s.id)}));
    Graph g;
    ParamBinder eb(g, enc_.params());
    ParamBinder hb(g, high_.params(), E);
    ParamBinder lb(g, low_.params(), E + H);

    // Token masks go in before the selection pass: the policies and the
    // mixing priors must see the same masked input the encoder will, or they
    // learn cues (notably the hidden gold token) that vanish at probe time.
    MaskPlan plan = make_token_mask_plan(s, enc_.config().token_mask_rate, rng);
    AnnotatedSentence masked = s;
    masked.tokens = apply_mask(s.tokens, plan);
    RolloutResult roll = roll_sentence(g, eb, hb, lb, enc_, high_, low_, masked, store_,
                                       vocab_, cfg_.rollout, rng);
    add_entity_spans(plan, s, roll.selected);
    if (plan.empty()) continue;  // pathological sentence, nothing to predict

    const int hidden = enc_.forward(g, eb, apply_mask(s.tokens, plan), roll.injections);
    const int logits = enc_.mlm_logits(g, eb, hidden);
    const int l_mlm = mlm_loss(g, logits, plan);
    sum_mlm += g.scalar(l_mlm);

    std::vector<int> nodes{l_mlm};
    std::vector<double> coeffs{cfg_.omega.w1};

    const Rewards rw = compute_rewards(plan, argmax_rows(g.value(logits), plan.all_positions()));
    const Episode& ep = roll.episode;
    if (ep.high_logprob_node >= 0 && !plan.entity_spans.empty()) {
      const double r = static_cast<double>(rw.R_high) / plan.entity_spans.size();
      nodes.push_back(g.scale(ep.high_logprob_node, r - snap.high));
      coeffs.push_back(-cfg_.omega.w2);
      high_rewards.push_back(r);
      sum_rh += r;
      ++n_rh;
    }
    std::vector<int> low_nodes;
    for (const LowEpisode& le : ep.low)
      if (le.logprob_node >= 0) low_nodes.push_back(le.logprob_node);
    if (!low_nodes.empty() && !plan.token_positions.empty()) {
      const double r = static_cast<double>(rw.R_low) / plan.token_positions.size();
      const int sum_lp = low_nodes.size() == 1
                             ? low_nodes[0]
                             : g.add_scaled(low_nodes,
                                            std::vector<double>(low_nodes.size(), 1.0));
      nodes.push_back(g.scale(sum_lp, r - snap.low));
      coeffs.push_back(-cfg_.omega.w3);
      low_rewards.push_back(r);
      sum_rl += r;
      ++n_rl;
    }

    if (!roll.high_probs.v.empty()) {
      sum_eh += bernoulli_entropy(roll.high_probs);
      ++n_eh;
    }
    for (const Tensor& lp : roll.low_probs) {
      sum_el += bernoulli_entropy(lp);
      ++n_el;
    }

    const int total =
        nodes.size() == 1 ? g.scale(l_mlm, cfg_.omega.w1) : g.add_scaled(nodes, coeffs);
    g.backward(total);
    g.for_each_param_grad([&](int pid, const Tensor& grad) {
      if (pid < E)
        g_enc_.accumulate(pid, grad, inv_batch);
      else if (pid < E + H)
        g_high_.accumulate(pid - E, grad, inv_batch);
      else
        g_low_.accumulate(pid - E - H, grad, inv_batch);
    });
  }

  apply_updates();
  for (double r : high_rewards)
    base_.high = cfg_.baseline_decay * base_.high + (1.0 - cfg_.baseline_decay) * r;
  for (double r : low_rewards)
    base_.low = cfg_.baseline_decay * base_.low + (1.0 - cfg_.baseline_decay) * r;

  TrainRow row;
  row.epoch = epoch;
  row.step = step_idx;
  row.mlm_loss = sum_mlm * inv_batch;
  row.mean_r_high = n_rh ? sum_rh / n_rh : 0.0;
  row.mean_r_low = n_rl ? sum_rl / n_rl : 0.0;
  row.base_high = base_.high;
  row.base_low = base_.low;
  row.entropy_high = n_eh ? sum_eh / n_eh : 0.0;
  row.entropy_low = n_el ? sum_el / n_el : 0.0;
  return row;
}

void Trainer::apply_updates() {
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(adam_t_));

  int moment = 0;
  const auto apply = [&](ParamSet& ps, GradBuffer& gb, double lr) {
    for (int pid = 0; pid < ps.size(); ++pid, ++moment) {
      Tensor& p = ps.tensor(pid);
      const Tensor& grad = gb.grad(pid);
      if (cfg_.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] -= lr * grad.v[i];
        continue;
      }
      Tensor& m = m_[static_cast<std::size_t>(moment)];
      Tensor& v = v_[static_cast<std::size_t>(moment)];
      for (std::size_t i = 0; i < p.v.size(); ++i) {
        m.v[i] = cfg_.adam_beta1 * m.v[i] + (1.0 - cfg_.adam_beta1) * grad.v[i];
        v.v[i] = cfg_.adam_beta2 * v.v[i] + (1.0 - cfg_.adam_beta2) * grad.v[i] * grad.v[i];
        const double mhat = m.v[i] / bc1;
        const double vhat = v.v[i] / bc2;
        p.v[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) + cfg_.weight_decay * p.v[i]);
      }
    }
  };
  apply(enc_.params(), g_enc_, cfg_.lr_encoder);
  apply(high_.params(), g_high_, cfg_.lr_policy);
  apply(low_.params(), g_low_, cfg_.lr_policy);
}

double Trainer::probe_now(const std::vector<ProbeRecord>& probes) const {
  ProbeOptions po;
  po.rollout = cfg_.rollout;
  po.seed = derive_seed(cfg_.seed, {0x9B0});
  return probe_eval(enc_, high_, low_, store_, vocab_, probes, po).macro_p1;
}

TrainReport Trainer::run(const std::vector<AnnotatedSentence>& corpus,
                         const std::vector<ProbeRecord>& probes) {
  if (corpus.empty()) throw std::invalid_argument("trainer: empty corpus");
  TrainReport rep;
  double last_probe = 0.0;
  if (!probes.empty()) {
    last_probe = probe_now(probes);
    rep.probe_history.push_back(last_probe);
  }

  std::vector<const AnnotatedSentence*> order;
  order.reserve(corpus.size());
  for (const AnnotatedSentence& s : corpus) order.push_back(&s);

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg_.seed, {0xB0, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    int step_idx = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end =
          std::min(order.size(), off + static_cast<std::size_t>(cfg_.batch_size));
      const std::vector<const AnnotatedSentence*> batch(order.begin() + off, order.begin() + end);
      TrainRow row = step(batch, epoch, ++step_idx);
      row.probe_p1 = last_probe;
      rep.rows.push_back(row);
    }
    if (!probes.empty() && (epoch % cfg_.probe_every == 0 || epoch == cfg_.epochs)) {
      last_probe = probe_now(probes);
      rep.probe_history.push_back(last_probe);
    }
  }
  return rep;
}

void Trainer::save(const std::string& prefix, const std::string& config_json_text) const {
  save_checkpoint(prefix,
                  {{"encoder.", &enc_.params()},
                   {"high.", &high_.params()},
                   {"low.", &low_.params()}},
                  config_json_text);
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,step,mlm_loss,mean_r_high,mean_r_low,base_high,base_low,"
         "entropy_high,entropy_low,probe_p1\n";
  out << std::setprecision(17);
  for (const TrainRow& r : rows)
    out << r.epoch << ',' << r.step << ',' << r.mlm_loss << ',' << r.mean_r_high << ','
        << r.mean_r_low << ',' << r.base_high << ',' << r.base_low << ',' << r.entropy_high << ','
        << r.entropy_low << ',' << r.probe_p1 << '\n';
}

}  // namespace kehrl
