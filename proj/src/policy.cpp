#include "kehrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace kehrl {

Policy::Policy(int slots, int d) : slots_(slots), d_(d) {
  if (slots < 1 || d < 1) throw std::invalid_argument("policy: slots and d must be positive");
  params_.add("w1", Tensor(slots * d, 2 * d));
  params_.add("b1", Tensor(1, 2 * d));
  params_.add("w2", Tensor(2 * d, slots));
  params_.add("b2", Tensor(1, slots));
}

void Policy::init_params(Rng& rng) {
  for (double& x : params_.tensor("w1").v) x = rng.normal(0.0, 0.02);
  // b1, w2, b2 stay zero: sigmoid(0) = 0.5 for every slot at step 0.
}

int Policy::forward(Graph& g, ParamBinder& bind, int state_node) const {
  const Tensor& st = g.value(state_node);
  if (st.rows != 1 || st.cols != state_dim())
    throw std::invalid_argument("policy forward: state must be 1x" + std::to_string(state_dim()) +
                                ", got " + st.shape_str());
  const int hidden = g.tanh_(g.add_row_broadcast(g.matmul(state_node, bind("w1")), bind("b1")));
  const int logits = g.add_row_broadcast(g.matmul(hidden, bind("w2")), bind("b2"));
  return g.clamp(g.sigmoid(logits), kProbFloor, 1.0 - kProbFloor);
}

Tensor concat_state(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_state: empty part list");
  const int d = parts[0].cols;
  Tensor out(1, static_cast<int>(parts.size()) * d);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& p = parts[i];
    if (p.rows != 1 || p.cols != d)
      throw std::invalid_argument("concat_state: part " + std::to_string(i) + " has shape " +
                                  p.shape_str());
    for (int c = 0; c < d; ++c) out.at(0, static_cast<int>(i) * d + c) = p.at(0, c);
  }
  return out;
}

HighStateBuild build_high_state(const std::vector<Tensor>& mixed_entities, int n_slots, Rng& rng) {
  if (mixed_entities.empty())
    throw std::invalid_argument("build_high_state: no eligible entities");
  HighStateBuild out;
  const int present = static_cast<int>(mixed_entities.size());
  std::vector<Tensor> slots;
  for (int i = 0; i < std::min(present, n_slots); ++i) {
    out.slot_mention.push_back(i);
    slots.push_back(mixed_entities[static_cast<std::size_t>(i)]);
  }
  while (static_cast<int>(slots.size()) < n_slots) {
    const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(present)));
    out.slot_mention.push_back(pick);
    slots.push_back(mixed_entities[static_cast<std::size_t>(pick)]);
  }
  out.state = concat_state(slots);
  return out;
}

ActionSample sample_action(const Tensor& probs, Rng& rng, bool force_nonzero) {
  if (probs.rows != 1 || probs.cols < 1)
    throw std::invalid_argument("sample_action: probabilities must be a 1-row vector");
  auto draw = [&]() {
    std::vector<int> bits(static_cast<std::size_t>(probs.cols));
    for (int i = 0; i < probs.cols; ++i)
      bits[static_cast<std::size_t>(i)] = rng.bernoulli(probs.at(0, i)) ? 1 : 0;
    return bits;
  };
  auto all_zero = [](const std::vector<int>& bits) {
    return std::all_of(bits.begin(), bits.end(), [](int b) { return b == 0; });
  };

  ActionSample out;
  out.bits = draw();
  if (force_nonzero && all_zero(out.bits)) {
    out.bits = draw();  // one resample
    if (all_zero(out.bits)) {
      int best = 0;
      for (int i = 1; i < probs.cols; ++i)
        if (probs.at(0, i) > probs.at(0, best)) best = i;
      out.bits[static_cast<std::size_t>(best)] = 1;
      out.forced = true;
    }
  }
  return out;
}

double bernoulli_logprob_value(const Tensor& probs, const std::vector<int>& bits) {
  if (probs.rows != 1 || static_cast<int>(bits.size()) != probs.cols)
    throw std::invalid_argument("bernoulli_logprob_value: bits/probabilities length mismatch");
  double lp = 0.0;
  for (int i = 0; i < probs.cols; ++i) {
    const double p = probs.at(0, i);
    lp += bits[static_cast<std::size_t>(i)] ? std::log(p) : std::log1p(-p);
  }
  return lp;
}

double bernoulli_entropy(const Tensor& probs) {
  double h = 0.0;
  for (double p : probs.v) h -= p * std::log(p) + (1.0 - p) * std::log1p(-p);
  return h;
}

std::vector<int> trigger_low_level(const std::vector<int>& high_bits,
                                   const std::vector<int>& slot_mention) {
  if (high_bits.size() != slot_mention.size())
    throw std::invalid_argument("trigger_low_level: bits/slots length mismatch");
  std::vector<int> selected;
  for (std::size_t i = 0; i < high_bits.size(); ++i) {
    if (!high_bits[i]) continue;
    const int m = slot_mention[i];
    if (std::find(selected.begin(), selected.end(), m) == selected.end()) selected.push_back(m);
  }
  return selected;
}

void apply_injection(Graph& g, const AnnotatedSentence& sentence, int mention,
                     const std::vector<int>& chosen_triple_nodes,
                     std::vector<std::pair<int, int>>& injections) {
  if (chosen_triple_nodes.empty()) return;  // entity keeps its original embedding
  if (mention < 0 || mention >= static_cast<int>(sentence.mentions.size()))
    throw std::invalid_argument("apply_injection: mention index out of range");
  const int k = static_cast<int>(chosen_triple_nodes.size());
  const int mean = g.add_scaled(chosen_triple_nodes, std::vector<double>(
                                                         static_cast<std::size_t>(k), 1.0 / k));
  const Mention& m = sentence.mentions[static_cast<std::size_t>(mention)];
  for (int p = m.start; p < m.end; ++p) injections.emplace_back(p, mean);
}

Rewards compute_rewards(const MaskPlan& plan, const std::vector<int>& predictions) {
  const std::vector<int> positions = plan.all_positions();
  if (predictions.size() != positions.size())
    throw std::invalid_argument("compute_rewards: one prediction per masked position required");
  std::unordered_map<int, int> pred_at;
  for (std::size_t i = 0; i < positions.size(); ++i)
    pred_at[positions[i]] = predictions[i];
  std::unordered_map<int, int> gold_at;
  const std::vector<int> golds = plan.all_golds();
  for (std::size_t i = 0; i < positions.size(); ++i) gold_at[positions[i]] = golds[i];

  Rewards out;
  for (const auto& [start, end] : plan.entity_spans) {
    int ok = 1;
    for (int p = start; p < end; ++p) {
      auto it = pred_at.find(p);
      if (it == pred_at.end())
        throw std::invalid_argument("compute_rewards: span position " + std::to_string(p) +
                                    " missing from the mask plan");
      if (it->second != gold_at.at(p)) ok = 0;
    }
    out.r_high.push_back(ok);
    out.R_high += ok;
  }
  for (std::size_t i = 0; i < plan.token_positions.size(); ++i) {
    const int p = plan.token_positions[i];
    const int ok = pred_at.at(p) == plan.token_golds[i] ? 1 : 0;
    out.r_low.push_back(ok);
    out.R_low += ok;
  }
  return out;
}

}  // namespace kehrl
