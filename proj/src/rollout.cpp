#include "kehrl/rollout.hpp"

#include <array>
#include <map>
#include <stdexcept>

namespace kehrl {

std::vector<int> greedy_bits(const Tensor& probs, bool force_nonzero) {
  std::vector<int> bits(static_cast<std::size_t>(probs.cols), 0);
  bool any = false;
  for (int i = 0; i < probs.cols; ++i) {
    bits[static_cast<std::size_t>(i)] = probs.at(0, i) > 0.5 ? 1 : 0;
    any = any || bits[static_cast<std::size_t>(i)];
  }
  if (force_nonzero && !any) {
    int best = 0;
    for (int i = 1; i < probs.cols; ++i)
      if (probs.at(0, i) > probs.at(0, best)) best = i;
    bits[static_cast<std::size_t>(best)] = 1;
  }
  return bits;
}

RolloutResult roll_sentence(Graph& g, ParamBinder& enc_bind, ParamBinder& high_bind,
                            ParamBinder& low_bind, const Encoder& enc, const Policy& high,
                            const Policy& low, const AnnotatedSentence& s,
                            const KnowledgeStore& store, const Vocab& vocab,
                            const RolloutOptions& opt, Rng& rng) {
  RolloutResult out;
  out.episode.sentence = s.id;
  for (std::size_t i = 0; i < s.mentions.size(); ++i) {
    const Mention& m = s.mentions[i];
    if (m.entity >= 0 && !store.triples_of(m.entity).empty())
      out.eligible.push_back(static_cast<int>(i));
  }
  if (out.eligible.empty() || opt.high == RolloutOptions::HighMode::none) return out;

  const EncoderConfig& cfg = enc.config();
  const double lambda = opt.no_prior ? 1.0 : opt.lambda;
  const int m_slots = cfg.triples_per_entity;

  // Context pass over the sentence as written (states never see the masking).
  const int h_plain = enc.forward(g, enc_bind, s.tokens);
  const Tensor h_sent =
      g.value(entity_context_repr(g, h_plain, 0, static_cast<int>(s.tokens.size())));

  std::vector<int> group;
  for (int mi : out.eligible)
    group.push_back(s.mentions[static_cast<std::size_t>(mi)].entity);
  const std::vector<double> ent_priors = entity_prior_group(store, group);

  struct MentionKnowledge {
    std::vector<int> mixed_triple_nodes;  // per candidate slot, 1 x d
    Tensor low_state;                     // 1 x (M*d)
  };
  std::vector<MentionKnowledge> knowledge(out.eligible.size());
  std::vector<Tensor> mixed_entities;
  std::map<std::array<int, 3>, TripleRepr> repr_cache;  // padded slots repeat triples
  const auto zero_prior = [](int) { return 0.0; };

  for (std::size_t ei = 0; ei < out.eligible.size(); ++ei) {
    const Mention& m = s.mentions[static_cast<std::size_t>(out.eligible[ei])];
    const CandidateTripleSet cands =
        retrieve_triples(store, m.entity, cfg.k_hops, m_slots, zero_prior, rng);

    std::vector<TripleRepr> reprs;
    reprs.reserve(cands.triples.size());
    for (const int ti : cands.triples) {
      const Triple& t = store.triple(ti);
      const std::array<int, 3> key{t.head, t.rel, t.tail};
      auto it = repr_cache.find(key);
      if (it == repr_cache.end())
        it = repr_cache.emplace(key, triple_pseudo_repr(g, enc_bind, enc, store, vocab, t)).first;
      reprs.push_back(it->second);
    }

    const int h_e = entity_context_repr(g, h_plain, m.start, m.end);
    std::vector<int> wholes;
    std::vector<Tensor> whole_vals;
    for (const TripleRepr& r : reprs) {
      wholes.push_back(r.whole);
      whole_vals.push_back(g.value(r.whole));
    }
    const EntityRepr er = internal_entity_repr(g, h_e, wholes);
    mixed_entities.push_back(g.value(mix(g, er.h_mod, ent_priors[ei], lambda)));
    out.alphas.push_back(g.value(er.alpha));
    out.entity_priors.push_back(ent_priors[ei]);

    const std::vector<double> tri_priors = triple_prior(whole_vals, h_sent);
    out.triple_priors.push_back(tri_priors);
    std::vector<Tensor> low_parts;
    std::vector<Tensor> mention_betas;
    for (std::size_t q = 0; q < reprs.size(); ++q) {
      const TripleMixRepr tm =
          internal_triple_repr(g, reprs[q].whole, reprs[q].head, reprs[q].rel, reprs[q].tail);
      const int node = mix(g, tm.h_mod, tri_priors[q], lambda);
      knowledge[ei].mixed_triple_nodes.push_back(node);
      low_parts.push_back(g.value(node));
      mention_betas.push_back(g.value(tm.beta));
    }
    out.betas.push_back(std::move(mention_betas));
    knowledge[ei].low_state = concat_state(low_parts);
  }

  // High-level selection over eligible-list indices.
  Episode& ep = out.episode;
  std::vector<int> sel;  // eligible-list indices, in selection order
  switch (opt.high) {
    case RolloutOptions::HighMode::all:
      for (std::size_t i = 0; i < out.eligible.size(); ++i) sel.push_back(static_cast<int>(i));
      break;
    case RolloutOptions::HighMode::count_range:
      for (std::size_t i = 0; i < out.eligible.size(); ++i) {
        const long long c = store.count_of(group[i]);
        if (c >= opt.count_min && c <= opt.count_max) sel.push_back(static_cast<int>(i));
      }
      break;
    case RolloutOptions::HighMode::sample:
    case RolloutOptions::HighMode::greedy: {
      const HighStateBuild hs =
          build_high_state(mixed_entities, cfg.entities_per_sentence, rng);
      const int probs_node = high.forward(g, high_bind, g.input(hs.state));
      out.high_probs = g.value(probs_node);
      std::vector<int> bits;
      if (opt.high == RolloutOptions::HighMode::sample) {
        const ActionSample a = sample_action(out.high_probs, rng, /*force_nonzero=*/true);
        bits = a.bits;
        ep.high_forced = a.forced;
        ep.high_logprob_node = g.bernoulli_logprob(probs_node, bits);
        ep.high_logprob = g.scalar(ep.high_logprob_node);
      } else {
        bits = greedy_bits(out.high_probs, /*force_nonzero=*/true);
      }
      ep.high_bits = bits;
      ep.slot_mention.clear();
      for (int m : hs.slot_mention) ep.slot_mention.push_back(out.eligible[static_cast<std::size_t>(m)]);
      std::vector<int> slot_elig = hs.slot_mention;
      sel = trigger_low_level(bits, slot_elig);
      break;
    }
    case RolloutOptions::HighMode::none:
      break;  // unreachable, handled above
  }

  // Low-level selection and injection, in high-selection order.
  for (int ei : sel) {
    const MentionKnowledge& mk = knowledge[static_cast<std::size_t>(ei)];
    const int mention = out.eligible[static_cast<std::size_t>(ei)];
    LowEpisode le;
    le.mention = mention;
    if (opt.low == RolloutOptions::LowMode::all) {
      le.bits.assign(static_cast<std::size_t>(m_slots), 1);
    } else {
      const int probs_node = low.forward(g, low_bind, g.input(mk.low_state));
      const Tensor probs = g.value(probs_node);
      out.low_probs.push_back(probs);
      if (opt.low == RolloutOptions::LowMode::sample) {
        le.bits = sample_action(probs, rng, /*force_nonzero=*/false).bits;
        le.logprob_node = g.bernoulli_logprob(probs_node, le.bits);
        le.logprob = g.scalar(le.logprob_node);
      } else {
        le.bits = greedy_bits(probs, /*force_nonzero=*/false);
      }
    }
    std::vector<int> chosen;
    for (int q = 0; q < m_slots; ++q)
      if (le.bits[static_cast<std::size_t>(q)]) chosen.push_back(mk.mixed_triple_nodes[static_cast<std::size_t>(q)]);
    apply_injection(g, s, mention, chosen, out.injections);
    ep.low.push_back(std::move(le));
    out.selected.push_back(mention);
  }
  out.rl_active = true;
  return out;
}

}  // namespace kehrl
