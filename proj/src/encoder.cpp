#include "kehrl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kehrl {

void EncoderConfig::validate() const {
  if (d < 1 || heads < 1 || d % heads != 0)
    throw std::invalid_argument("encoder config: d must be a positive multiple of heads");
  if (layers < 0) throw std::invalid_argument("encoder config: layers must be >= 0");
  if (max_len < 1) throw std::invalid_argument("encoder config: max_len must be >= 1");
  if (vocab_size <= Vocab::kSep)
    throw std::invalid_argument("encoder config: vocab_size must cover the reserved tokens");
  if (l_tri < 3) throw std::invalid_argument("encoder config: l_tri must be >= 3");
  if (entities_per_sentence < 1)
    throw std::invalid_argument("encoder config: entities_per_sentence must be >= 1");
  if (triples_per_entity < 1)
    throw std::invalid_argument("encoder config: triples_per_entity must be >= 1");
  if (k_hops < 1) throw std::invalid_argument("encoder config: k_hops must be >= 1");
  if (token_mask_rate < 0.0 || token_mask_rate > 1.0)
    throw std::invalid_argument("encoder config: token_mask_rate must lie in [0,1]");
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d;
  params_.add("tok_emb", Tensor(cfg_.vocab_size, d));
  params_.add("pos_emb", Tensor(cfg_.max_len, d));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) params_.add(p + w, Tensor(d, d));
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) params_.add(p + b, Tensor(1, d));
    params_.add(p + "ln1.g", Tensor::full(1, d, 1.0));
    params_.add(p + "ln1.b", Tensor(1, d));
    params_.add(p + "ffn.w1", Tensor(d, 4 * d));
    params_.add(p + "ffn.b1", Tensor(1, 4 * d));
    params_.add(p + "ffn.w2", Tensor(4 * d, d));
    params_.add(p + "ffn.b2", Tensor(1, d));
    params_.add(p + "ln2.g", Tensor::full(1, d, 1.0));
    params_.add(p + "ln2.b", Tensor(1, d));
  }
  if (!cfg_.tie_mlm_head) params_.add("mlm.w", Tensor(d, cfg_.vocab_size));
  params_.add("mlm.b", Tensor(1, cfg_.vocab_size));
}

void Encoder::init_params(Rng& rng) {
  for (int i = 0; i < params_.size(); ++i) {
    const std::string& name = params_.name(i);
    Tensor& t = params_.tensor(i);
    const bool is_gain = name.size() > 5 && name.compare(name.size() - 5, 5, "ln1.g") == 0;
    const bool is_gain2 = name.size() > 5 && name.compare(name.size() - 5, 5, "ln2.g") == 0;
    const bool is_bias = t.rows == 1 && !is_gain && !is_gain2;
    if (is_gain || is_gain2) {
      for (double& x : t.v) x = 1.0;
    } else if (is_bias) {
      for (double& x : t.v) x = 0.0;
    } else {
      for (double& x : t.v) x = rng.normal(0.0, 0.02);
    }
  }
}

int Encoder::forward(Graph& g, ParamBinder& bind, const std::vector<int>& tokens,
                     const std::vector<std::pair<int, int>>& injections) const {
  if (tokens.empty()) throw std::invalid_argument("encoder forward: empty token sequence");
  if (static_cast<int>(tokens.size()) > cfg_.max_len)
    throw std::invalid_argument("encoder forward: sequence longer than max_len");
  for (int t : tokens)
    if (t < 0 || t >= cfg_.vocab_size)
      throw std::invalid_argument("encoder forward: token id out of vocab: " + std::to_string(t));
  const int len = static_cast<int>(tokens.size());
  for (const auto& [pos, node] : injections) {
    (void)node;
    if (pos < 0 || pos >= len)
      throw std::invalid_argument("encoder forward: injection position out of range: " +
                                  std::to_string(pos));
  }

  int h = g.rows_gather(bind("tok_emb"), tokens);
  if (!injections.empty()) {
    std::vector<int> positions, nodes;
    for (const auto& [pos, node] : injections) {
      positions.push_back(pos);
      nodes.push_back(node);
    }
    h = g.replace_rows(h, positions, nodes);
  }
  std::vector<int> iota(static_cast<std::size_t>(len));
  std::iota(iota.begin(), iota.end(), 0);
  h = g.add(h, g.rows_gather(bind("pos_emb"), iota));

  const int dh = cfg_.d / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const int q = g.add_row_broadcast(g.matmul(h, bind(p + "attn.wq")), bind(p + "attn.bq"));
    const int k = g.add_row_broadcast(g.matmul(h, bind(p + "attn.wk")), bind(p + "attn.bk"));
    const int v = g.add_row_broadcast(g.matmul(h, bind(p + "attn.wv")), bind(p + "attn.bv"));
    std::vector<int> heads;
    for (int hh = 0; hh < cfg_.heads; ++hh) {
      const int c0 = hh * dh;
      const int qh = g.slice_cols(q, c0, c0 + dh);
      const int kh = g.slice_cols(k, c0, c0 + dh);
      const int vh = g.slice_cols(v, c0, c0 + dh);
      const int probs = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale));
      heads.push_back(g.matmul(probs, vh));
    }
    const int attn_out =
        g.add_row_broadcast(g.matmul(g.concat_cols(heads), bind(p + "attn.wo")), bind(p + "attn.bo"));
    h = g.layer_norm(g.add(h, attn_out), bind(p + "ln1.g"), bind(p + "ln1.b"));
    const int f1 = g.gelu(g.add_row_broadcast(g.matmul(h, bind(p + "ffn.w1")), bind(p + "ffn.b1")));
    const int f2 = g.add_row_broadcast(g.matmul(f1, bind(p + "ffn.w2")), bind(p + "ffn.b2"));
    h = g.layer_norm(g.add(h, f2), bind(p + "ln2.g"), bind(p + "ln2.b"));
  }
  return h;
}

int Encoder::mlm_logits(Graph& g, ParamBinder& bind, int hidden) const {
  if (cfg_.tie_mlm_head)
    return g.add_row_broadcast(g.matmul_nt(hidden, bind("tok_emb")), bind("mlm.b"));
  return g.add_row_broadcast(g.matmul(hidden, bind("mlm.w")), bind("mlm.b"));
}

Tensor Encoder::encode(const std::vector<int>& tokens) const {
  Graph g;
  ParamBinder bind(g, params_);
  return g.value(forward(g, bind, tokens));
}

int mlm_loss(Graph& g, int logits, const MaskPlan& plan) {
  if (plan.empty()) throw std::invalid_argument("mlm_loss: empty mask plan");
  return g.cross_entropy_mean(logits, plan.all_positions(), plan.all_golds());
}

std::vector<int> MaskPlan::all_positions() const {
  std::vector<int> out = entity_positions;
  out.insert(out.end(), token_positions.begin(), token_positions.end());
  return out;
}

std::vector<int> MaskPlan::all_golds() const {
  std::vector<int> out = entity_golds;
  out.insert(out.end(), token_golds.begin(), token_golds.end());
  return out;
}

MaskPlan make_token_mask_plan(const AnnotatedSentence& sentence, double token_mask_rate,
                              Rng& rng) {
  MaskPlan plan;
  const int len = static_cast<int>(sentence.tokens.size());
  std::vector<char> in_mention(static_cast<std::size_t>(len), 0);
  for (const Mention& m : sentence.mentions)
    for (int p = m.start; p < m.end; ++p) in_mention[static_cast<std::size_t>(p)] = 1;
  std::vector<int> avail;
  for (int p = 0; p < len; ++p)
    if (!in_mention[static_cast<std::size_t>(p)]) avail.push_back(p);
  const int want =
      static_cast<int>(std::llround(token_mask_rate * static_cast<double>(avail.size())));
  rng.shuffle(avail);
  const int take = std::min<int>(want, static_cast<int>(avail.size()));
  for (int i = 0; i < take; ++i)
    plan.token_positions.push_back(avail[static_cast<std::size_t>(i)]);
  // Degenerate-case guard: the loss contract rejects empty plans.
  if (plan.token_positions.empty() && !avail.empty()) plan.token_positions.push_back(avail[0]);
  std::sort(plan.token_positions.begin(), plan.token_positions.end());
  for (int p : plan.token_positions)
    plan.token_golds.push_back(sentence.tokens[static_cast<std::size_t>(p)]);
  return plan;
}

void add_entity_spans(MaskPlan& plan, const AnnotatedSentence& sentence,
                      const std::vector<int>& selected_mentions) {
  const int len = static_cast<int>(sentence.tokens.size());
  std::vector<char> covered(static_cast<std::size_t>(len), 0);
  for (int p : plan.entity_positions) covered[static_cast<std::size_t>(p)] = 1;
  for (int mi : selected_mentions) {
    if (mi < 0 || mi >= static_cast<int>(sentence.mentions.size()))
      throw std::invalid_argument("add_entity_spans: selected mention index out of range");
    const Mention& m = sentence.mentions[static_cast<std::size_t>(mi)];
    plan.entity_spans.emplace_back(m.start, m.end);
    for (int p = m.start; p < m.end; ++p) {
      if (covered[static_cast<std::size_t>(p)]) continue;  // duplicate slot selections
      covered[static_cast<std::size_t>(p)] = 1;
      plan.entity_positions.push_back(p);
      plan.entity_golds.push_back(sentence.tokens[static_cast<std::size_t>(p)]);
    }
  }
}

MaskPlan make_mask_plan(const AnnotatedSentence& sentence,
                        const std::vector<int>& selected_mentions, double token_mask_rate,
                        Rng& rng) {
  MaskPlan plan;
  const int len = static_cast<int>(sentence.tokens.size());
  std::vector<char> in_span(static_cast<std::size_t>(len), 0);
  for (int mi : selected_mentions) {
    if (mi < 0 || mi >= static_cast<int>(sentence.mentions.size()))
      throw std::invalid_argument("make_mask_plan: selected mention index out of range");
    const Mention& m = sentence.mentions[static_cast<std::size_t>(mi)];
    plan.entity_spans.emplace_back(m.start, m.end);
    for (int p = m.start; p < m.end; ++p) {
      if (in_span[static_cast<std::size_t>(p)]) continue;  // duplicate slot selections
      in_span[static_cast<std::size_t>(p)] = 1;
      plan.entity_positions.push_back(p);
      plan.entity_golds.push_back(sentence.tokens[static_cast<std::size_t>(p)]);
    }
  }
  std::vector<int> remaining;
  for (int p = 0; p < len; ++p)
    if (!in_span[static_cast<std::size_t>(p)]) remaining.push_back(p);
  const int want = static_cast<int>(
      std::llround(token_mask_rate * static_cast<double>(remaining.size())));
  rng.shuffle(remaining);
  const int take = std::min<int>(want, static_cast<int>(remaining.size()));
  for (int i = 0; i < take; ++i) plan.token_positions.push_back(remaining[static_cast<std::size_t>(i)]);
  // Degenerate-case guard: the loss contract rejects empty plans.
  if (plan.empty() && !remaining.empty()) plan.token_positions.push_back(remaining[0]);
  std::sort(plan.token_positions.begin(), plan.token_positions.end());
  for (int p : plan.token_positions)
    plan.token_golds.push_back(sentence.tokens[static_cast<std::size_t>(p)]);
  return plan;
}

std::vector<int> apply_mask(const std::vector<int>& tokens, const MaskPlan& plan) {
  std::vector<int> out = tokens;
  for (int p : plan.all_positions()) out[static_cast<std::size_t>(p)] = Vocab::kMask;
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits, const std::vector<int>& positions) {
  std::vector<int> out;
  out.reserve(positions.size());
  for (int r : positions) {
    const double* row = logits.row_ptr(r);
    int best = 0;
    for (int c = 1; c < logits.cols; ++c)
      if (row[c] > row[static_cast<std::size_t>(best)]) best = c;
    out.push_back(best);
  }
  return out;
}

}  // namespace kehrl
