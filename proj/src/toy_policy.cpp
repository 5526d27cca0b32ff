#include "mars/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "mars/errors.hpp"

namespace mars {

std::string digest_tokens(const Tokens& tokens) {
  if (tokens.empty()) return {};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Token t : tokens) {
    std::string bytes = std::to_string(t);
    bytes.push_back(',');
    h = fnv1a(bytes, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest_feedback(const FeedbackRecord& feedback) { return feedback.flag_string(); }

ContextKey root_context(int task_id) { return ContextKey{task_id, {}, {}}; }

ContextKey context_for_anchor(int task_id, const TreeNode& anchor) {
  if (anchor.is_root()) return root_context(task_id);
  return ContextKey{task_id, digest_tokens(anchor.solution), digest_feedback(anchor.feedback)};
}

std::vector<LogitKey> touched_rows(const ContextKey& ctx, int position) {
  std::vector<LogitKey> keys{{root_context(ctx.task_id), position}};
  if (!ctx.is_root()) keys.push_back({ctx, position});
  return keys;
}

PolicyParams::PolicyParams(int vocab, int max_length) : vocab_(vocab), max_length_(max_length) {
  if (vocab < 1) throw ValidationError("vocabulary size must be positive");
  if (max_length < 0) throw ValidationError("maximum length must be non-negative");
}

std::vector<double> PolicyParams::logits(const ContextKey& ctx, int position) const {
  std::vector<double> z(static_cast<std::size_t>(vocab_), 0.0);
  for (const LogitKey& k : touched_rows(ctx, position)) {
    auto it = rows_.find(k);
    if (it == rows_.end()) continue;
    for (std::size_t v = 0; v < z.size(); ++v) z[v] += it->second[v];
  }
  return z;
}

std::vector<double>& PolicyParams::row(const LogitKey& key) {
  auto [it, inserted] = rows_.try_emplace(key);
  if (inserted) it->second.assign(static_cast<std::size_t>(vocab_), 0.0);
  return it->second;
}

void PolicyParams::add_scaled(const LogitMap& delta, double scale) {
  for (const auto& [key, d] : delta) {
    if (d.size() != static_cast<std::size_t>(vocab_))
      throw ValidationError("gradient row has wrong vocabulary size");
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) continue;
    auto& r = row(key);
    for (std::size_t v = 0; v < d.size(); ++v) r[v] += scale * d[v];
  }
}

std::string PolicyParams::to_checkpoint() const {
  std::string out;
  nlohmann::ordered_json header;
  header["vocab"] = vocab_;
  header["max_length"] = max_length_;
  header["rows"] = rows_.size();
  out += header.dump() + "\n";
  for (const auto& [key, r] : rows_) {
    nlohmann::ordered_json rec;
    rec["task"] = key.context.task_id;
    rec["parent"] = key.context.parent_digest;
    rec["feedback"] = key.context.feedback_digest;
    rec["pos"] = key.position;
    rec["logits"] = r;
    out += rec.dump() + "\n";
  }
  return out;
}

PolicyParams PolicyParams::from_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty checkpoint");
  PolicyParams p;
  std::size_t expected_rows = 0;
  try {
    auto header = nlohmann::json::parse(line);
    p = PolicyParams(header.at("vocab").get<int>(), header.at("max_length").get<int>());
    expected_rows = header.at("rows").get<std::size_t>();
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto rec = nlohmann::json::parse(line);
      LogitKey key{ContextKey{rec.at("task").get<int>(), rec.at("parent").get<std::string>(),
                              rec.at("feedback").get<std::string>()},
                   rec.at("pos").get<int>()};
      auto logits = rec.at("logits").get<std::vector<double>>();
      if (logits.size() != static_cast<std::size_t>(p.vocab_))
        throw ValidationError("checkpoint line " + std::to_string(lineno) +
                              ": logit row length differs from vocabulary size");
      for (double z : logits)
        if (!std::isfinite(z))
          throw ValidationError("checkpoint line " + std::to_string(lineno) + ": non-finite logit");
      p.rows_[key] = std::move(logits);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
  if (p.rows_.size() != expected_rows) throw ValidationError("checkpoint row count mismatch");
  return p;
}

std::uint64_t PolicyParams::hash() const { return fnv1a(to_checkpoint()); }

std::vector<double> log_softmax(const std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

namespace {

void check_position(const PolicyParams& params, std::size_t position) {
  if (position >= static_cast<std::size_t>(params.max_length()))
    throw DomainError("position " + std::to_string(position) + " is beyond maximum length " +
                      std::to_string(params.max_length()));
}

void check_tokens(const PolicyParams& params, const Tokens& tokens) {
  if (tokens.size() > static_cast<std::size_t>(params.max_length()))
    throw DomainError("sequence longer than maximum length");
  for (Token t : tokens)
    if (t < 0 || t >= params.vocab())
      throw ValidationError("token id " + std::to_string(t) + " outside vocabulary");
}

}  // namespace

std::vector<double> token_logprobs(const PolicyParams& params, const ContextKey& ctx,
                                   const Tokens& prefix) {
  check_position(params, prefix.size());
  return log_softmax(params.logits(ctx, static_cast<int>(prefix.size())));
}

std::vector<double> token_sequence_logprobs(const PolicyParams& params, const ContextKey& ctx,
                                            const Tokens& tokens) {
  check_tokens(params, tokens);
  std::vector<double> out;
  out.reserve(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto lp = log_softmax(params.logits(ctx, static_cast<int>(t)));
    out.push_back(lp[static_cast<std::size_t>(tokens[t])]);
  }
  return out;
}

double sequence_logprob(const PolicyParams& params, const ContextKey& ctx, const Tokens& tokens) {
  double s = 0.0;
  for (double lp : token_sequence_logprobs(params, ctx, tokens)) s += lp;
  return s;
}

Tokens sample_sequence(const PolicyParams& params, const ContextKey& ctx, Rng& rng, int length) {
  if (length < 0 || length > params.max_length())
    throw DomainError("sample length " + std::to_string(length) + " outside [0, L]");
  Tokens out;
  out.reserve(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) {
    auto p = softmax(params.logits(ctx, t));
    out.push_back(static_cast<Token>(rng.categorical(p)));
  }
  return out;
}

LogitMap grad_sequence_logprob(const PolicyParams& params, const ContextKey& ctx,
                               const Tokens& tokens) {
  check_tokens(params, tokens);
  LogitMap grad;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto g = softmax(params.logits(ctx, static_cast<int>(t)));
    for (double& x : g) x = -x;
    g[static_cast<std::size_t>(tokens[t])] += 1.0;
    for (const LogitKey& k : touched_rows(ctx, static_cast<int>(t))) {
      auto [it, inserted] = grad.try_emplace(k, g.size(), 0.0);
      for (std::size_t v = 0; v < g.size(); ++v) it->second[v] += g[v];
    }
  }
  return grad;
}

double exact_kl(const PolicyParams& p, const PolicyParams& q, const ContextKey& ctx,
                const Tokens& prefix) {
  if (p.vocab() != q.vocab()) throw ValidationError("KL between policies of different vocabularies");
  auto lp = token_logprobs(p, ctx, prefix);
  auto lq = token_logprobs(q, ctx, prefix);
  double kl = 0.0;
  for (std::size_t v = 0; v < lp.size(); ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
  return std::max(kl, 0.0);
}

LogitMap grad_exact_kl(const PolicyParams& p, const PolicyParams& q, const ContextKey& ctx,
                       int position) {
  check_position(p, static_cast<std::size_t>(position));
  auto lp = log_softmax(p.logits(ctx, position));
  auto lq = log_softmax(q.logits(ctx, position));
  double kl = 0.0;
  for (std::size_t v = 0; v < lp.size(); ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
  // d/dz_k sum_v p_v (log p_v - log q_v) = p_k (log p_k - log q_k - KL)
  std::vector<double> g(lp.size());
  for (std::size_t k = 0; k < lp.size(); ++k) g[k] = std::exp(lp[k]) * (lp[k] - lq[k] - kl);
  LogitMap grad;
  for (const LogitKey& key : touched_rows(ctx, position)) grad[key] = g;
  return grad;
}

AgentPolicy::AgentPolicy(PolicyParams init) : params_(std::move(init)), ref_params_(params_) {}

void AgentPolicy::apply_update(const LogitMap& delta, double scale) {
  if (!old_override_) {
    for (const auto& [key, d] : delta) {
      if (undo_.count(key)) continue;
      auto it = params_.rows().find(key);
      undo_.emplace(key, it == params_.rows().end() ? std::nullopt
                                                    : std::optional<std::vector<double>>(it->second));
    }
  }
  old_cache_.reset();
  params_.add_scaled(delta, scale);
}

void AgentPolicy::set_params(PolicyParams p) {
  if (!old_override_) old_override_ = old_params();
  undo_.clear();
  old_cache_.reset();
  params_ = std::move(p);
}

const PolicyParams& AgentPolicy::old_params() const {
  if (old_override_) return *old_override_;
  if (undo_.empty()) return params_;
  if (!old_cache_) {
    PolicyParams old = params_;
    for (const auto& [key, r] : undo_) {
      if (r)
        old.row(key) = *r;
      else
        old.erase_row(key);
    }
    old_cache_ = std::move(old);
  }
  return *old_cache_;
}

void AgentPolicy::snapshot() {
  undo_.clear();
  old_override_.reset();
  old_cache_.reset();
}

PolicyParams init_params(int vocab, int max_length, const std::vector<int>& task_ids,
                         double scale, std::uint64_t seed) {
  PolicyParams p(vocab, max_length);
  if (scale <= 0.0) return p;
  Rng rng(seed);
  for (int task : task_ids)
    for (int pos = 0; pos < max_length; ++pos) {
      auto& r = p.row({root_context(task), pos});
      for (double& z : r) z = rng.normal(0.0, scale);
    }
  return p;
}

}  // namespace mars
