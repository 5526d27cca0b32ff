#ifndef MARS_TOY_POLICY_HPP_
#define MARS_TOY_POLICY_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mars/rng.hpp"
#include "mars/search_tree.hpp"

namespace mars {

// Conditioning tuple of one generation: the task, the solution being built
// on, and that solution's public feedback. The root context has both
// digests empty.
struct ContextKey {
  int task_id = 0;
  std::string parent_digest;
  std::string feedback_digest;

  bool is_root() const { return parent_digest.empty(); }
  auto operator<=>(const ContextKey&) const = default;
};

// Hex FNV-1a over the token ids; "" for the empty sequence.
std::string digest_tokens(const Tokens& tokens);
// Exact rendering of the public flags, e.g. "0110".
std::string digest_feedback(const FeedbackRecord& feedback);

ContextKey root_context(int task_id);
// Context for a generation anchored at `anchor` (the root yields root_context).
ContextKey context_for_anchor(int task_id, const TreeNode& anchor);

struct LogitKey {
  ContextKey context;
  int position = 0;
  auto operator<=>(const LogitKey&) const = default;
};

using LogitMap = std::map<LogitKey, std::vector<double>>;

// Tabular softmax sequence policy. Each (context, position) row holds V
// logits; absent rows are zero. A non-root context composes its own row with
// the task's root row, so experience gathered while refining also shapes
// fresh generation for the same task.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(int vocab, int max_length);

  int vocab() const { return vocab_; }
  int max_length() const { return max_length_; }
  const LogitMap& rows() const { return rows_; }

  // Effective logits at (context, position).
  std::vector<double> logits(const ContextKey& ctx, int position) const;
  // Stored row, created as zeros if absent.
  std::vector<double>& row(const LogitKey& key);
  // rows += scale * delta; ValidationError on shape mismatch. All-zero delta
  // rows are skipped, so they never materialize a stored row.
  void add_scaled(const LogitMap& delta, double scale);
  void erase_row(const LogitKey& key) { rows_.erase(key); }

  // Structured-text checkpoint: header line with V and L, then one JSON line
  // per stored row. from_checkpoint(to_checkpoint()) is bit-exact.
  std::string to_checkpoint() const;
  static PolicyParams from_checkpoint(const std::string& text);
  std::uint64_t hash() const;

  bool operator==(const PolicyParams&) const = default;

 private:
  int vocab_ = 0;
  int max_length_ = 0;
  LogitMap rows_;
};

std::vector<double> log_softmax(const std::vector<double>& logits);
std::vector<double> softmax(const std::vector<double>& logits);

// Log-probabilities of the next token after `prefix`. DomainError when
// prefix.size() >= L.
std::vector<double> token_logprobs(const PolicyParams& params, const ContextKey& ctx,
                                   const Tokens& prefix);
// Teacher-forced log-probability. ValidationError on token ids outside [0,V),
// DomainError when tokens.size() > L.
double sequence_logprob(const PolicyParams& params, const ContextKey& ctx, const Tokens& tokens);
// Per-token log-probabilities of `tokens`.
std::vector<double> token_sequence_logprobs(const PolicyParams& params, const ContextKey& ctx,
                                            const Tokens& tokens);
Tokens sample_sequence(const PolicyParams& params, const ContextKey& ctx, Rng& rng, int length);
// d sequence_logprob / d stored rows. Only touched rows are present.
LogitMap grad_sequence_logprob(const PolicyParams& params, const ContextKey& ctx,
                               const Tokens& tokens);
// KL(p || q) of the next-token distributions after `prefix`.
double exact_kl(const PolicyParams& p, const PolicyParams& q, const ContextKey& ctx,
                const Tokens& prefix);
// Gradient of exact_kl with respect to p's stored rows.
LogitMap grad_exact_kl(const PolicyParams& p, const PolicyParams& q, const ContextKey& ctx,
                       int position);

// Rows a (context, position) lookup reads from.
std::vector<LogitKey> touched_rows(const ContextKey& ctx, int position);

// Trainable parameters θ with the rollout-time snapshot θ_old and the frozen
// reference. θ_old is kept as an undo log of the rows updated since the last
// snapshot, so snapshotting a large table costs nothing.
class AgentPolicy {
 public:
  explicit AgentPolicy(PolicyParams init);

  const PolicyParams& params() const { return params_; }
  // θ += scale * delta.
  void apply_update(const LogitMap& delta, double scale);
  // Replaces θ outright; θ_old keeps its current value.
  void set_params(PolicyParams p);

  const PolicyParams& old_params() const;
  const PolicyParams& ref_params() const { return ref_params_; }
  // θ_old <- θ. Called at rollout boundaries.
  void snapshot();

 private:
  PolicyParams params_;
  PolicyParams ref_params_;
  // θ_old rows overwritten since the snapshot; nullopt marks a row θ_old lacked.
  std::map<LogitKey, std::optional<std::vector<double>>> undo_;
  std::optional<PolicyParams> old_override_;
  mutable std::optional<PolicyParams> old_cache_;
};

// Initial parameters: zeros, or N(0, scale) on the root rows of the listed
// tasks when scale > 0.
PolicyParams init_params(int vocab, int max_length, const std::vector<int>& task_ids,
                         double scale, std::uint64_t seed);

}  // namespace mars

#endif  // MARS_TOY_POLICY_HPP_
