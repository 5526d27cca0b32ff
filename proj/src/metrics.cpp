#include "mars/metrics.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>

#include "mars/errors.hpp"

namespace mars {

namespace mp = boost::multiprecision;

int pass_at_1(const PolicyParams& policy, const Task& task, Rng& rng) {
  Tokens y = sample_sequence(policy, root_context(task.task_id), rng, task.gen_length);
  return evaluate(task, y, Split::kTrainAll).fully_correct() ? 1 : 0;
}

int pass_at_n(const std::vector<SolutionOutcome>& outcomes) {
  if (outcomes.empty()) throw DomainError("Pass@N over no solutions");
  for (const auto& o : outcomes)
    if (o.fully_correct()) return 1;
  return 0;
}

MctsSelection select_latest_wins(const std::vector<SolutionOutcome>& outcomes) {
  if (outcomes.empty()) throw DomainError("Pass@1(MCTS) over an empty tree");
  const SolutionOutcome* best = nullptr;
  for (const auto& o : outcomes)
    if (o.passed_all_public && (!best || o.index > best->index)) best = &o;
  MctsSelection sel;
  if (!best) {
    sel.fallback = true;
    for (const auto& o : outcomes)
      if (!best || o.index > best->index) best = &o;
  }
  sel.index = best->index;
  sel.passed = best->passed_all_private ? 1 : 0;
  return sel;
}

int pass_at_1_mcts(const std::vector<SolutionOutcome>& outcomes) {
  return select_latest_wins(outcomes).passed;
}

ExpectedOutcome expected_root_outcome(const PolicyParams& policy, const Task& task) {
  const ContextKey ctx = root_context(task.task_id);
  const int L = task.gen_length;
  const int V = policy.vocab();
  std::vector<std::vector<double>> probs;
  for (int t = 0; t < L; ++t) probs.push_back(softmax(policy.logits(ctx, t)));

  ExpectedOutcome out;
  if (task.kind == TaskKind::kStringMatch) {
    double all = 1.0, sum = 0.0;
    std::size_t tests = 0;
    for (const auto* split : {&task.public_tests, &task.private_tests})
      for (const TestCase& tc : *split) {
        double p = probs[static_cast<std::size_t>(tc.input)][static_cast<std::size_t>(tc.expected)];
        all *= p;
        sum += p;
        ++tests;
      }
    out.pass_at_1 = all;
    out.train_reward = sum / static_cast<double>(tests);
    return out;
  }

  double space = std::pow(static_cast<double>(V), L);
  if (space > static_cast<double>(1 << 22))
    throw ValidationError("sequence space too large for exact enumeration");
  Tokens y(static_cast<std::size_t>(L), 0);
  const std::uint64_t n = static_cast<std::uint64_t>(space);
  for (std::uint64_t code = 0; code < n; ++code) {
    std::uint64_t c = code;
    double p = 1.0;
    for (int t = 0; t < L; ++t) {
      y[static_cast<std::size_t>(t)] = static_cast<Token>(c % static_cast<std::uint64_t>(V));
      c /= static_cast<std::uint64_t>(V);
      p *= probs[static_cast<std::size_t>(t)][static_cast<std::size_t>(y[static_cast<std::size_t>(t)])];
    }
    EvalResult r = evaluate(task, y, Split::kTrainAll);
    if (r.fully_correct()) out.pass_at_1 += p;
    out.train_reward += p * r.reward;
  }
  return out;
}

int ClusterProfile::total() const {
  int n = 0;
  for (int s : sizes) n += s;
  return n;
}

void ClusterProfile::validate() const {
  if (sizes.empty()) throw ValidationError("cluster profile is empty");
  for (int s : sizes)
    if (s < 1) throw ValidationError("cluster sizes must be positive");
}

namespace {

mp::cpp_int binomial(int n, int k) {
  if (k < 0 || n < k) return 0;
  k = std::min(k, n - k);
  mp::cpp_int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

mp::cpp_rational da_at_k_exact(const ClusterProfile& profile, int k) {
  const int n = profile.total();
  const mp::cpp_int denom = binomial(n, k);
  mp::cpp_rational sum = 0;
  for (int s : profile.sizes) sum += 1 - mp::cpp_rational(binomial(n - s, k), denom);
  return sum;
}

}  // namespace

double da_at_k(const ClusterProfile& profile, int k) {
  profile.validate();
  if (k < 1 || k > profile.total())
    throw DomainError("DA@K needs 1 <= K <= N (K=" + std::to_string(k) + ", N=" +
                      std::to_string(profile.total()) + ")");
  return da_at_k_exact(profile, k).convert_to<double>();
}

double effective_algorithms(const ClusterProfile& profile) {
  profile.validate();
  const auto& s = profile.sizes;
  // Uniform profiles have entropy ln M exactly.
  if (std::all_of(s.begin(), s.end(), [&](int x) { return x == s.front(); }))
    return static_cast<double>(s.size());
  const double n = profile.total();
  double h = 0.0;
  for (int size : s) {
    double p = size / n;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

double nauadc(const ClusterProfile& profile, int k_max, bool skip_first) {
  profile.validate();
  if (k_max == 1) throw DomainError("NAUADC is undefined for K_max = 1");
  if (k_max < 1 || k_max > profile.total()) throw DomainError("NAUADC needs 1 < K_max <= N");
  mp::cpp_rational sum = 0;
  for (int k = skip_first ? 2 : 1; k <= k_max; ++k) sum += da_at_k_exact(profile, k);
  return mp::cpp_rational(sum / (k_max - 1)).convert_to<double>();
}

std::vector<std::int64_t> solution_fingerprint(const Task& task, const Tokens& solution) {
  if (task.kind == TaskKind::kStringMatch) return {solution.begin(), solution.end()};
  const ExprAlphabet alpha = task.alphabet();
  std::vector<std::int64_t> fp;
  for (std::int64_t x = -3; x <= 8; ++x) {
    auto out = run_program(alpha, solution, x);
    if (!out) throw ValidationError("fingerprint of a malformed program");
    fp.push_back(*out);
  }
  for (Token op : {alpha.add(), alpha.sub(), alpha.mul()})
    fp.push_back(std::count(solution.begin(), solution.end(), op));
  return fp;
}

ClusterProfile canonical_cluster(const std::vector<Tokens>& solutions, const Task& task,
                                 std::vector<int>* assignment) {
  std::map<std::vector<std::int64_t>, int> ids;
  ClusterProfile profile;
  if (assignment) assignment->clear();
  for (const Tokens& y : solutions) {
    if (!evaluate(task, y, Split::kTrainAll).fully_correct())
      throw ValidationError("clustering input contains an incorrect solution");
    auto [it, inserted] = ids.try_emplace(solution_fingerprint(task, y), profile.clusters());
    if (inserted) profile.sizes.push_back(0);
    ++profile.sizes[static_cast<std::size_t>(it->second)];
    if (assignment) assignment->push_back(it->second);
  }
  return profile;
}

}  // namespace mars
