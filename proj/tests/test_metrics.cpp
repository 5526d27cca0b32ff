#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "mars/errors.hpp"
#include "mars/metrics.hpp"
#include "oracles.hpp"

using namespace mars;

namespace {

// Every multiset of positive sizes summing to n (non-increasing order).
void partitions(int n, int max_part, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& f) {
  if (n == 0) {
    f(cur);
    return;
  }
  for (int p = std::min(n, max_part); p >= 1; --p) {
    cur.push_back(p);
    partitions(n - p, p, cur, f);
    cur.pop_back();
  }
}

void all_profiles(int max_n, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> cur;
  for (int n = 1; n <= max_n; ++n) partitions(n, n, cur, f);
}

Task string_task(const Tokens& target) {
  Task t;
  t.kind = TaskKind::kStringMatch;
  t.vocab = 4;
  t.gen_length = static_cast<int>(target.size());
  t.hidden_target = target;
  for (int i = 0; i < t.gen_length; ++i)
    (i % 2 ? t.private_tests : t.public_tests).push_back({i, target[static_cast<std::size_t>(i)]});
  return t;
}

Task expr_task(const Tokens& target) {
  Task t;
  t.kind = TaskKind::kExprSynth;
  t.max_const = 2;
  t.vocab = 8;
  t.gen_length = 4;
  t.hidden_target = target;
  for (int x = 0; x < 4; ++x)
    (x % 2 ? t.private_tests : t.public_tests).push_back({x, *run_program(t.alphabet(), target, x)});
  return t;
}

}  // namespace

TEST_CASE("da_at_k equals subset enumeration for every profile with N <= 8") {
  int profiles = 0;
  all_profiles(8, [&](const std::vector<int>& sizes) {
    ClusterProfile p{sizes};
    const int n = p.total();
    double prev = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double got = da_at_k(p, k);
      CHECK(std::abs(got - oracle::brute_da_at_k(sizes, k)) <= 1e-12);
      CHECK(got >= prev);
      prev = got;
    }
    CHECK(da_at_k(p, 1) == 1.0);
    CHECK(da_at_k(p, n) == static_cast<double>(p.clusters()));
    ++profiles;
  });
  CHECK(profiles == 1 + 2 + 3 + 5 + 7 + 11 + 15 + 22);
}

TEST_CASE("da_at_k examples and errors") {
  CHECK(da_at_k({{3, 1}}, 2) == 1.5);
  CHECK_THROWS_AS(da_at_k({{3, 1}}, 0), DomainError);
  CHECK_THROWS_AS(da_at_k({{3, 1}}, 5), DomainError);
  CHECK_THROWS_AS(da_at_k({{3, 0}}, 1), ValidationError);
  // Large profiles stay finite and exact at the endpoints.
  ClusterProfile big{std::vector<int>(300, 2)};
  CHECK(da_at_k(big, 1) == 1.0);
  CHECK(da_at_k(big, 600) == 300.0);
  CHECK(da_at_k(big, 2) == doctest::Approx(2.0 - 1.0 / 599.0));
}

TEST_CASE("effective_algorithms") {
  CHECK(effective_algorithms({{2, 2}}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(effective_algorithms({{4}}) == 1.0);
  CHECK(effective_algorithms({{3, 1}}) == doctest::Approx(1.754765).epsilon(1e-6));
  all_profiles(8, [](const std::vector<int>& sizes) {
    ClusterProfile p{sizes};
    const double ea = effective_algorithms(p);
    CHECK(ea >= 1.0);
    CHECK(ea <= p.clusters() + 1e-12);
    if (p.clusters() == 1) CHECK(ea == 1.0);
    if (std::all_of(sizes.begin(), sizes.end(), [&](int s) { return s == sizes[0]; }))
      CHECK(ea == static_cast<double>(p.clusters()));
  });
}

TEST_CASE("nauadc") {
  CHECK(nauadc({{1, 1}}, 2) == 3.0);
  for (int k_max = 2; k_max <= 4; ++k_max)
    CHECK(nauadc({{4}}, k_max) == doctest::Approx(static_cast<double>(k_max) / (k_max - 1)));
  CHECK(nauadc({{1, 1}}, 2, true) == 2.0);
  CHECK_THROWS_AS(nauadc({{1, 1}}, 1), DomainError);
  CHECK_THROWS_AS(nauadc({{1, 1}}, 3), DomainError);
  const double hand = (1.0 + oracle::brute_da_at_k({3, 2, 1}, 2) + oracle::brute_da_at_k({3, 2, 1}, 3)) / 2.0;
  CHECK(nauadc({{3, 2, 1}}, 3) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("pass_at_n") {
  CHECK(pass_at_n({{0, true, false}, {1, true, true}}) == 1);
  CHECK(pass_at_n({{0, true, false}, {1, false, true}}) == 0);
  CHECK(pass_at_n({{0, true, true}, {1, true, true}}) == 1);
  CHECK_THROWS_AS(pass_at_n({}), DomainError);
}

TEST_CASE("latest-wins selection") {
  CHECK(pass_at_1_mcts({{3, true, false}, {7, true, true}}) == 1);
  MctsSelection fallback = select_latest_wins({{2, false, false}, {5, false, true}});
  CHECK(fallback.fallback);
  CHECK(fallback.index == 5);
  CHECK(fallback.passed == 1);
  CHECK(pass_at_1_mcts({{1, true, false}}) == 0);
  CHECK_THROWS_AS(pass_at_1_mcts({}), DomainError);
}

TEST_CASE("latest-wins picks the maximal public passer on random trees") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 16);
    std::vector<SolutionOutcome> outs;
    for (int i = 1; i <= n; ++i) outs.push_back({i, gen() % 3 == 0, gen() % 2 == 0});
    std::shuffle(outs.begin(), outs.end(), gen);
    MctsSelection s = select_latest_wins(outs);
    int best = -1, latest = -1;
    for (const auto& o : outs) {
      latest = std::max(latest, o.index);
      if (o.passed_all_public) best = std::max(best, o.index);
    }
    CHECK(s.index == (best >= 0 ? best : latest));
    CHECK(s.fallback == (best < 0));

    // Permuting verdicts of earlier nodes leaves the result unchanged.
    auto perm = outs;
    std::vector<std::pair<bool, bool>> early;
    for (const auto& o : perm)
      if (o.index < s.index) early.emplace_back(o.passed_all_public, o.passed_all_private);
    std::shuffle(early.begin(), early.end(), gen);
    std::size_t j = 0;
    for (auto& o : perm)
      if (o.index < s.index) std::tie(o.passed_all_public, o.passed_all_private) = early[j++];
    if (!s.fallback) CHECK(pass_at_1_mcts(perm) == s.passed);
  }
}

TEST_CASE("pass_at_1 on degenerate and uniform policies") {
  Task t = string_task({1, 2, 3});
  PolicyParams right(4, 3), wrong(4, 3);
  for (int pos = 0; pos < 3; ++pos) {
    right.row({root_context(0), pos})[static_cast<std::size_t>(t.hidden_target[static_cast<std::size_t>(pos)])] = 40.0;
    wrong.row({root_context(0), pos})[0] = 40.0;
  }
  Rng rng(1);
  CHECK(pass_at_1(right, t, rng) == 1);
  CHECK(pass_at_1(wrong, t, rng) == 0);

  PolicyParams uniform(4, 3);
  int hits = 0;
  for (int i = 0; i < 40000; ++i) hits += pass_at_1(uniform, t, rng);
  CHECK(std::abs(hits / 40000.0 - 1.0 / 64.0) <= 0.004);
  CHECK(expected_root_outcome(uniform, t).pass_at_1 == doctest::Approx(1.0 / 64.0).epsilon(1e-12));
  CHECK(expected_root_outcome(uniform, t).train_reward == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("expected_root_outcome matches enumeration on expression tasks") {
  const ExprAlphabet a{2};
  Task t = expr_task({a.var(), a.constant(1), a.add(), a.noop()});
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1.0);
  PolicyParams p(8, 4);
  for (int pos = 0; pos < 4; ++pos)
    for (double& z : p.row({root_context(0), pos})) z = n(gen);
  double pass = 0.0, reward = 0.0;
  for (int code = 0; code < 4096; ++code) {
    Tokens y;
    for (int c = code, i = 0; i < 4; ++i, c /= 8) y.push_back(c % 8);
    const double prob = std::exp(sequence_logprob(p, root_context(0), y));
    pass += prob * (evaluate(t, y, Split::kPublic).passed_all_public && evaluate(t, y, Split::kPrivate).passed_all_private);
    reward += prob * evaluate(t, y, Split::kTrainAll).reward;
  }
  ExpectedOutcome e = expected_root_outcome(p, t);
  CHECK(e.pass_at_1 == doctest::Approx(pass).epsilon(1e-10));
  CHECK(e.train_reward == doctest::Approx(reward).epsilon(1e-10));
}

TEST_CASE("canonical_cluster") {
  const ExprAlphabet a{2};
  Task inc = expr_task({a.var(), a.constant(1), a.add(), a.noop()});
  ClusterProfile same = canonical_cluster(
      {{a.var(), a.constant(1), a.add(), a.noop()}, {a.constant(1), a.var(), a.add(), a.noop()}}, inc);
  CHECK(same.sizes == std::vector<int>{2});

  Task dbl = expr_task({a.var(), a.constant(2), a.mul(), a.noop()});
  std::vector<int> assignment;
  ClusterProfile diff = canonical_cluster(
      {{a.var(), a.var(), a.add(), a.noop()}, {a.var(), a.constant(2), a.mul(), a.noop()},
       {a.var(), a.var(), a.add(), a.noop()}},
      dbl, &assignment);
  CHECK(diff.sizes == std::vector<int>{2, 1});
  CHECK(assignment == std::vector<int>{0, 1, 0});

  Task s = string_task({1, 2, 3});
  CHECK(canonical_cluster({{1, 2, 3}, {1, 2, 3}}, s).sizes == std::vector<int>{2});
  CHECK_THROWS_AS(canonical_cluster({{1, 2, 0}}, s), ValidationError);
}
