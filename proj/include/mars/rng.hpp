#ifndef MARS_RNG_HPP_
#define MARS_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace mars {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Derives an independent stream seed from a base seed, a stream name and
// optional integer coordinates (step, task id, ...). Pure function.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::initializer_list<std::uint64_t> coords = {});

// Seeded random stream. mt19937_64 plus Boost.Random distributions, whose
// output sequences are fixed by their implementations, so draws are
// reproducible across runs and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double beta(double alpha, double beta);
  double normal(double mean, double stddev);
  // Index drawn with probability proportional to probs[i]; probs need not be normalized.
  std::size_t categorical(std::span<const double> probs);
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mars

#endif  // MARS_RNG_HPP_
