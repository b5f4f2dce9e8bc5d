#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace primepatterns::primes {

inline constexpr std::uint64_t kDefaultSegmentBudget = std::uint64_t{1} << 26;

struct PatternKey {
  int q = 0;
  std::vector<int> residues;

  auto operator<=>(const PatternKey&) const = default;
  std::string label() const;  // residues joined by '-'
};

enum class LimitMode { x_bound, first_primes };

struct Limit {
  LimitMode mode = LimitMode::x_bound;
  std::uint64_t value = 0;

  static Limit up_to(std::uint64_t x) { return {LimitMode::x_bound, x}; }
  static Limit first(std::uint64_t n) { return {LimitMode::first_primes, n}; }
  std::string type_name() const;
};

struct PatternCounts {
  Limit limit;
  int q = 0;
  int k = 0;
  std::map<PatternKey, std::uint64_t> counts;  // every reduced pattern, zeros included
  std::uint64_t total_pairs = 0;
  std::uint64_t primes_in_limit = 0;  // all primes p_n inside the limit, coprime or not

  std::uint64_t at(const std::vector<int>& residues) const;
};

struct GapRecord {
  std::uint64_t n;
  std::uint64_t p;
  std::uint64_t gap;
};

struct LiValue {
  double x;
  double value;
};

// Primes in [lo, hi). lo may be 0 or 1; the span must not exceed budget.
std::vector<std::uint64_t> sieve_segment(std::uint64_t lo, std::uint64_t hi,
                                         std::uint64_t budget = kDefaultSegmentBudget);

// Visits consecutive blocks of primes >= start in ascending order until the
// visitor returns false. Blocks are sieved on `workers` threads but always
// delivered in order.
void stream_primes(std::uint64_t start,
                   const std::function<bool(const std::vector<std::uint64_t>&)>& visit,
                   int workers = 1, std::uint64_t segment = kDefaultSegmentBudget);

// Reduced residues of q in increasing order.
std::vector<int> reduced_residues(int q);

PatternCounts count_patterns(Limit limit, int q, int k, int workers = 1);

// One pass over the primes for several limits of the same mode; the result
// order follows `limits` after sorting ascending.
std::vector<PatternCounts> count_patterns_grid(LimitMode mode, std::vector<std::uint64_t> limits,
                                               int q, int k, int workers = 1);

LiValue log_integral(double x);

double gap_exceedance(std::uint64_t n, double c, int workers = 1);

// First n+1 primes' gaps, for statistics.
std::vector<GapRecord> gaps(std::uint64_t n, int workers = 1);

// p_n < n (log n + log log n) for n >= 6.
std::uint64_t nth_prime_upper_bound(std::uint64_t n);

}  // namespace primepatterns::primes
