#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "primepatterns/prime_engine.hpp"

namespace primepatterns::sampler {

// coprime: only windows whose primes are all coprime to q enter the
// denominator, so frequencies sum to 1. raw: denominator C - k + 1.
enum class Denominator { coprime, raw };

// telescoped divides by li(10^(b1+1)) - li(10), the total li weight of the grid;
// last_window_start divides by li(9 * 10^b1).
enum class StitchDenominator { telescoped, last_window_start };

struct SampleWindow {
  std::uint64_t X = 2;
  std::uint64_t C = 1000000;
  int q = 3;
  int k = 2;
};

struct FrequencyRecord {
  SampleWindow window;
  std::map<primes::PatternKey, double> frequencies;
  double sigma = 0;
};

struct StitchedEstimate {
  int b1 = 0;
  int q = 0;
  int k = 0;
  StitchDenominator denominator = StitchDenominator::telescoped;
  std::map<primes::PatternKey, double> value;
};

inline constexpr std::uint64_t kDefaultMaxSpan = std::uint64_t{1} << 40;

FrequencyRecord sample_window(const SampleWindow& w, Denominator mode = Denominator::coprime,
                              int workers = 1, std::uint64_t max_span = kDefaultMaxSpan);

// Window covering every prime in (lo, hi): C is that prime count.
FrequencyRecord full_coverage_window(std::uint64_t lo, std::uint64_t hi, int q, int k,
                                     Denominator mode = Denominator::coprime, int workers = 1);

// All windows [a 10^b, (a+1) 10^b) for a in 1..9, b in 1..b1.
std::vector<FrequencyRecord> full_coverage_grid(int b1, int q, int k,
                                                Denominator mode = Denominator::coprime, int workers = 1);

StitchedEstimate stitch(const std::vector<FrequencyRecord>& records, int b1,
                        StitchDenominator denominator = StitchDenominator::telescoped);

double binomial_precision(std::uint64_t C);

// CSV `X,C,q,k,pattern,frequency,sigma`.
void write_records(const std::filesystem::path& file, const std::vector<FrequencyRecord>& records);
std::vector<FrequencyRecord> read_records(const std::filesystem::path& file);

}  // namespace primepatterns::sampler
