#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace primepatterns::series {

using TupleSet = std::vector<int>;

inline constexpr double kDefaultCutoffTarget = 1e-9;
inline constexpr int kMaxSetSize = 7;
inline constexpr int kMaxDiameter = 65535;

enum class SeriesKind { plain, zeroed };

struct SeriesValue {
  TupleSet set;
  int q = 1;
  SeriesKind kind = SeriesKind::plain;
  double value = 0;
  std::uint64_t prime_cutoff = 0;
  double tail_bound = 0;
};

// Process-wide knobs for the universal tail sums. The cache directory falls
// back to PRIMEPATTERNS_TABLE_DIR when unset.
void set_cache_dir(std::optional<std::filesystem::path> dir);
std::optional<std::filesystem::path> cache_dir();
void set_workers(int workers);

// Throws unless elements are non-negative, strictly increasing, size <= 7.
void validate_set(const TupleSet& h);
TupleSet canonical(const TupleSet& h);

int residue_count(const TupleSet& h, std::uint64_t p);

// Truncation chosen for a set of size k: the product runs over p <= bound
// and the tail beyond it is bounded by k^2 * E1(log bound).
struct Truncation {
  std::uint64_t bound = 0;
  std::uint64_t prime_cutoff = 0;
  double tail_bound = 0;
};
Truncation truncation_for(int k, std::uint64_t min_bound, double target);

// Product over p in (from, plan.bound] of (1 - k/p)/(1 - 1/p)^k, skipping
// primes dividing q. Requires from >= 10.
long double universal_factor(int k, std::uint64_t from, const Truncation& plan, int q);

// Primes up to 2^16 for the exact local factors.
const std::vector<std::uint32_t>& small_primes();

SeriesValue singular_series(const TupleSet& h, int q, double cutoff_target = kDefaultCutoffTarget);
SeriesValue zeroed_series(const TupleSet& h, int q, double cutoff_target = kDefaultCutoffTarget);

// Alternating subset sum given plain values indexed by subset bitmask.
long double zeroed_from_plain(int k, const std::vector<long double>& plain_by_mask);

class SeriesTable {
 public:
  SeriesTable() = default;
  SeriesTable(int q, int max_size, int max_elem, double cutoff_target);

  int q() const { return q_; }
  int max_size() const { return max_size_; }
  int max_elem() const { return max_elem_; }
  double cutoff_target() const { return cutoff_target_; }
  const std::string& built_at() const { return built_at_; }
  std::size_t size() const;

  bool covers(const TupleSet& h) const;
  // Zeroed value for any set; non-canonical sets are translated first.
  SeriesValue at(const TupleSet& h) const;
  double value(const TupleSet& h) const;

  void save(const std::filesystem::path& dir) const;
  static SeriesTable load(const std::filesystem::path& dir, int q);
  static std::filesystem::path file_for(const std::filesystem::path& dir, int q);

  template <class F>
  void for_each(F&& f) const;

 private:
  friend SeriesTable build_table(int, int, int, double, int);
  std::uint64_t rank(const TupleSet& canonical_set) const;
  TupleSet unrank(int size, std::uint64_t r) const;

  int q_ = 0;
  int max_size_ = 0;
  int max_elem_ = 0;
  double cutoff_target_ = kDefaultCutoffTarget;
  std::string built_at_;
  std::vector<std::uint64_t> prime_cutoff_;        // per size
  std::vector<std::vector<double>> values_;        // per size, by rank
  std::vector<std::vector<double>> tail_bounds_;   // per size, by rank
};

SeriesTable build_table(int q, int max_size = 5, int max_elem = 150,
                        double cutoff_target = kDefaultCutoffTarget, int workers = 1);

// Loads the table for q from dir if it covers the request, otherwise builds
// and writes it.
SeriesTable ensure_table(const std::filesystem::path& dir, int q, int max_size, int max_elem,
                         int workers = 1);

struct MSAverage {
  int h = 0;
  int ell = 0;
  double lhs = 0;
  double model = 0;
  double A = 0;
  double prefactor = 1;
};

double normal_moment(int ell);
MSAverage ms_average(int h, int ell, int q, double A, double prefactor = 1.0);

struct MSFit {
  double A = 0;
  double prefactor = 1;
  double rms = 0;
};
// Least squares over h in [h_lo, h_hi]. ell = 2 is solved in closed form;
// ell = 4 minimizes over A numerically.
MSFit fit_ms_constant(int q, int ell, int h_lo, int h_hi, bool fit_prefactor = false);

template <class F>
void SeriesTable::for_each(F&& f) const {
  for (int s = 0; s <= max_size_; ++s)
    for (std::uint64_t r = 0; r < values_[static_cast<std::size_t>(s)].size(); ++r)
      f(unrank(s, r), values_[static_cast<std::size_t>(s)][r],
        tail_bounds_[static_cast<std::size_t>(s)][r], prime_cutoff_[static_cast<std::size_t>(s)]);
}

}  // namespace primepatterns::series
