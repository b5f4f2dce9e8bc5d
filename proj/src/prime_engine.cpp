#include "primepatterns/prime_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::primes {

namespace {

constexpr std::uint64_t kBlockOdds = std::uint64_t{1} << 18;

std::uint64_t isqrt(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

std::vector<std::uint32_t> simple_sieve(std::uint32_t n) {
  std::vector<char> composite(n + 1, 0);
  std::vector<std::uint32_t> out;
  for (std::uint64_t i = 2; i <= n; ++i) {
    if (composite[i]) continue;
    out.push_back(static_cast<std::uint32_t>(i));
    for (std::uint64_t j = i * i; j <= n; j += i) composite[j] = 1;
  }
  return out;
}

// Odd base primes up to sqrt(hi). Grows monotonically; guarded for use
// from several threads.
std::vector<std::uint32_t> base_primes(std::uint64_t hi) {
  static std::mutex mutex;
  static std::vector<std::uint32_t> cache;
  static std::uint64_t covered = 0;
  std::uint64_t need = isqrt(hi) + 1;
  std::lock_guard<std::mutex> lock(mutex);
  if (need > covered) {
    std::uint64_t grow = std::max<std::uint64_t>(need, 2 * covered);
    if (grow > 0xFFFFFFF0u) fail(ErrorKind::budget, "sieve bound exceeds 2^64");
    cache = simple_sieve(static_cast<std::uint32_t>(grow));
    covered = grow;
  }
  std::vector<std::uint32_t> out;
  for (auto p : cache) {
    if (p == 2) continue;
    if (p > need) break;
    out.push_back(p);
  }
  return out;
}

void sieve_into(std::uint64_t lo, std::uint64_t hi, std::vector<std::uint64_t>& out) {
  out.clear();
  if (lo <= 2 && hi > 2) out.push_back(2);
  std::uint64_t first = std::max<std::uint64_t>(lo | 1, 3);
  if (first >= hi) return;
  const std::uint64_t odds = (hi - first + 1) / 2;
  const auto primes = base_primes(hi);

  // next[j]: index (in odd slots from `first`) of the next multiple of primes[j]
  std::vector<std::uint64_t> next(primes.size());
  std::size_t active = 0;
  for (; active < primes.size(); ++active) {
    std::uint64_t p = primes[active];
    std::uint64_t sq = p * p;
    if (sq >= hi) break;
    std::uint64_t m = std::max(sq, (first + p - 1) / p * p);
    if ((m & 1) == 0) m += p;
    next[active] = (m - first) / 2;
  }

  out.reserve(out.size() + static_cast<std::size_t>(odds / 8 + 16));
  std::vector<unsigned char> flags(static_cast<std::size_t>(std::min(odds, kBlockOdds)));
  for (std::uint64_t block = 0; block < odds; block += kBlockOdds) {
    const std::uint64_t len = std::min(kBlockOdds, odds - block);
    const std::uint64_t end = block + len;
    std::fill(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(len), 1);
    unsigned char* f = flags.data();
    for (std::size_t j = 0; j < active; ++j) {
      const std::uint64_t p = primes[j];
      std::uint64_t i = next[j];
      for (; i < end; i += p) f[i - block] = 0;
      next[j] = i;
    }
    for (std::uint64_t i = 0; i < len; ++i)
      if (f[i]) out.push_back(first + 2 * (block + i));
  }
}

}  // namespace

std::string PatternKey::label() const {
  std::string s;
  for (std::size_t i = 0; i < residues.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(residues[i]);
  }
  return s;
}

std::string Limit::type_name() const {
  return mode == LimitMode::x_bound ? "x" : "first_primes";
}

std::uint64_t PatternCounts::at(const std::vector<int>& residues) const {
  auto it = counts.find(PatternKey{q, residues});
  if (it == counts.end())
    fail(ErrorKind::invalid_parameter, "pattern is not a reduced pattern of this table");
  return it->second;
}

std::vector<std::uint64_t> sieve_segment(std::uint64_t lo, std::uint64_t hi, std::uint64_t budget) {
  if (lo >= hi) fail(ErrorKind::invalid_parameter, "sieve_segment requires lo < hi");
  if (hi - lo > budget)
    fail(ErrorKind::budget, "segment span " + std::to_string(hi - lo) +
                                " exceeds segment budget " + std::to_string(budget));
  std::vector<std::uint64_t> out;
  sieve_into(lo, hi, out);
  return out;
}

void stream_primes(std::uint64_t start,
                   const std::function<bool(const std::vector<std::uint64_t>&)>& visit,
                   int workers, std::uint64_t segment) {
  if (workers < 1) fail(ErrorKind::invalid_parameter, "worker count must be >= 1");
  if (segment < 1024) fail(ErrorKind::invalid_parameter, "segment span too small");
  // Segment boundaries depend only on start and segment, never on workers.
  std::uint64_t lo = start;
  std::vector<std::vector<std::uint64_t>> batch(static_cast<std::size_t>(workers));
  for (;;) {
    if (lo > (std::uint64_t{1} << 62))
      fail(ErrorKind::budget, "prime stream passed 2^62");
    base_primes(lo + segment * static_cast<std::uint64_t>(workers));
    parallel_for(batch.size(), workers, [&](std::size_t i) {
      std::uint64_t a = lo + segment * i;
      sieve_into(a, a + segment, batch[i]);
    });
    for (auto& block : batch)
      if (!visit(block)) return;
    lo += segment * static_cast<std::uint64_t>(workers);
  }
}

std::vector<int> reduced_residues(int q) {
  std::vector<int> out;
  for (int r = 1; r < q; ++r)
    if (gcd_u64(static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(q)) == 1) out.push_back(r);
  return out;
}

std::vector<PatternCounts> count_patterns_grid(LimitMode mode, std::vector<std::uint64_t> limits,
                                               int q, int k, int workers) {
  if (q < 3) fail(ErrorKind::invalid_parameter, "modulus q must be >= 3, got " + std::to_string(q));
  if (k < 1 || k > 4) fail(ErrorKind::invalid_parameter, "pattern length k must be in [1,4], got " + std::to_string(k));
  if (limits.empty()) fail(ErrorKind::invalid_parameter, "no limits given");
  std::sort(limits.begin(), limits.end());
  if (limits.front() == 0) fail(ErrorKind::invalid_parameter, "limit must be positive");

  const auto residues = reduced_residues(q);
  const int phi = static_cast<int>(residues.size());
  std::uint64_t n_codes = 1;
  for (int i = 0; i < k; ++i) n_codes *= static_cast<std::uint64_t>(phi);
  if (n_codes > (std::uint64_t{1} << 24))
    fail(ErrorKind::budget, "phi(q)^k = " + std::to_string(n_codes) + " patterns exceeds 2^24");
  std::vector<int> index_of(static_cast<std::size_t>(q), -1);
  for (int i = 0; i < phi; ++i) index_of[static_cast<std::size_t>(residues[static_cast<std::size_t>(i)])] = i;

  const std::size_t nb = limits.size();
  const std::uint64_t top = limits.back();
  std::vector<std::vector<std::uint64_t>> bucket(nb, std::vector<std::uint64_t>(n_codes, 0));
  std::vector<std::uint64_t> bucket_primes(nb, 0);

  // ring of the last k primes: residue index and position
  int ring_idx[4] = {0, 0, 0, 0};
  std::uint64_t ring_pos[4] = {0, 0, 0, 0};
  std::uint64_t ordinal = 0;
  std::size_t b_prime = 0, b_start = 0;

  auto visit = [&](const std::vector<std::uint64_t>& block) {
    for (std::uint64_t p : block) {
      ++ordinal;
      const std::uint64_t pos = mode == LimitMode::x_bound ? p : ordinal;
      while (b_prime < nb && pos > limits[b_prime]) ++b_prime;
      if (b_prime < nb) ++bucket_primes[b_prime];
      const int slot = static_cast<int>((ordinal - 1) % static_cast<std::uint64_t>(k));
      ring_idx[slot] = index_of[static_cast<std::size_t>(p % static_cast<std::uint64_t>(q))];
      ring_pos[slot] = pos;
      if (ordinal < static_cast<std::uint64_t>(k)) continue;
      // window starts at ordinal - k + 1, which sits in slot `oldest`
      const int oldest = static_cast<int>(ordinal % static_cast<std::uint64_t>(k));
      const std::uint64_t start_pos = ring_pos[oldest];
      if (start_pos > top) return false;
      while (b_start < nb && start_pos > limits[b_start]) ++b_start;
      std::uint64_t code = 0;
      bool ok = true;
      for (int i = 0; i < k; ++i) {
        int idx = ring_idx[(oldest + i) % k];
        if (idx < 0) {
          ok = false;
          break;
        }
        code = code * static_cast<std::uint64_t>(phi) + static_cast<std::uint64_t>(idx);
      }
      if (ok) ++bucket[b_start][code];
    }
    return true;
  };
  // segment size only affects speed; small queries avoid sieving 2^26 numbers
  std::uint64_t reach = mode == LimitMode::x_bound ? top + top / 8 + 4096 : nth_prime_upper_bound(top + 8);
  std::uint64_t segment = std::clamp<std::uint64_t>(std::bit_ceil(reach), 1 << 16, kDefaultSegmentBudget);
  stream_primes(0, visit, workers, segment);

  std::vector<PatternCounts> out;
  std::vector<std::uint64_t> running(n_codes, 0);
  std::uint64_t running_primes = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::uint64_t c = 0; c < n_codes; ++c) running[c] += bucket[b][c];
    running_primes += bucket_primes[b];
    PatternCounts pc;
    pc.limit = Limit{mode, limits[b]};
    pc.q = q;
    pc.k = k;
    pc.primes_in_limit = running_primes;
    for (std::uint64_t c = 0; c < n_codes; ++c) {
      PatternKey key{q, std::vector<int>(static_cast<std::size_t>(k))};
      std::uint64_t rest = c;
      for (int i = k - 1; i >= 0; --i) {
        key.residues[static_cast<std::size_t>(i)] = residues[rest % static_cast<std::uint64_t>(phi)];
        rest /= static_cast<std::uint64_t>(phi);
      }
      pc.counts.emplace(std::move(key), running[c]);
      pc.total_pairs += running[c];
    }
    out.push_back(std::move(pc));
  }
  return out;
}

PatternCounts count_patterns(Limit limit, int q, int k, int workers) {
  return count_patterns_grid(limit.mode, {limit.value}, q, k, workers).front();
}

LiValue log_integral(double x) {
  if (!(x >= 2.0)) fail(ErrorKind::domain, "li(x) requires x >= 2");
  if (x == 2.0) return {x, 0.0};
  // t = e^u turns the integrand into e^u/u, smooth on a log scale
  auto f = [](double u) { return std::exp(u) / u; };
  const double a = std::log(2.0), b = std::log(x);
  double total = 0.0;
  // unit panels in u keep each Kronrod fit well conditioned
  const int panels = std::max(1, static_cast<int>(std::ceil(b - a)));
  const double w = (b - a) / panels;
  for (int i = 0; i < panels; ++i) {
    double err = 0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, a + i * w, i + 1 == panels ? b : a + (i + 1) * w, 15, 1e-14, &err);
  }
  return {x, total};
}

std::uint64_t nth_prime_upper_bound(std::uint64_t n) {
  if (n < 6) return 13;
  double ln = std::log(static_cast<double>(n));
  return static_cast<std::uint64_t>(static_cast<double>(n) * (ln + std::log(ln))) + 1;
}

std::vector<GapRecord> gaps(std::uint64_t n, int workers) {
  std::vector<std::uint64_t> ps;
  ps.reserve(static_cast<std::size_t>(n + 1));
  std::uint64_t segment = std::min<std::uint64_t>(kDefaultSegmentBudget,
                                                  std::max<std::uint64_t>(nth_prime_upper_bound(n + 1) + 1, 1 << 16));
  stream_primes(0, [&](const std::vector<std::uint64_t>& block) {
    for (auto p : block) {
      if (ps.size() == n + 1) return false;
      ps.push_back(p);
    }
    return ps.size() < n + 1;
  }, workers, segment);
  std::vector<GapRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) out.push_back({i + 1, ps[i], ps[i + 1] - ps[i]});
  return out;
}

double gap_exceedance(std::uint64_t n, double c, int workers) {
  if (n < 100) fail(ErrorKind::invalid_parameter, "gap_exceedance requires N >= 100");
  if (!(c >= 0)) fail(ErrorKind::invalid_parameter, "gap_exceedance requires c >= 0");
  const auto g = gaps(n, workers);
  const double loglog = std::log(std::log(static_cast<double>(g.back().p)));
  std::uint64_t hits = 0;
  for (const auto& r : g)
    if (static_cast<double>(r.gap) > c * loglog * std::log(static_cast<double>(r.p))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace primepatterns::primes
