// Universal part of the singular series: for p beyond the diameter of a set
// of size k every local factor is f_k(p) = (1 - k/p)/(1 - 1/p)^k, so one sieve
// pass serves every set. Checkpoints sit at powers of two.
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "primepatterns/error.hpp"
#include "primepatterns/prime_engine.hpp"
#include "primepatterns/singular_series.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::series {

namespace {

constexpr int kMaxK = 8;
constexpr std::uint64_t kSmallLimit = std::uint64_t{1} << 16;
constexpr int kFirstLargeExponent = 17;
constexpr int kMaxExponent = 40;
constexpr int kPowers = 4;  // p^-2 .. p^-5; the next term is below 1e-20 relative

std::mutex g_config_mutex;
std::optional<std::filesystem::path> g_cache_dir;
bool g_cache_dir_set = false;
int g_workers = 1;

long double log_factor(int k, long double p) {
  return std::log1p(-k / p) - k * std::log1p(-1.0L / p);
}

struct Checkpoint {
  std::uint64_t prime_cutoff = 0;
  long double sums[kPowers] = {0, 0, 0, 0};  // sum of p^-(m+2) over 2^16 < p <= 2^j
};

class TailSums {
 public:
  static TailSums& instance() {
    static TailSums t;
    return t;
  }

  // Sum of log f_k(p) over 10 < p <= x for x <= 2^16 (prefix by prime index).
  long double small_prefix(int k, std::uint64_t x) const {
    const auto& ps = small_primes();
    auto it = std::upper_bound(ps.begin(), ps.end(), static_cast<std::uint32_t>(std::min(x, kSmallLimit)));
    std::size_t n = static_cast<std::size_t>(it - ps.begin());
    return n == 0 ? 0.0L : prefix_[static_cast<std::size_t>(k)][n - 1];
  }

  long double log_sum_to(int k, std::uint64_t bound) {
    if (bound <= kSmallLimit) return small_prefix(k, bound);
    const Checkpoint& c = checkpoint(bound);
    long double s = small_prefix(k, kSmallLimit);
    long double km = static_cast<long double>(k) * k;
    for (int m = 0; m < kPowers; ++m) {
      int e = m + 2;
      s -= (km - k) / e * c.sums[m];
      km *= k;
    }
    return s;
  }

  std::uint64_t largest_prime_upto(std::uint64_t bound) {
    if (bound <= kSmallLimit) {
      const auto& ps = small_primes();
      auto it = std::upper_bound(ps.begin(), ps.end(), static_cast<std::uint32_t>(bound));
      return it == ps.begin() ? 0 : *(it - 1);
    }
    return checkpoint(bound).prime_cutoff;
  }

 private:
  TailSums() {
    const auto& ps = small_primes();
    for (int k = 0; k <= kMaxK; ++k) {
      auto& pre = prefix_[static_cast<std::size_t>(k)];
      pre.resize(ps.size());
      long double s = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i] > 10) s += log_factor(k, ps[i]);
        pre[i] = s;
      }
    }
  }

  const Checkpoint& checkpoint(std::uint64_t bound) {
    int j = std::countr_zero(bound);
    if ((std::uint64_t{1} << j) != bound || j < kFirstLargeExponent || j > kMaxExponent)
      fail(ErrorKind::invalid_parameter, "truncation bound must be a power of two in [2^17, 2^40]");
    std::lock_guard<std::mutex> lock(mutex_);
    if (static_cast<int>(checkpoints_.size()) + kFirstLargeExponent <= j) {
      load_from_disk();
      if (static_cast<int>(checkpoints_.size()) + kFirstLargeExponent <= j) {
        extend(j);
        save_to_disk();
      }
    }
    return checkpoints_[static_cast<std::size_t>(j - kFirstLargeExponent)];
  }

  void extend(int j) {
    const std::uint64_t top = std::uint64_t{1} << j;
    std::vector<Checkpoint> out;
    Checkpoint run;
    std::uint64_t next = std::uint64_t{1} << kFirstLargeExponent;
    std::uint64_t last_prime = 0;
    int workers;
    {
      std::lock_guard<std::mutex> lock(g_config_mutex);
      workers = g_workers;
    }
    // Ascending order keeps the long double sums independent of workers.
    primes::stream_primes(0, [&](const std::vector<std::uint64_t>& block) {
      for (std::uint64_t p : block) {
        while (p > next) {
          run.prime_cutoff = last_prime;
          out.push_back(run);
          if (next == top) return false;
          next <<= 1;
        }
        last_prime = p;
        if (p <= kSmallLimit) continue;
        long double inv = 1.0L / static_cast<long double>(p);
        long double inv2 = inv * inv;
        long double pw = inv2;
        for (int m = 0; m < kPowers; ++m) {
          run.sums[m] += pw;
          pw *= inv;
        }
      }
      return true;
    }, workers);
    checkpoints_ = std::move(out);
  }

  std::optional<std::filesystem::path> file() const {
    auto dir = cache_dir();
    if (!dir) return std::nullopt;
    return *dir / "universal_tail.json";
  }

  void load_from_disk() {
    auto path = file();
    if (!path || !std::filesystem::exists(*path)) return;
    std::ifstream in(*path);
    nlohmann::json j;
    try {
      in >> j;
      std::vector<Checkpoint> got;
      for (const auto& e : j.at("checkpoints")) {
        Checkpoint c;
        c.prime_cutoff = e.at("prime_cutoff").get<std::uint64_t>();
        for (int m = 0; m < kPowers; ++m)
          c.sums[m] = std::strtold(e.at("power_sums").at(static_cast<std::size_t>(m)).get<std::string>().c_str(), nullptr);
        got.push_back(c);
      }
      if (got.size() > checkpoints_.size()) checkpoints_ = std::move(got);
    } catch (const std::exception&) {
      // a damaged cache is recomputed
    }
  }

  void save_to_disk() const {
    auto path = file();
    if (!path) return;
    std::error_code ec;
    std::filesystem::create_directories(path->parent_path(), ec);
    nlohmann::json j;
    j["format"] = 1;
    j["first_bound_log2"] = kFirstLargeExponent;
    auto& arr = j["checkpoints"] = nlohmann::json::array();
    for (std::size_t i = 0; i < checkpoints_.size(); ++i) {
      nlohmann::json e;
      e["bound"] = std::uint64_t{1} << (kFirstLargeExponent + static_cast<int>(i));
      e["prime_cutoff"] = checkpoints_[i].prime_cutoff;
      for (int m = 0; m < kPowers; ++m) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.21Lg", checkpoints_[i].sums[m]);
        e["power_sums"].push_back(buf);
      }
      arr.push_back(e);
    }
    auto tmp = *path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
      out << j.dump(1) << '\n';
    }
    std::filesystem::rename(tmp, *path, ec);
    if (ec) fail(ErrorKind::io, "cannot write " + path->string());
  }

  std::mutex mutex_;
  std::vector<long double> prefix_[kMaxK + 1];
  std::vector<Checkpoint> checkpoints_;
};

}  // namespace

void set_cache_dir(std::optional<std::filesystem::path> dir) {
  std::lock_guard<std::mutex> lock(g_config_mutex);
  g_cache_dir = std::move(dir);
  g_cache_dir_set = true;
}

std::optional<std::filesystem::path> cache_dir() {
  std::lock_guard<std::mutex> lock(g_config_mutex);
  if (g_cache_dir_set) return g_cache_dir;
  if (const char* env = std::getenv("PRIMEPATTERNS_TABLE_DIR"); env && *env)
    return std::filesystem::path(env);
  return std::nullopt;
}

void set_workers(int workers) {
  if (workers < 1) fail(ErrorKind::invalid_parameter, "worker count must be >= 1");
  std::lock_guard<std::mutex> lock(g_config_mutex);
  g_workers = workers;
}

const std::vector<std::uint32_t>& small_primes() {
  static const std::vector<std::uint32_t> ps = [] {
    std::vector<std::uint32_t> out;
    for (auto p : primes::sieve_segment(0, kSmallLimit + 1)) out.push_back(static_cast<std::uint32_t>(p));
    return out;
  }();
  return ps;
}

Truncation truncation_for(int k, std::uint64_t min_bound, double target) {
  if (!(target > 0)) fail(ErrorKind::invalid_parameter, "cutoff target must be positive");
  if (k < 0 || k > kMaxK) fail(ErrorKind::size, "set size above 8 is not supported");
  for (int j = 7; j <= kMaxExponent; ++j) {
    std::uint64_t bound = std::uint64_t{1} << j;
    if (bound < min_bound) continue;
    double u = std::log(static_cast<double>(bound));
    double tail = static_cast<double>(k) * k * -std::expint(-u);
    if (tail <= target) {
      Truncation t;
      t.bound = bound;
      t.tail_bound = tail;
      t.prime_cutoff = TailSums::instance().largest_prime_upto(bound);
      return t;
    }
  }
  fail(ErrorKind::budget, "cutoff target " + format_real(target) + " needs primes beyond 2^40");
}

long double universal_factor(int k, std::uint64_t from, const Truncation& plan, int q) {
  if (from < 10 || from > kSmallLimit || from > plan.bound)
    fail(ErrorKind::invalid_parameter, "universal factor start out of range");
  auto& t = TailSums::instance();
  long double lg = t.log_sum_to(k, plan.bound) - t.small_prefix(k, from);
  // primes dividing q are excluded from the product
  for (std::uint64_t p = 2; p <= static_cast<std::uint64_t>(q); ++p)
    if (q % static_cast<int>(p) == 0 && is_prime_small(p) && p > from && p <= plan.bound)
      lg -= log_factor(k, static_cast<long double>(p));
  return std::exp(lg);
}

}  // namespace primepatterns::series
