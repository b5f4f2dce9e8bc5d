#include "primepatterns/singular_series.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <unordered_map>

#include <boost/math/tools/minima.hpp>
#include <json.hpp>

#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::series {

namespace {

std::string set_text(const TupleSet& h) {
  std::string s = "{";
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(h[i]);
  }
  return s + "}";
}

std::uint64_t binom(int n, int k) {
  if (k < 0 || n < k) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

// Exact local factors for p <= max(diameter, 10), then the universal tail.
// Depends only on differences, so translates of a set give identical bits.
SeriesValue plain_value(const TupleSet& h, int q, double target) {
  SeriesValue out;
  out.set = h;
  out.q = q;
  out.kind = SeriesKind::plain;
  const int k = static_cast<int>(h.size());
  if (k <= 1) {
    out.value = 1.0;
    return out;
  }
  const int diameter = h.back() - h.front();
  const std::uint64_t from = static_cast<std::uint64_t>(std::max(diameter, 10));
  const Truncation plan = truncation_for(k, std::max<std::uint64_t>(from, 100), target);
  out.prime_cutoff = plan.prime_cutoff;
  long double prod = 1.0L;
  for (std::uint32_t p : small_primes()) {
    if (p > from) break;
    if (q % static_cast<int>(p) == 0) continue;
    int nu = residue_count(h, p);
    if (nu == static_cast<int>(p)) {
      out.value = 0.0;
      return out;
    }
    long double inv = 1.0L / p;
    prod *= (1.0L - nu * inv) / std::pow(1.0L - inv, k);
  }
  prod *= universal_factor(k, from, plan, q);
  out.value = static_cast<double>(prod);
  out.tail_bound = plan.tail_bound;
  return out;
}

std::uint64_t colex_rank(const TupleSet& c) {
  // c is canonical: c[0] = 0, remaining elements in [1, M]
  std::uint64_t r = 0;
  for (std::size_t i = 1; i < c.size(); ++i) r += binom(c[i] - 1, static_cast<int>(i));
  return r;
}

TupleSet subset_of(const TupleSet& h, unsigned mask) {
  TupleSet t;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (mask >> i & 1u) t.push_back(h[i]);
  return t;
}

}  // namespace

void validate_set(const TupleSet& h) {
  if (h.size() > static_cast<std::size_t>(kMaxSetSize))
    fail(ErrorKind::size, "set " + set_text(h) + " has more than 7 elements (2^7 subset budget)");
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] < 0) fail(ErrorKind::invalid_parameter, "negative element in " + set_text(h));
    if (i && h[i] <= h[i - 1])
      fail(ErrorKind::invalid_parameter, "set " + set_text(h) + " is not strictly increasing");
  }
  if (!h.empty() && h.back() - h.front() > kMaxDiameter)
    fail(ErrorKind::invalid_parameter, "diameter of " + set_text(h) + " exceeds 65535");
}

TupleSet canonical(const TupleSet& h) {
  TupleSet c = h;
  if (!c.empty()) {
    int m = c.front();
    for (auto& e : c) e -= m;
  }
  return c;
}

int residue_count(const TupleSet& h, std::uint64_t p) {
  if (!is_prime_small(p)) fail(ErrorKind::invalid_parameter, std::to_string(p) + " is not prime");
  if (h.empty()) fail(ErrorKind::invalid_parameter, "residue count of the empty set");
  int seen[kMaxSetSize + 1];
  int n = 0;
  for (int e : h) {
    int r = static_cast<int>(static_cast<std::uint64_t>(e) % p);
    bool dup = false;
    for (int i = 0; i < n; ++i) dup = dup || seen[i] == r;
    if (!dup && n < kMaxSetSize + 1) seen[n++] = r;
  }
  return n;
}

SeriesValue singular_series(const TupleSet& h, int q, double cutoff_target) {
  validate_set(h);
  if (q < 1) fail(ErrorKind::invalid_parameter, "modulus must be >= 1");
  if (!(cutoff_target > 0)) fail(ErrorKind::invalid_parameter, "cutoff target must be positive");
  return plain_value(h, q, cutoff_target);
}

long double zeroed_from_plain(int k, const std::vector<long double>& plain_by_mask) {
  const unsigned full = (1u << k) - 1;
  long double s = 0;
  for (unsigned mask = 0; mask <= full; ++mask) {
    int missing = k - std::popcount(mask);
    s += (missing % 2 ? -1.0L : 1.0L) * plain_by_mask[mask];
  }
  return s;
}

SeriesValue zeroed_series(const TupleSet& h, int q, double cutoff_target) {
  validate_set(h);
  if (q < 1) fail(ErrorKind::invalid_parameter, "modulus must be >= 1");
  const int k = static_cast<int>(h.size());
  std::vector<long double> plain(std::size_t{1} << k);
  double tail = 0;
  for (unsigned mask = 0; mask < plain.size(); ++mask) {
    SeriesValue v = singular_series(subset_of(h, mask), q, cutoff_target);
    plain[mask] = v.value;
    tail += v.tail_bound;
  }
  SeriesValue out;
  out.set = h;
  out.q = q;
  out.kind = SeriesKind::zeroed;
  out.value = static_cast<double>(zeroed_from_plain(k, plain));
  out.tail_bound = tail;
  out.prime_cutoff = k >= 2 ? truncation_for(k, 128, cutoff_target).prime_cutoff : 0;
  return out;
}

SeriesTable::SeriesTable(int q, int max_size, int max_elem, double cutoff_target)
    : q_(q), max_size_(max_size), max_elem_(max_elem), cutoff_target_(cutoff_target) {
  values_.resize(static_cast<std::size_t>(max_size) + 1);
  tail_bounds_.resize(static_cast<std::size_t>(max_size) + 1);
  prime_cutoff_.assign(static_cast<std::size_t>(max_size) + 1, 0);
  for (int s = 0; s <= max_size; ++s) {
    std::uint64_t n = s == 0 ? 1 : binom(max_elem, s - 1);
    values_[static_cast<std::size_t>(s)].assign(n, 0.0);
    tail_bounds_[static_cast<std::size_t>(s)].assign(n, 0.0);
    if (s >= 2) prime_cutoff_[static_cast<std::size_t>(s)] = truncation_for(s, 128, cutoff_target).prime_cutoff;
  }
}

std::size_t SeriesTable::size() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::uint64_t SeriesTable::rank(const TupleSet& c) const { return c.empty() ? 0 : colex_rank(c); }

TupleSet SeriesTable::unrank(int size, std::uint64_t r) const {
  TupleSet out;
  if (size == 0) return out;
  std::vector<int> rest(static_cast<std::size_t>(size - 1));
  for (int i = size - 1; i >= 1; --i) {
    int c = i - 1;
    while (binom(c + 1, i) <= r) ++c;
    r -= binom(c, i);
    rest[static_cast<std::size_t>(i - 1)] = c + 1;
  }
  out.push_back(0);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

bool SeriesTable::covers(const TupleSet& h) const {
  if (h.size() > static_cast<std::size_t>(max_size_)) return false;
  if (h.empty()) return true;
  return h.back() - h.front() <= max_elem_;
}

SeriesValue SeriesTable::at(const TupleSet& h) const {
  validate_set(h);
  if (!covers(h))
    fail(ErrorKind::cache_miss, "series table q=" + std::to_string(q_) + " has no entry for " +
                                    set_text(canonical(h)) + " (max_size=" + std::to_string(max_size_) +
                                    ", max_elem=" + std::to_string(max_elem_) + ")");
  TupleSet c = canonical(h);
  std::size_t s = c.size();
  std::uint64_t r = rank(c);
  SeriesValue v;
  v.set = c;
  v.q = q_;
  v.kind = SeriesKind::zeroed;
  v.value = values_[s][r];
  v.tail_bound = tail_bounds_[s][r];
  v.prime_cutoff = prime_cutoff_[s];
  return v;
}

double SeriesTable::value(const TupleSet& h) const {
  if (!covers(h)) return at(h).value;  // raises the cache-miss error
  TupleSet c = canonical(h);
  return values_[c.size()][rank(c)];
}

SeriesTable build_table(int q, int max_size, int max_elem, double cutoff_target, int workers) {
  if (q < 1) fail(ErrorKind::invalid_parameter, "modulus must be >= 1");
  if (max_size < 0 || max_size > kMaxSetSize)
    fail(ErrorKind::invalid_parameter, "max_size must be in [0,7]");
  if (max_elem < 1 || max_elem > kMaxDiameter) fail(ErrorKind::invalid_parameter, "max_elem out of range");
  SeriesTable t(q, max_size, max_elem, cutoff_target);
  {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    t.built_at_ = buf;
  }
  // Pass 1: plain values of every canonical set; pass 2: alternating sums
  // through lookups of translated subsets.
  std::vector<std::vector<double>> plain(static_cast<std::size_t>(max_size) + 1);
  std::vector<std::vector<double>> plain_tail(static_cast<std::size_t>(max_size) + 1);
  for (int s = 0; s <= max_size; ++s) {
    const std::uint64_t n = t.values_[static_cast<std::size_t>(s)].size();
    plain[static_cast<std::size_t>(s)].resize(n);
    plain_tail[static_cast<std::size_t>(s)].resize(n);
    const std::uint64_t chunk = 4096;
    parallel_for((n + chunk - 1) / chunk, workers, [&](std::size_t c) {
      for (std::uint64_t r = c * chunk; r < std::min(n, (c + 1) * chunk); ++r) {
        SeriesValue v = plain_value(t.unrank(s, r), q, cutoff_target);
        plain[static_cast<std::size_t>(s)][r] = v.value;
        plain_tail[static_cast<std::size_t>(s)][r] = v.tail_bound;
      }
    });
  }
  for (int s = 0; s <= max_size; ++s) {
    const std::uint64_t n = t.values_[static_cast<std::size_t>(s)].size();
    const std::uint64_t chunk = 4096;
    parallel_for((n + chunk - 1) / chunk, workers, [&](std::size_t c) {
      std::vector<long double> by_mask(std::size_t{1} << s);
      for (std::uint64_t r = c * chunk; r < std::min(n, (c + 1) * chunk); ++r) {
        TupleSet h = t.unrank(s, r);
        double tail = 0;
        for (unsigned mask = 0; mask < by_mask.size(); ++mask) {
          TupleSet sub = canonical(subset_of(h, mask));
          std::uint64_t sr = t.rank(sub);
          by_mask[mask] = plain[sub.size()][sr];
          tail += plain_tail[sub.size()][sr];
        }
        t.values_[static_cast<std::size_t>(s)][r] = static_cast<double>(zeroed_from_plain(s, by_mask));
        t.tail_bounds_[static_cast<std::size_t>(s)][r] = tail;
      }
    });
  }
  return t;
}

std::filesystem::path SeriesTable::file_for(const std::filesystem::path& dir, int q) {
  return dir / ("series_q" + std::to_string(q) + ".jsonl");
}

void SeriesTable::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = file_for(dir, q_);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::io, "cannot write series table at " + tmp.string());
    std::string line;
    for_each([&](const TupleSet& h, double v, double tail, std::uint64_t cutoff) {
      line = "{\"q\":" + std::to_string(q_) + ",\"set\":[";
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(h[i]);
      }
      line += "],\"value\":\"" + format_real(v) + "\",\"prime_cutoff\":" + std::to_string(cutoff) +
              ",\"tail_bound\":\"" + format_real(tail) + "\"}\n";
      out << line;
    });
    if (!out) fail(ErrorKind::io, "cannot write series table at " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot write series table at " + path.string());
  nlohmann::json meta = {{"q", q_},
                         {"max_size", max_size_},
                         {"max_elem", max_elem_},
                         {"cutoff_target", format_real(cutoff_target_)},
                         {"built_at", built_at_},
                         {"entries", size()}};
  auto meta_path = path;
  meta_path.replace_extension(".meta.json");
  std::ofstream m(meta_path);
  if (!m) fail(ErrorKind::io, "cannot write table metadata at " + meta_path.string());
  m << meta.dump(1) << '\n';
}

SeriesTable SeriesTable::load(const std::filesystem::path& dir, int q) {
  const auto path = file_for(dir, q);
  auto meta_path = path;
  meta_path.replace_extension(".meta.json");
  std::ifstream m(meta_path);
  std::ifstream in(path);
  if (!m || !in) fail(ErrorKind::cache_miss, "no series table for q=" + std::to_string(q) + " in " + dir.string());
  nlohmann::json meta;
  try {
    m >> meta;
  } catch (const std::exception& e) {
    fail(ErrorKind::io, "unreadable table metadata " + meta_path.string() + ": " + e.what());
  }
  SeriesTable t(meta.at("q").get<int>(), meta.at("max_size").get<int>(), meta.at("max_elem").get<int>(),
                std::stod(meta.at("cutoff_target").get<std::string>()));
  t.built_at_ = meta.value("built_at", "");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      fail(ErrorKind::io, "bad line in " + path.string() + ": " + e.what());
    }
    TupleSet h = j.at("set").get<TupleSet>();
    if (!t.covers(h) || (!h.empty() && h.front() != 0))
      fail(ErrorKind::io, "entry " + set_text(h) + " outside the declared table range in " + path.string());
    std::uint64_t r = t.rank(h);
    t.values_[h.size()][r] = std::stod(j.at("value").get<std::string>());
    t.tail_bounds_[h.size()][r] = std::stod(j.at("tail_bound").get<std::string>());
    ++lines;
  }
  if (lines != t.size()) fail(ErrorKind::io, "table " + path.string() + " is incomplete");
  return t;
}

SeriesTable ensure_table(const std::filesystem::path& dir, int q, int max_size, int max_elem, int workers) {
  if (std::filesystem::exists(SeriesTable::file_for(dir, q))) {
    try {
      SeriesTable t = SeriesTable::load(dir, q);
      if (t.max_size() >= max_size && t.max_elem() >= max_elem && t.cutoff_target() == kDefaultCutoffTarget)
        return t;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::cache_miss && e.kind() != ErrorKind::io) throw;
    }
  }
  SeriesTable t = build_table(q, max_size, max_elem, kDefaultCutoffTarget, workers);
  t.save(dir);
  return t;
}

double normal_moment(int ell) {
  if (ell % 2) return 0.0;
  double m = 1;
  for (int i = ell - 1; i > 0; i -= 2) m *= i;
  return m;
}

namespace {

double ms_lhs(int h, int ell, int q) {
  // Plain values memoized by canonical form; zeroed sums built from them.
  std::unordered_map<std::uint64_t, long double> memo;
  auto key = [](const TupleSet& c) {
    std::uint64_t k = c.size();
    for (int e : c) k = k * 131 + static_cast<std::uint64_t>(e) + 1;
    return k;
  };
  auto plain = [&](const TupleSet& t) {
    TupleSet c = canonical(t);
    auto [it, fresh] = memo.try_emplace(key(c), 0.0L);
    if (fresh) it->second = plain_value(c, q, kDefaultCutoffTarget).value;
    return it->second;
  };
  long double total = 0;
  std::vector<int> idx(static_cast<std::size_t>(ell));
  for (int i = 0; i < ell; ++i) idx[static_cast<std::size_t>(i)] = i + 1;
  std::vector<long double> by_mask(std::size_t{1} << ell);
  for (;;) {
    TupleSet t(idx.begin(), idx.end());
    for (unsigned mask = 0; mask < by_mask.size(); ++mask) by_mask[mask] = plain(subset_of(t, mask));
    total += zeroed_from_plain(ell, by_mask);
    int i = ell - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == h - (ell - 1 - i)) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < ell; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return static_cast<double>(total);
}

double ms_model(int h, int ell, double A, double prefactor) {
  double mu = normal_moment(ell);
  if (mu == 0) return 0.0;
  double fact = 1;
  for (int i = 2; i <= ell; ++i) fact *= i;
  double base = -h * std::log(static_cast<double>(h)) + A * h;
  return prefactor * mu / fact * std::pow(base, ell / 2);
}

}  // namespace

MSAverage ms_average(int h, int ell, int q, double A, double prefactor) {
  if (ell < 1 || ell > 4) fail(ErrorKind::invalid_parameter, "ell must be in [1,4]");
  if (h < ell) fail(ErrorKind::invalid_parameter, "h must be >= ell");
  if (binom(h, ell) > 10'000'000)
    fail(ErrorKind::budget, "C(" + std::to_string(h) + "," + std::to_string(ell) + ") exceeds the 1e7 enumeration budget");
  MSAverage out;
  out.h = h;
  out.ell = ell;
  out.A = A;
  out.prefactor = prefactor;
  out.lhs = ell == 1 ? 0.0 : ms_lhs(h, ell, q);
  out.model = ms_model(h, ell, A, prefactor);
  return out;
}

MSFit fit_ms_constant(int q, int ell, int h_lo, int h_hi, bool fit_prefactor) {
  if (ell != 2 && ell != 4) fail(ErrorKind::invalid_parameter, "the average is fitted for ell = 2 or 4");
  if (h_hi - h_lo < 2) fail(ErrorKind::invalid_parameter, "need at least three h values to fit");
  std::vector<double> hs, lhs;
  for (int h = h_lo; h <= h_hi; ++h) {
    hs.push_back(h);
    lhs.push_back(ms_average(h, ell, q, 0.0).lhs);
  }
  auto sse = [&](double A, double kappa) {
    double s = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      double r = lhs[i] - ms_model(static_cast<int>(hs[i]), ell, A, kappa);
      s += r * r;
    }
    return s;
  };
  // best prefactor for fixed A is linear least squares
  auto best_kappa = [&](double A) {
    if (!fit_prefactor) return 1.0;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      double m = ms_model(static_cast<int>(hs[i]), ell, A, 1.0);
      num += m * lhs[i];
      den += m * m;
    }
    return den > 0 ? num / den : 1.0;
  };
  MSFit fit;
  if (ell == 2 && !fit_prefactor) {
    // lhs = (-h log h + A h)/2  =>  A = sum h (2 lhs + h log h) / sum h^2
    double num = 0, den = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      num += hs[i] * (2 * lhs[i] + hs[i] * std::log(hs[i]));
      den += hs[i] * hs[i];
    }
    fit.A = num / den;
  } else {
    auto r = boost::math::tools::brent_find_minima(
        [&](double A) { return sse(A, best_kappa(A)); }, -5.0, 5.0, 40);
    fit.A = r.first;
  }
  fit.prefactor = best_kappa(fit.A);
  fit.rms = std::sqrt(sse(fit.A, fit.prefactor) / static_cast<double>(hs.size()));
  return fit;
}

}  // namespace primepatterns::series
