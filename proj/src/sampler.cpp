#include "primepatterns/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::sampler {

namespace {

std::uint64_t pow10(int e) {
  std::uint64_t v = 1;
  for (int i = 0; i < e; ++i) v *= 10;
  return v;
}

// Pattern tallies among the given primes, windows fully inside the list.
FrequencyRecord tally(const SampleWindow& w, const std::vector<std::uint64_t>& ps, Denominator mode) {
  const auto residues = primes::reduced_residues(w.q);
  FrequencyRecord rec;
  rec.window = w;
  rec.sigma = binomial_precision(w.C);
  std::map<primes::PatternKey, std::uint64_t> counts;
  // enumerate every reduced pattern so absent ones are reported as 0
  std::vector<int> cur(static_cast<std::size_t>(w.k), 0);
  for (;;) {
    primes::PatternKey key{w.q, {}};
    for (int i : cur) key.residues.push_back(residues[static_cast<std::size_t>(i)]);
    counts.emplace(std::move(key), 0);
    int i = w.k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] + 1 == static_cast<int>(residues.size())) cur[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
  }
  std::uint64_t coprime_windows = 0;
  primes::PatternKey key{w.q, std::vector<int>(static_cast<std::size_t>(w.k))};
  for (std::size_t n = 0; n + static_cast<std::size_t>(w.k) <= ps.size(); ++n) {
    bool ok = true;
    for (int i = 0; i < w.k; ++i) {
      int r = static_cast<int>(ps[n + static_cast<std::size_t>(i)] % static_cast<std::uint64_t>(w.q));
      if (gcd_u64(static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(w.q)) != 1) {
        ok = false;
        break;
      }
      key.residues[static_cast<std::size_t>(i)] = r;
    }
    if (!ok) continue;
    ++coprime_windows;
    ++counts[key];
  }
  const std::uint64_t all_windows = ps.size() >= static_cast<std::size_t>(w.k) ? ps.size() - static_cast<std::size_t>(w.k) + 1 : 0;
  const std::uint64_t den = mode == Denominator::coprime ? coprime_windows : all_windows;
  for (const auto& [k, c] : counts)
    rec.frequencies[k] = den ? static_cast<double>(c) / static_cast<double>(den) : 0.0;
  return rec;
}

void check_window(int q, int k) {
  if (q < 3) fail(ErrorKind::invalid_parameter, "modulus q must be >= 3");
  if (k < 1 || k > 4) fail(ErrorKind::invalid_parameter, "pattern length k must be in [1,4]");
}

std::uint64_t segment_for(std::uint64_t span) {
  return std::clamp<std::uint64_t>(std::bit_ceil(span), 1 << 16, primes::kDefaultSegmentBudget);
}

}  // namespace

double binomial_precision(std::uint64_t C) {
  if (C < 1) fail(ErrorKind::invalid_parameter, "binomial precision needs C >= 1");
  return 1.0 / std::sqrt(static_cast<double>(C));
}

FrequencyRecord sample_window(const SampleWindow& w, Denominator mode, int workers, std::uint64_t max_span) {
  check_window(w.q, w.k);
  if (w.X < 2) fail(ErrorKind::invalid_parameter, "window start X must be >= 2");
  if (w.C < static_cast<std::uint64_t>(w.k)) fail(ErrorKind::invalid_parameter, "C must be at least k");
  // generous span estimate from the prime density near X
  const double x = static_cast<double>(w.X);
  const double span_estimate = static_cast<double>(w.C) * std::log(x + static_cast<double>(w.C) * std::log(x + 16) + 16) * 1.25 + 1000;
  if (span_estimate > static_cast<double>(max_span) || x + span_estimate > 4e18)
    fail(ErrorKind::budget, "window needs a sieve span of about " + format_real(span_estimate) +
                                ", above the configured maximum " + std::to_string(max_span));
  std::vector<std::uint64_t> ps;
  ps.reserve(static_cast<std::size_t>(w.C));
  primes::stream_primes(w.X + 1, [&](const std::vector<std::uint64_t>& block) {
    for (auto p : block) {
      if (ps.size() == w.C) return false;
      ps.push_back(p);
    }
    return ps.size() < w.C;
  }, workers, segment_for(static_cast<std::uint64_t>(span_estimate)));
  return tally(w, ps, mode);
}

FrequencyRecord full_coverage_window(std::uint64_t lo, std::uint64_t hi, int q, int k, Denominator mode, int workers) {
  check_window(q, k);
  if (lo < 2 || hi <= lo + 1) fail(ErrorKind::invalid_parameter, "window needs 2 <= lo < hi - 1");
  std::vector<std::uint64_t> ps;
  primes::stream_primes(lo + 1, [&](const std::vector<std::uint64_t>& block) {
    for (auto p : block) {
      if (p >= hi) return false;
      ps.push_back(p);
    }
    return true;
  }, workers, segment_for(hi - lo));
  SampleWindow w{lo, static_cast<std::uint64_t>(ps.size()), q, k};
  if (w.C == 0) fail(ErrorKind::invalid_parameter, "window (" + std::to_string(lo) + "," + std::to_string(hi) + ") holds no primes");
  return tally(w, ps, mode);
}

std::vector<FrequencyRecord> full_coverage_grid(int b1, int q, int k, Denominator mode, int workers) {
  if (b1 < 1 || b1 > 12) fail(ErrorKind::invalid_parameter, "b1 must be in [1,12]");
  std::vector<FrequencyRecord> out;
  for (int beta = 1; beta <= b1; ++beta)
    for (int alpha = 1; alpha <= 9; ++alpha) {
      const std::uint64_t s = pow10(beta);
      out.push_back(full_coverage_window(alpha * s, (alpha + 1) * s, q, k, mode, workers));
    }
  return out;
}

StitchedEstimate stitch(const std::vector<FrequencyRecord>& records, int b1, StitchDenominator denominator) {
  if (b1 < 1 || b1 > 17) fail(ErrorKind::invalid_parameter, "b1 must be in [1,17]");
  if (records.empty()) fail(ErrorKind::missing_window, "no window records given");
  std::map<std::uint64_t, const FrequencyRecord*> by_x;
  const int q = records.front().window.q, k = records.front().window.k;
  for (const auto& r : records) {
    if (r.window.q != q || r.window.k != k)
      fail(ErrorKind::invalid_parameter, "window records mix different (q,k)");
    by_x[r.window.X] = &r;
  }
  std::string gaps;
  for (int beta = 1; beta <= b1; ++beta)
    for (int alpha = 1; alpha <= 9; ++alpha)
      if (!by_x.count(alpha * pow10(beta)))
        gaps += (gaps.empty() ? "" : ",") + std::to_string(alpha) + "e" + std::to_string(beta);
  if (!gaps.empty()) fail(ErrorKind::missing_window, "grid is missing windows at X=" + gaps);

  StitchedEstimate est;
  est.b1 = b1;
  est.q = q;
  est.k = k;
  est.denominator = denominator;
  const double den = denominator == StitchDenominator::last_window_start
                         ? primes::log_integral(9.0 * static_cast<double>(pow10(b1))).value
                         : primes::log_integral(static_cast<double>(pow10(b1 + 1))).value - primes::log_integral(10.0).value;
  std::map<primes::PatternKey, long double> acc;
  for (const auto& [key, f] : records.front().frequencies) acc[key] = 0;
  for (int beta = 1; beta <= b1; ++beta)
    for (int alpha = 1; alpha <= 9; ++alpha) {
      const double lo = static_cast<double>(alpha * pow10(beta)), hi = static_cast<double>((alpha + 1) * pow10(beta));
      const double weight = primes::log_integral(hi).value - primes::log_integral(lo).value;
      for (const auto& [key, f] : by_x.at(alpha * pow10(beta))->frequencies) acc[key] += static_cast<long double>(f) * weight;
    }
  for (const auto& [key, s] : acc) est.value[key] = static_cast<double>(s / den);
  return est;
}

void write_records(const std::filesystem::path& file, const std::vector<FrequencyRecord>& records) {
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << "X,C,q,k,pattern,frequency,sigma\n";
  for (const auto& r : records)
    for (const auto& [key, f] : r.frequencies)
      out << r.window.X << ',' << r.window.C << ',' << r.window.q << ',' << r.window.k << ',' << key.label() << ','
          << format_real(f) << ',' << format_real(r.sigma) << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
}

std::vector<FrequencyRecord> read_records(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::io, "cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "X,C,q,k,pattern,frequency,sigma") fail(ErrorKind::io, file.string() + " is not a window record file");
  std::vector<FrequencyRecord> out;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string X, C, q, k, pattern, f, sigma;
      std::getline(ss, X, ',');
      std::getline(ss, C, ',');
      std::getline(ss, q, ',');
      std::getline(ss, k, ',');
      std::getline(ss, pattern, ',');
      std::getline(ss, f, ',');
      std::getline(ss, sigma, ',');
      SampleWindow w{std::stoull(X), std::stoull(C), std::stoi(q), std::stoi(k)};
      if (out.empty() || out.back().window.X != w.X || out.back().window.C != w.C) {
        out.push_back({w, {}, std::stod(sigma)});
      }
      primes::PatternKey key{w.q, {}};
      std::stringstream ps(pattern);
      std::string part;
      while (std::getline(ps, part, '-')) key.residues.push_back(std::stoi(part));
      out.back().frequencies[key] = std::stod(f);
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "malformed row in " + file.string());
  }
  return out;
}

}  // namespace primepatterns::sampler
