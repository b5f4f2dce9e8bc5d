// W_{h,n} through the collapsed inclusion-exclusion
//   sum_{A in {0,h}} S_{q,0}(A u T) = sum_{U in T} (-1)^{|T\U|} S_q({0,h} u U),
// so W_{h,n} = sum_j (-1)^{n-j} C(|R|-j, n-j) V_{h,j} with
// V_{h,j} = sum_{U in R, |U| = j} S_q({0,h} u U).
// V is enumerated depth-first, updating each prime's occupied residue count.
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "primepatterns/conjecture.hpp"
#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::conjecture {

namespace {

using Mask = unsigned __int128;
constexpr int kMaxPrimes = 128;

int lowest_bit(Mask m) {
  auto lo = static_cast<std::uint64_t>(m);
  if (lo) return std::countr_zero(lo);
  return 64 + std::countr_zero(static_cast<std::uint64_t>(m >> 64));
}

struct Enumerator {
  std::vector<int> primes;     // p <= max(h,10), p not dividing q
  std::vector<Mask> divides;   // divides[d]: primes dividing d
  std::vector<int> interior;   // R_h
  int depth_limit = 0;
  long double v[kMaxDepth + 1] = {0, 0, 0, 0, 0, 0};
  std::vector<int> elems;

  void run(int depth, std::size_t start, const std::array<int, kMaxPrimes>& nu, long double prod) {
    v[depth] += prod;
    if (depth == depth_limit || prod == 0) return;
    const int m = static_cast<int>(primes.size());
    std::array<long double, kMaxPrimes> rho;
    long double all = 1;
    Mask zero = 0;
    for (int i = 0; i < m; ++i) {
      const int free_before = primes[static_cast<std::size_t>(i)] - nu[static_cast<std::size_t>(i)];
      rho[static_cast<std::size_t>(i)] = static_cast<long double>(free_before - 1) / free_before;
      if (free_before == 1)
        zero |= Mask{1} << i;
      else
        all *= rho[static_cast<std::size_t>(i)];
    }
    for (std::size_t idx = start; idx < interior.size(); ++idx) {
      const int u = interior[idx];
      Mask hit = 0;  // primes where u repeats an occupied residue
      for (int e : elems) hit |= divides[static_cast<std::size_t>(std::abs(u - e))];
      if (zero & ~hit) continue;  // would fill every residue class of some p
      long double f = prod * all;
      for (Mask c = hit & ~zero; c; c &= c - 1) f /= rho[static_cast<std::size_t>(lowest_bit(c))];
      if (depth + 1 == depth_limit) {
        v[depth + 1] += f;
        continue;
      }
      std::array<int, kMaxPrimes> next = nu;
      for (int i = 0; i < m; ++i)
        if (!(hit >> i & 1)) ++next[static_cast<std::size_t>(i)];
      elems.push_back(u);
      run(depth + 1, idx + 1, next, f);
      elems.pop_back();
    }
  }
};

std::array<long double, kMaxDepth + 1> weights_for(int h, int q, int a, int n_max, double target) {
  const int bound = std::max(h, 10);
  Enumerator e;
  for (std::uint32_t p : series::small_primes()) {
    if (p > static_cast<std::uint32_t>(bound)) break;
    if (q % static_cast<int>(p) != 0) e.primes.push_back(static_cast<int>(p));
  }
  if (e.primes.size() > static_cast<std::size_t>(kMaxPrimes))
    fail(ErrorKind::budget, "gap length " + std::to_string(h) + " needs more than 128 local primes");
  const int m = static_cast<int>(e.primes.size());
  e.divides.assign(static_cast<std::size_t>(bound) + 1, 0);
  for (int d = 1; d <= bound; ++d)
    for (int i = 0; i < m; ++i)
      if (d % e.primes[static_cast<std::size_t>(i)] == 0) e.divides[static_cast<std::size_t>(d)] |= Mask{1} << i;
  for (int t = 1; t < h; ++t)
    if (gcd_u64(static_cast<std::uint64_t>(((t + a) % q + q) % q), static_cast<std::uint64_t>(q)) == 1)
      e.interior.push_back(t);
  e.depth_limit = n_max;
  e.elems = {0, h};

  std::array<int, kMaxPrimes> nu{};
  long double prod = 1;
  for (int i = 0; i < m; ++i) {
    const int p = e.primes[static_cast<std::size_t>(i)];
    nu[static_cast<std::size_t>(i)] = h % p == 0 ? 1 : 2;
    prod *= static_cast<long double>(p - nu[static_cast<std::size_t>(i)]) / p;
  }
  e.run(0, 0, nu, prod);

  // S_q({0,h} u U) = K_{|U|+2} * prod_p (1 - nu_p/p)
  std::array<long double, kMaxDepth + 1> out{};
  const int r = static_cast<int>(e.interior.size());
  long double K[kMaxDepth + 3];
  for (int k = 2; k <= n_max + 2; ++k) {
    long double base = 1;
    for (int p : e.primes) base /= std::pow(1.0L - 1.0L / p, k);
    const series::Truncation plan = series::truncation_for(k, static_cast<std::uint64_t>(std::max(bound, 100)), target);
    K[k] = base * series::universal_factor(k, static_cast<std::uint64_t>(bound), plan, q);
  }
  for (int n = 0; n <= n_max; ++n) {
    long double s = 0;
    for (int j = 0; j <= n; ++j) {
      long double c = 1;  // C(r-j, n-j)
      for (int i = 0; i < n - j; ++i) c = c * (r - j - i) / (i + 1);
      if (r - j < n - j) c = 0;
      s += ((n - j) % 2 ? -1.0L : 1.0L) * c * K[j + 2] * e.v[j];
    }
    out[static_cast<std::size_t>(n)] = s;
  }
  return out;
}

std::string long_text(long double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.21Lg", v);
  return buf;
}

}  // namespace

GapWeights gap_weights(int q, int a, int b, int h_max, int n_max, double cutoff_target, int workers) {
  const EpsilonQ e = epsilon_q(q, a, b);
  if (n_max < 0 || n_max > kMaxDepth) fail(ErrorKind::invalid_parameter, "n_max must be in [0,5]");
  GapWeights w;
  w.q = q;
  w.a = e.a;
  w.b = e.b;
  w.h0 = e.h0;
  w.n_max = n_max;
  w.h_max = h_max;
  w.cutoff_target = cutoff_target;
  for (int h = e.h0; h <= h_max; h += q) w.hs.push_back(h);
  w.w.resize(w.hs.size());
  // largest h first so the slowest items start early
  parallel_for(w.hs.size(), workers, [&](std::size_t i) {
    const std::size_t j = w.hs.size() - 1 - i;
    w.w[j] = weights_for(w.hs[j], q, e.a, n_max, cutoff_target);
  });
  return w;
}

GapWeights cached_gap_weights(int q, int a, int b, int h_max, int n_max, double cutoff_target, int workers) {
  const EpsilonQ e = epsilon_q(q, a, b);
  const auto dir = series::cache_dir();
  std::filesystem::path path;
  if (dir) {
    path = *dir / ("gap_weights_q" + std::to_string(q) + "_a" + std::to_string(e.a) + "_b" +
                   std::to_string(e.b) + ".json");
    std::ifstream in(path);
    if (in) {
      try {
        nlohmann::json j;
        in >> j;
        if (j.at("n_max").get<int>() >= n_max && j.at("h_max").get<int>() >= h_max &&
            j.at("cutoff_target").get<std::string>() == format_real(cutoff_target)) {
          GapWeights w;
          w.q = q;
          w.a = e.a;
          w.b = e.b;
          w.h0 = e.h0;
          w.n_max = n_max;
          w.h_max = h_max;
          w.cutoff_target = cutoff_target;
          for (const auto& row : j.at("rows")) {
            int h = row.at("h").get<int>();
            if (h > h_max) break;
            w.hs.push_back(h);
            std::array<long double, kMaxDepth + 1> vals{};
            for (int n = 0; n <= n_max; ++n)
              vals[static_cast<std::size_t>(n)] =
                  std::strtold(row.at("w").at(static_cast<std::size_t>(n)).get<std::string>().c_str(), nullptr);
            w.w.push_back(vals);
          }
          return w;
        }
      } catch (const std::exception&) {
        // rebuilt below
      }
    }
  }
  GapWeights w = gap_weights(q, a, b, h_max, n_max, cutoff_target, workers);
  if (dir) {
    nlohmann::json j;
    j["q"] = q;
    j["a"] = e.a;
    j["b"] = e.b;
    j["n_max"] = n_max;
    j["h_max"] = h_max;
    j["cutoff_target"] = format_real(cutoff_target);
    auto& rows = j["rows"] = nlohmann::json::array();
    for (std::size_t i = 0; i < w.hs.size(); ++i) {
      nlohmann::json row;
      row["h"] = w.hs[i];
      for (int n = 0; n <= n_max; ++n) row["w"].push_back(long_text(w.w[i][static_cast<std::size_t>(n)]));
      rows.push_back(row);
    }
    std::error_code ec;
    std::filesystem::create_directories(*dir, ec);
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
      out << j.dump() << '\n';
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot write " + path.string());
  }
  return w;
}

}  // namespace primepatterns::conjecture
