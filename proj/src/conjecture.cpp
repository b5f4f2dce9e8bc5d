#include "primepatterns/conjecture.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "primepatterns/error.hpp"
#include "primepatterns/prime_engine.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::conjecture {

namespace {

int reduce(int a, int q) { return ((a % q) + q) % q; }

bool coprime(int a, int q) {
  return gcd_u64(static_cast<std::uint64_t>(reduce(a, q)), static_cast<std::uint64_t>(q)) == 1;
}

std::uint64_t binom(int n, int k) {
  if (k < 0 || n < k) return 0;
  long double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<std::uint64_t>(std::llround(r));
}

std::vector<int> interior(int h, int q, int a, bool restricted) {
  std::vector<int> r;
  for (int t = 1; t < h; ++t)
    if (!restricted || coprime(t + a, q)) r.push_back(t);
  return r;
}

// sum over g^h W_{h,n} for kept h, all n <= n_max at once
void gap_sums(const Coefficients& co, int h_cut, const GapWeights& w, int n_max, long double* out) {
  for (int n = 0; n <= n_max; ++n) out[n] = 0;
  const long double g = co.g;
  for (std::size_t i = 0; i < w.hs.size(); ++i) {
    const int h = w.hs[i];
    if (h > h_cut) break;
    const long double gh = std::pow(g, static_cast<long double>(h));
    for (int n = 0; n <= n_max; ++n) out[n] += gh * w.w[i][static_cast<std::size_t>(n)];
  }
}

void require_cover(const GapWeights& w, int h_cut, int n) {
  if (n < 0 || n > w.n_max)
    fail(ErrorKind::cache_miss, "gap weights hold depths up to " + std::to_string(w.n_max) +
                                    ", depth " + std::to_string(n) + " requested");
  if (h_cut > w.h_max)
    fail(ErrorKind::cache_miss, "gap weights cover h <= " + std::to_string(w.h_max) +
                                    " but the cutoff needs h <= " + std::to_string(h_cut));
}

}  // namespace

Coefficients coefficients(double y, int q) {
  if (q < 3) fail(ErrorKind::invalid_parameter, "modulus must be >= 3");
  const double phi = euler_phi(q);
  const double floor_y = std::max(std::exp(2.0), std::exp(2.0 * q / phi));
  if (!(y > floor_y))
    fail(ErrorKind::domain, "coefficients need y > " + format_real(floor_y) + " for q=" + std::to_string(q));
  Coefficients c;
  c.y = y;
  c.q = q;
  const double L = std::log(y);
  c.alpha = 1.0 - q / (phi * L);
  c.z = q / (phi * c.alpha * L);
  c.g = std::pow(c.alpha, phi / q);
  return c;
}

void validate(const ConjectureParams& p) {
  if (p.q < 3) fail(ErrorKind::invalid_parameter, "modulus must be >= 3");
  if (!coprime(p.a, p.q) || !coprime(p.b, p.q))
    fail(ErrorKind::invalid_parameter, "a and b must be reduced residues mod " + std::to_string(p.q));
  if (p.n_max < 0 || p.n_max > kMaxDepth) fail(ErrorKind::invalid_parameter, "n_max must be in [0,5]");
  if (!(p.c >= 1)) fail(ErrorKind::invalid_parameter, "gap cutoff constant c must be >= 1");
  if (!(p.quadrature.target_relative > 0) || !(p.quadrature.panel_width > 0) || p.quadrature.max_depth < 1)
    fail(ErrorKind::invalid_parameter, "bad quadrature settings");
}

EpsilonQ epsilon_q(int q, int a, int b) {
  if (q < 2) fail(ErrorKind::invalid_parameter, "modulus must be >= 2");
  if (!coprime(a, q) || !coprime(b, q))
    fail(ErrorKind::invalid_parameter, "a and b must be reduced residues mod " + std::to_string(q));
  EpsilonQ e;
  e.q = q;
  e.a = reduce(a, q);
  e.b = reduce(b, q);
  e.h0 = reduce(b - a, q);
  if (e.h0 == 0) e.h0 = q;
  int count = 0;
  for (int t = 1; t < e.h0; ++t)
    if (coprime(t + e.a, q)) ++count;
  e.value = count - static_cast<double>(euler_phi(q)) * e.h0 / q;
  return e;
}

int gap_cutoff(double y, double c) {
  const double L = std::log(y);
  return static_cast<int>(std::floor(c * std::log(L) * L));
}

SubsetSum subset_sum(SubsetKind kind, int h, int ell, int q, int a, const series::SeriesTable& table,
                     bool restricted) {
  if (h < 1 || ell < 0) fail(ErrorKind::invalid_parameter, "subset sums need h >= 1 and ell >= 0");
  if (table.q() != q)
    fail(ErrorKind::invalid_parameter, "table is for q=" + std::to_string(table.q()) + ", not " + std::to_string(q));
  const auto r = interior(h, q, a, restricted);
  if (binom(static_cast<int>(r.size()), ell) > 10'000'000)
    fail(ErrorKind::budget, "subset sum over C(" + std::to_string(r.size()) + "," + std::to_string(ell) +
                                ") sets exceeds the 1e7 budget");
  SubsetSum out{h, ell, kind, 0.0};
  if (ell > static_cast<int>(r.size())) return out;
  const bool with0 = kind == SubsetKind::B || kind == SubsetKind::D;
  const bool withh = kind == SubsetKind::C || kind == SubsetKind::D;
  long double total = 0;
  std::vector<int> idx(static_cast<std::size_t>(ell));
  for (int i = 0; i < ell; ++i) idx[static_cast<std::size_t>(i)] = i;
  series::TupleSet set;
  for (;;) {
    set.clear();
    if (with0) set.push_back(0);
    for (int i : idx) set.push_back(r[static_cast<std::size_t>(i)]);
    if (withh) set.push_back(h);
    total += table.value(set);
    int i = ell - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == static_cast<int>(r.size()) - (ell - i)) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < ell; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  out.value = static_cast<double>(total);
  return out;
}

double Lemma4Result::max_discrepancy() const {
  return std::max({b_discrepancy, c_discrepancy, d_discrepancy});
}

Lemma4Result lemma4_check(int h, int ell, int q, int a, const series::SeriesTable& table, Lemma4Form form) {
  if (ell < 1) fail(ErrorKind::invalid_parameter, "the identities need ell >= 1");
  if (h < 3) fail(ErrorKind::invalid_parameter, "the identities need h >= 3");
  const bool restricted = form == Lemma4Form::as_stated;
  auto S = [&](SubsetKind k, int hh, int l) { return subset_sum(k, hh, l, q, a, table, restricted).value; };
  const double a0 = S(SubsetKind::A, h, ell);
  const double a1 = S(SubsetKind::A, h - 1, ell);
  Lemma4Result r;
  r.b_discrepancy = std::abs(S(SubsetKind::B, h - 1, ell - 1) - (a0 - a1));
  r.c_discrepancy = std::abs(S(SubsetKind::C, h - 1, ell - 1) - (a0 - a1));
  if (ell >= 2) {
    const double a2 = S(SubsetKind::A, h - 2, ell);
    const int dh = form == Lemma4Form::as_stated ? h - 1 : h - 2;
    const double d = dh >= 1 ? S(SubsetKind::D, dh, ell - 2) : 0.0;
    r.d_discrepancy = std::abs(d - (a0 - 2 * a1 + a2));
  }
  return r;
}

double d_n(const ConjectureParams& params, const Coefficients& co, int n, const GapWeights& weights) {
  const int h_cut = gap_cutoff(co.y, params.c);
  require_cover(weights, h_cut, n);
  long double sums[kMaxDepth + 1];
  gap_sums(co, h_cut, weights, n, sums);
  return static_cast<double>(std::pow(-static_cast<long double>(co.z), n) * sums[n]);
}

double d_n(const ConjectureParams& params, double y, int n, const GapWeights& weights) {
  validate(params);
  if (weights.q != params.q || weights.a != reduce(params.a, params.q) || weights.b != reduce(params.b, params.q))
    fail(ErrorKind::invalid_parameter, "gap weights belong to a different pattern");
  return d_n(params, coefficients(y, params.q), n, weights);
}

double d_n_from_table(const ConjectureParams& params, double y, int n, const series::SeriesTable& table) {
  validate(params);
  const Coefficients co = coefficients(y, params.q);
  const int h_cut = gap_cutoff(y, params.c);
  const EpsilonQ e = epsilon_q(params.q, params.a, params.b);
  if (h_cut >= e.h0 && !table.covers(series::TupleSet(static_cast<std::size_t>(n + 2), 0)))
    fail(ErrorKind::cache_miss, "table lacks sets of size " + std::to_string(n + 2));
  int last = e.h0;
  while (last + params.q <= h_cut) last += params.q;
  if (h_cut >= e.h0 && last > table.max_elem())
    fail(ErrorKind::cache_miss, "table covers diameters <= " + std::to_string(table.max_elem()) +
                                    "; largest needed set has diameter " + std::to_string(last) +
                                    " and size " + std::to_string(n + 2));
  long double total = 0;
  for (int h = e.h0; h <= h_cut; h += params.q) {
    long double w = 0;
    for (SubsetKind k : {SubsetKind::A, SubsetKind::B, SubsetKind::C, SubsetKind::D})
      w += subset_sum(k, h, n, params.q, params.a, table).value;
    total += std::pow(static_cast<long double>(co.g), static_cast<long double>(h)) * w;
  }
  return static_cast<double>(std::pow(-static_cast<long double>(co.z), n) * total);
}

GeometricCheck geometric_check(const ConjectureParams& params, double y) {
  validate(params);
  const Coefficients co = coefficients(y, params.q);
  const EpsilonQ e = epsilon_q(params.q, params.a, params.b);
  const int h_cut = gap_cutoff(y, params.c);
  GeometricCheck g;
  long double s = 0;
  int terms = 0;
  for (int h = e.h0; h <= h_cut; h += params.q, ++terms) s += std::pow(static_cast<long double>(co.g), h);
  const long double gq = std::pow(static_cast<long double>(co.g), params.q);
  const long double g0 = std::pow(static_cast<long double>(co.g), e.h0);
  g.summed = static_cast<double>(s);
  g.finite_form = static_cast<double>(g0 * (1 - std::pow(gq, terms)) / (1 - gq));
  g.infinite_form = static_cast<double>(g0 / (1 - gq));
  g.truncation_bound = static_cast<double>(std::pow(static_cast<long double>(co.g), params.c * std::log(std::log(y)) * std::log(y)) / (1 - gq));
  return g;
}

double lower_limit(int q) { return std::max(2.0, std::exp(2.0 * q / euler_phi(q)) + 1.0); }

double integrand(const ConjectureParams& params, double y, const GapWeights& weights) {
  const Coefficients co = coefficients(y, params.q);
  const int h_cut = gap_cutoff(y, params.c);
  require_cover(weights, h_cut, params.n_max);
  long double sums[kMaxDepth + 1];
  gap_sums(co, h_cut, weights, params.n_max, sums);
  long double d = 0, zpow = 1;
  for (int n = 0; n <= params.n_max; ++n) {
    d += zpow * sums[n];
    zpow *= -static_cast<long double>(co.z);
  }
  const double L = std::log(y);
  const double phi = euler_phi(params.q);
  double m = params.q / (phi * L);
  if (params.prefactor == Prefactor::alpha_scaled) m /= co.alpha;
  const double eps = params.epsilon_override ? *params.epsilon_override
                                             : epsilon_q(params.q, params.a, params.b).value;
  return static_cast<double>(std::pow(co.alpha, eps) * m * m * d / params.q);
}

namespace {

struct Simpson {
  const std::function<double(double)>& f;
  int max_depth;
  long evaluations = 0;
  double err = 0;
  bool converged = true;

  double run(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    evaluations += 2;
    const double left = (m - a) / 6 * (fa + 4 * flm + fm);
    const double right = (b - m) / 6 * (fm + 4 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15 * tol || depth >= max_depth) {
      if (std::abs(delta) > 15 * tol) converged = false;
      err += std::abs(delta) / 15;
      return left + right + delta / 15;
    }
    return run(a, m, fa, flm, fm, left, tol / 2, depth + 1) + run(m, b, fm, frm, fb, right, tol / 2, depth + 1);
  }
};

}  // namespace

Prediction predict(const ConjectureParams& params, double x, const GapWeights& weights) {
  validate(params);
  if (!(x >= 100)) fail(ErrorKind::domain, "predict requires x >= 100");
  Prediction out;
  out.x = x;
  out.y0 = lower_limit(params.q);
  out.discarded_bound = primes::log_integral(out.y0).value;
  if (x <= out.y0) fail(ErrorKind::domain, "x must exceed the lower limit " + format_real(out.y0));
  require_cover(weights, gap_cutoff(x, params.c), params.n_max);

  // y = e^u, dy = e^u du
  const std::function<double(double)> f = [&](double u) {
    const double y = std::exp(u);
    return integrand(params, y, weights) * y;
  };
  const double u0 = std::log(out.y0), u1 = std::log(x);
  const int panels = std::max(1, static_cast<int>(std::ceil((u1 - u0) / params.quadrature.panel_width)));
  const double w = (u1 - u0) / panels;
  std::vector<double> fu(static_cast<std::size_t>(2 * panels + 1));
  for (std::size_t i = 0; i < fu.size(); ++i) fu[i] = f(i + 1 == fu.size() ? u1 : u0 + 0.5 * w * static_cast<double>(i));
  double coarse = 0;
  for (int p = 0; p < panels; ++p)
    coarse += w / 6 * (fu[2 * p] + 4 * fu[2 * p + 1] + fu[2 * p + 2]);
  const double tol = params.quadrature.target_relative * std::max(std::abs(coarse), 1e-300);

  Simpson s{f, params.quadrature.max_depth};
  s.evaluations = static_cast<long>(fu.size());
  double total = 0;
  for (int p = 0; p < panels; ++p) {
    const double a = u0 + w * p, b = p + 1 == panels ? u1 : u0 + w * (p + 1);
    const double whole = (b - a) / 6 * (fu[2 * p] + 4 * fu[2 * p + 1] + fu[2 * p + 2]);
    total += s.run(a, b, fu[2 * p], fu[2 * p + 1], fu[2 * p + 2], whole, tol / panels, 0);
  }
  out.predicted = total;
  out.err_estimate = s.err;
  out.evaluations = s.evaluations;
  if (!s.converged && s.err > tol)
    fail(ErrorKind::convergence, "quadrature did not converge; achieved error estimate " + format_real(s.err));
  return out;
}

Prediction predict(const ConjectureParams& params, double x, int workers) {
  validate(params);
  if (!(x >= 100)) fail(ErrorKind::domain, "predict requires x >= 100");
  const GapWeights w = cached_gap_weights(params.q, params.a, params.b, gap_cutoff(x, params.c),
                                          params.n_max, params.cutoff_target, workers);
  return predict(params, x, w);
}

double simplified_prediction(double x, bool same_residue) {
  if (!(x >= 10)) fail(ErrorKind::domain, "simplified prediction requires x >= 10");
  const double L = std::log(x);
  const double corr = std::log(2 * std::numbers::pi * L / 3) / (2 * L);
  return primes::log_integral(x).value / 4 * (same_residue ? 1 - corr : 1 + corr);
}

}  // namespace primepatterns::conjecture
