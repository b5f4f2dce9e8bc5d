#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <fstream>

#include "oracles.hpp"
#include "primepatterns/prime_engine.hpp"
#include "primepatterns/sampler.hpp"
#include "support.hpp"

using namespace primepatterns;
using namespace primepatterns::sampler;

namespace {

std::vector<FrequencyRecord> constant_grid(int b1, double f) {
  std::vector<FrequencyRecord> out;
  for (int beta = 1; beta <= b1; ++beta)
    for (std::uint64_t alpha = 1; alpha <= 9; ++alpha) {
      FrequencyRecord r;
      r.window = {alpha * static_cast<std::uint64_t>(std::llround(std::pow(10.0, beta))), 1000, 3, 2};
      for (int a : {1, 2})
        for (int b : {1, 2}) r.frequencies[{3, {a, b}}] = f;
      r.sigma = binomial_precision(1000);
      out.push_back(r);
    }
  return out;
}

double li(double x) { return primes::log_integral(x).value; }

}  // namespace

TEST_CASE("first 25 primes above 2") {
  const auto ps = oracle::primes_up_to(200);
  std::vector<std::uint64_t> window(ps.begin() + 1, ps.begin() + 26);
  REQUIRE(window.back() == 101);
  int r1 = 0, r2 = 0;
  for (auto p : window) {
    if (p % 3 == 1) ++r1;
    if (p % 3 == 2) ++r2;
  }
  REQUIRE(r1 == 11);
  REQUIRE(r2 == 13);

  auto coprime = sample_window({2, 25, 3, 1});
  CHECK(coprime.frequencies.at({3, {1}}) == doctest::Approx(11.0 / 24).epsilon(1e-15));
  CHECK(coprime.frequencies.at({3, {2}}) == doctest::Approx(13.0 / 24).epsilon(1e-15));
  CHECK(coprime.sigma == doctest::Approx(0.2).epsilon(1e-15));

  auto raw = sample_window({2, 25, 3, 1}, Denominator::raw);
  CHECK(raw.frequencies.at({3, {1}}) == doctest::Approx(11.0 / 25).epsilon(1e-15));
  CHECK(raw.frequencies.at({3, {2}}) == doctest::Approx(13.0 / 25).epsilon(1e-15));
}

TEST_CASE("window frequencies match exact counting over the same span") {
  const SampleWindow w{1000000, 100000, 10, 2};
  auto rec = sample_window(w);
  const auto ps = oracle::primes_up_to(3000000);
  auto first = std::upper_bound(ps.begin(), ps.end(), w.X);
  const std::uint64_t last = *(first + static_cast<long>(w.C) - 1);
  // pairs starting in (X, last) are those whose successor stays inside the window
  auto upto_last = primes::count_patterns(primes::Limit::up_to(last - 1), 10, 2);
  auto upto_x = primes::count_patterns(primes::Limit::up_to(w.X), 10, 2);
  const double pairs = static_cast<double>(upto_last.total_pairs - upto_x.total_pairs);
  double sum = 0;
  for (const auto& [key, f] : rec.frequencies) {
    const double exact = static_cast<double>(upto_last.counts.at(key) - upto_x.counts.at(key)) / pairs;
    CHECK(std::abs(f - exact) < 5 * rec.sigma);
    sum += f;
  }
  CHECK(std::abs(sum - 1) <= 1.0 / static_cast<double>(w.C));
}

TEST_CASE("frequencies sum to one with the coprime denominator") {
  for (int q : {3, 4, 5, 10})
    for (int k : {1, 2, 3}) {
      auto r = sample_window({1000, 5000, q, k});
      double s = 0;
      for (const auto& [key, f] : r.frequencies) s += f;
      CHECK(std::abs(s - 1) <= 1.0 / 5000);
      CHECK(r.sigma == doctest::Approx(1 / std::sqrt(5000.0)).epsilon(1e-15));
    }
}

TEST_CASE("sample_window validation") {
  CHECK(error_kind([] { sample_window({1, 100, 3, 2}); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { sample_window({2, 1, 3, 2}); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { sample_window({2, 100, 2, 2}); }) == ErrorKind::invalid_parameter);
  std::string msg;
  CHECK(error_kind([] { sample_window({1000000000, 10000000, 3, 2}, Denominator::coprime, 1, 1000000); }, &msg) ==
        ErrorKind::budget);
  CHECK(msg.find("span") != std::string::npos);
}

TEST_CASE("worker count does not change a window") {
  auto a = sample_window({123456789, 200000, 5, 3}, Denominator::coprime, 1);
  auto b = sample_window({123456789, 200000, 5, 3}, Denominator::coprime, 3);
  CHECK(a.frequencies == b.frequencies);
}

TEST_CASE("binomial precision") {
  CHECK(binomial_precision(100000000) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(binomial_precision(10000) == doctest::Approx(1e-2).epsilon(1e-15));
  CHECK(binomial_precision(1) == 1.0);
  CHECK(error_kind([] { binomial_precision(0); }) == ErrorKind::invalid_parameter);
}

TEST_CASE("stitch of constant frequencies") {
  for (int b1 : {2, 4, 6}) {
    const double phi = 0.37;
    auto grid = constant_grid(b1, phi);
    const double top = std::pow(10.0, b1 + 1);
    for (const auto& [k, v] : stitch(grid, b1).value) CHECK(std::abs(v - phi) <= 1e-12 * phi);
    const double closed = phi * (li(top) - li(10)) / li(9 * std::pow(10.0, b1));
    for (const auto& [k, v] : stitch(grid, b1, StitchDenominator::last_window_start).value)
      CHECK(std::abs(v - closed) <= 1e-12 * closed);
    for (const auto& [k, v] : stitch(constant_grid(b1, 0.0), b1).value) CHECK(v == 0.0);
  }
}

TEST_CASE("stitch is linear in the frequencies") {
  auto a = full_coverage_grid(4, 3, 2);
  auto b = constant_grid(4, 0.1);
  for (std::size_t i = 0; i < b.size(); ++i) {
    int j = 0;
    for (auto& [k, f] : b[i].frequencies) f = 0.05 * static_cast<double>((i * 7 + j++ * 3) % 11);
  }
  const double lambda = 0.3;
  auto mix = a;
  for (std::size_t i = 0; i < mix.size(); ++i)
    for (auto& [k, f] : mix[i].frequencies) f = lambda * a[i].frequencies.at(k) + (1 - lambda) * b[i].frequencies.at(k);
  auto sa = stitch(a, 4), sb = stitch(b, 4), sm = stitch(mix, 4);
  for (const auto& [k, v] : sm.value) CHECK(v == doctest::Approx(lambda * sa.value.at(k) + (1 - lambda) * sb.value.at(k)).epsilon(1e-13));
}

TEST_CASE("perturbing one window moves the stitch by at most its weight") {
  auto grid = full_coverage_grid(4, 3, 2);
  auto base = stitch(grid, 4);
  const double den = li(1e5) - li(10);
  double max_weight = 0;
  for (int beta = 1; beta <= 4; ++beta)
    for (int alpha = 1; alpha <= 9; ++alpha) {
      const double lo = alpha * std::pow(10.0, beta);
      max_weight = std::max(max_weight, li(lo + std::pow(10.0, beta)) - li(lo));
    }
  const double delta = 0.01;
  for (std::size_t i : {0u, 17u, 35u}) {
    auto moved = grid;
    for (auto& [k, f] : moved[i].frequencies) f += delta;
    for (const auto& [k, v] : stitch(moved, 4).value)
      CHECK(std::abs(v - base.value.at(k)) <= delta * max_weight / den * (1 + 1e-12));
  }
}

TEST_CASE("stitch reports missing windows") {
  auto grid = constant_grid(3, 0.25);
  grid.erase(grid.begin() + 11);  // X = 300
  std::string msg;
  CHECK(error_kind([&] { stitch(grid, 3); }, &msg) == ErrorKind::missing_window);
  CHECK(msg.find("3e2") != std::string::npos);
  CHECK(error_kind([&] { stitch({}, 3); }) == ErrorKind::missing_window);
  CHECK(error_kind([&] { stitch(constant_grid(2, 0.25), 3); }) == ErrorKind::missing_window);
}

TEST_CASE("full coverage windows match exact counts") {
  auto w = full_coverage_window(100, 200, 3, 1);
  const auto ps = oracle::primes_up_to(200);
  std::uint64_t n = 0, ones = 0;
  for (auto p : ps)
    if (p > 100) {
      ++n;
      if (p % 3 == 1) ++ones;
    }
  CHECK(w.window.C == n);
  CHECK(w.frequencies.at({3, {1}}) == doctest::Approx(static_cast<double>(ones) / static_cast<double>(n)).epsilon(1e-15));
}

TEST_CASE("stitched full coverage approaches the exact ratio") {
  for (int b1 : {5, 6}) {
    auto grid = full_coverage_grid(b1, 3, 2);
    auto est = stitch(grid, b1);
    const double xmax = 9 * std::pow(10.0, b1);
    auto exact = primes::count_patterns(primes::Limit::up_to(static_cast<std::uint64_t>(xmax)), 3, 2);
    const double den = li(10 * std::pow(10.0, b1)) - li(10);
    double var = 0;
    for (const auto& r : grid) {
      const double lo = static_cast<double>(r.window.X), step = std::pow(10.0, std::floor(std::log10(lo) + 1e-12));
      const double wgt = (li(lo + step) - li(lo)) / den;
      var += wgt * wgt / static_cast<double>(r.window.C);
    }
    for (const auto& [k, v] : est.value)
      CHECK(std::abs(v - static_cast<double>(exact.counts.at(k)) / static_cast<double>(exact.primes_in_limit)) <= 3 * std::sqrt(var));
  }
}

TEST_CASE("window records round trip") {
  oracle::TempDir dir("records");
  const auto file = dir.path / "w.csv";
  std::vector<FrequencyRecord> recs = {sample_window({1000, 2000, 5, 2}), sample_window({50000, 3000, 5, 2})};
  write_records(file, recs);
  auto back = read_records(file);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].window.X == recs[i].window.X);
    CHECK(back[i].window.C == recs[i].window.C);
    CHECK(back[i].frequencies == recs[i].frequencies);
    CHECK(back[i].sigma == recs[i].sigma);
  }
  std::ifstream in(file);
  std::string header;
  std::getline(in, header);
  CHECK(header == "X,C,q,k,pattern,frequency,sigma");

  std::ofstream(dir.path / "bad.csv") << "X,C,q,k,pattern,frequency,sigma\n1,2,3\n";
  CHECK(error_kind([&] { read_records(dir.path / "bad.csv"); }) == ErrorKind::io);
  CHECK(error_kind([&] { read_records(dir.path / "none.csv"); }) == ErrorKind::io);
}
