#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "oracles.hpp"
#include "primepatterns/singular_series.hpp"
#include "support.hpp"

using namespace primepatterns;
using series::TupleSet;

namespace {

// Plain Euler product over p < P in long double, no tail treatment.
long double euler_product(const TupleSet& h, int q, std::uint64_t P) {
  long double v = 1;
  for (std::uint64_t p : oracle::primes_up_to(P)) {
    if (q % static_cast<int>(p) == 0) continue;
    std::vector<bool> seen(p, false);
    int nu = 0;
    for (int t : h)
      if (!seen[static_cast<std::uint64_t>(t) % p]) {
        seen[static_cast<std::uint64_t>(t) % p] = true;
        ++nu;
      }
    const long double pl = static_cast<long double>(p);
    v *= (1 - nu / pl) / std::pow(1 - 1 / pl, static_cast<long double>(h.size()));
  }
  return v;
}

TupleSet random_set(std::mt19937_64& rng, int size, int max_elem) {
  std::set<int> s;
  while (static_cast<int>(s.size()) < size) s.insert(static_cast<int>(rng() % (max_elem + 1)));
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("residue_count") {
  CHECK(series::residue_count({0, 2}, 2) == 1);
  CHECK(series::residue_count({0, 2}, 3) == 2);
  CHECK(series::residue_count({0, 2, 6}, 3) == 2);
  CHECK(series::residue_count({0, 1, 2, 3, 4}, 3) == 3);
  CHECK(error_kind([] { series::residue_count({0, 2}, 4); }) == ErrorKind::invalid_parameter);
}

TEST_CASE("set validation") {
  CHECK(error_kind([] { series::validate_set({2, 1}); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { series::validate_set({1, 1}); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { series::validate_set({-1, 3}); }) == ErrorKind::invalid_parameter);
  CHECK(series::canonical({4, 7, 10}) == TupleSet{0, 3, 6});
}

TEST_CASE("singular_series basic values") {
  auto e = series::singular_series({}, 1);
  CHECK(e.value == 1.0);
  CHECK(e.kind == series::SeriesKind::plain);
  for (int q : {1, 3, 10}) CHECK(series::singular_series({17}, q).value == 1.0);

  auto v = series::singular_series({0, 1}, 1);
  CHECK(v.value == 0.0);
  CHECK(v.tail_bound == 0.0);
  // 3 divides q, so p=3 cannot vanish the product; p=2 still does
  CHECK(series::singular_series({0, 1}, 3).value == 0.0);
  CHECK(series::singular_series({0, 2, 4}, 1).value == 0.0);
  CHECK(series::singular_series({0, 2, 4}, 3).value > 0.0);

  CHECK(error_kind([] { series::singular_series({0, 2}, 1, 0.0); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { series::singular_series({0, 2}, 1, -1.0); }) == ErrorKind::invalid_parameter);
}

TEST_CASE("twin prime constant against the Euler product oracle") {
  const long double expect = oracle::twin_constant();
  CHECK(std::abs(expect - 1.3203236L) < 1e-7L);
  auto v = series::singular_series({0, 2}, 1);
  CHECK(std::abs(static_cast<long double>(v.value) - expect) < 1e-6L);
  CHECK(v.tail_bound > 0);
  CHECK(v.tail_bound <= series::kDefaultCutoffTarget);
  CHECK(v.prime_cutoff >= 100);
}

TEST_CASE("modulus-restricted series against a direct product") {
  // The tail beyond 1e6 moves these by well under 1e-6.
  for (int q : {3, 5, 10})
    for (const TupleSet& h : {TupleSet{0, 2}, TupleSet{0, 4, 6}, TupleSet{0, 6, 12, 30}}) {
      auto v = series::singular_series(h, q);
      const long double ref = euler_product(h, q, 1000000);
      CHECK(std::abs(static_cast<long double>(v.value) - ref) / ref < 1e-5L);
    }
}

TEST_CASE("zeroed_series values") {
  for (int q : {1, 3, 7}) {
    CHECK(series::zeroed_series({}, q).value == 1.0);
    CHECK(series::zeroed_series({5}, q).value == 0.0);
  }
  // S({0,2}) - 2 + 1 with S from the oracle
  const double expect = static_cast<double>(oracle::twin_constant()) - 1.0;
  auto z = series::zeroed_series({0, 2}, 1);
  CHECK(z.kind == series::SeriesKind::zeroed);
  CHECK(std::abs(z.value - expect) < 1e-6);
  CHECK(z.tail_bound >= series::singular_series({0, 2}, 1).tail_bound);

  std::string msg;
  CHECK(error_kind([] { series::zeroed_series({0, 1, 2, 3, 4, 5, 6, 7}, 3); }, &msg) == ErrorKind::size);
  CHECK(msg.find("2^7") != std::string::npos);
}

TEST_CASE("translation invariance is bit-exact") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 150; ++i) {
    const int q = std::array{1, 3, 4, 5}[rng() % 4];
    auto h = random_set(rng, 1 + static_cast<int>(rng() % 5), 120);
    const int s = static_cast<int>(rng() % 40);
    TupleSet moved = h, mirrored;
    for (int& v : moved) v += s;
    for (auto it = h.rbegin(); it != h.rend(); ++it) mirrored.push_back(h.back() - *it);
    const auto base = series::zeroed_series(h, q).value;
    CHECK(series::zeroed_series(moved, q).value == base);
    CHECK(series::zeroed_series(series::canonical(h), q).value == base);
    CHECK(series::zeroed_series(mirrored, q).value == base);
    CHECK(series::singular_series(moved, q).value == series::singular_series(h, q).value);
  }
}

TEST_CASE("plain series is non-negative") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto h = random_set(rng, 1 + static_cast<int>(rng() % 7), 150);
    CHECK(series::singular_series(h, std::array{1, 3, 5, 6}[rng() % 4]).value >= 0.0);
  }
}

TEST_CASE("a longer prime cutoff moves the value by less than the tail bound") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i) {
    auto h = random_set(rng, 2 + static_cast<int>(rng() % 4), 150);
    const int q = std::array{1, 3, 5}[rng() % 3];
    auto coarse = series::singular_series(h, q, 1e-6);
    auto fine = series::singular_series(h, q, 1e-10);
    CHECK(fine.prime_cutoff >= 2 * coarse.prime_cutoff);
    CHECK(std::abs(fine.value - coarse.value) <= coarse.tail_bound * std::max(1.0, coarse.value));
  }
}

TEST_CASE("summing zeroed values over subsets recovers the plain value") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 60; ++i) {
    const int size = 1 + static_cast<int>(i % 4);
    auto h = random_set(rng, size, 40);
    const int q = std::array{1, 3, 5}[rng() % 3];
    long double sum = 0;
    for (unsigned mask = 0; mask < (1u << size); ++mask) {
      TupleSet t;
      for (int j = 0; j < size; ++j)
        if (mask >> j & 1) t.push_back(h[static_cast<std::size_t>(j)]);
      sum += series::zeroed_series(t, q).value;
    }
    CHECK(std::abs(static_cast<double>(sum) - series::singular_series(h, q).value) < 1e-12);
  }
}

TEST_CASE("build_table small cases") {
  auto t1 = series::build_table(3, 1, 150);
  CHECK(t1.value({}) == 1.0);
  std::size_t singles = 0;
  t1.for_each([&](const TupleSet& s, double v, double, std::uint64_t) {
    if (s.size() == 1) {
      ++singles;
      CHECK(v == 0.0);
    }
  });
  CHECK(singles == 1);  // only {0} is canonical
  CHECK(t1.value({42}) == 0.0);

  auto t2 = series::build_table(3, 2, 10);
  CHECK(t2.size() == 1 + 1 + 10);
  CHECK(t2.value({3, 6}) == t2.value({0, 3}));
  for (int t = 1; t <= 10; ++t) CHECK(t2.value({0, t}) == series::zeroed_series({0, t}, 3).value);

  std::string msg;
  CHECK(error_kind([&] { t2.at({0, 11}); }, &msg) == ErrorKind::cache_miss);
  CHECK(msg.find("0,11") != std::string::npos);
  CHECK_FALSE(t2.covers({0, 1, 2}));
}

TEST_CASE("every table entry matches recomputation") {
  auto t = series::build_table(5, 3, 20, series::kDefaultCutoffTarget, 2);
  std::size_t n = 0;
  t.for_each([&](const TupleSet& s, double v, double tail, std::uint64_t) {
    auto z = series::zeroed_series(s, 5);
    CHECK(v == z.value);
    CHECK(tail >= 0);
    ++n;
  });
  CHECK(n == t.size());
  CHECK(n == 1 + 1 + 20 + 190);
}

TEST_CASE("table persistence round trip") {
  oracle::TempDir dir("table");
  auto t = series::build_table(3, 3, 12);
  t.save(dir.path);
  const auto file = series::SeriesTable::file_for(dir.path, 3);
  REQUIRE(std::filesystem::exists(file));

  std::ifstream in(file);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("q").get<int>() == 3);
    auto set = j.at("set").get<TupleSet>();
    if (!set.empty()) CHECK(set.front() == 0);
    CHECK(j.at("value").is_string());
    CHECK(j.at("tail_bound").is_string());
    CHECK(j.at("prime_cutoff").is_number_unsigned());
    ++lines;
  }
  CHECK(lines == t.size());

  auto back = series::SeriesTable::load(dir.path, 3);
  CHECK(back.size() == t.size());
  CHECK(back.max_size() == 3);
  CHECK(back.max_elem() == 12);
  t.for_each([&](const TupleSet& s, double v, double tail, std::uint64_t cut) {
    auto e = back.at(s);
    CHECK(e.value == v);
    CHECK(e.tail_bound == tail);
    CHECK(e.prime_cutoff == cut);
  });

  CHECK(error_kind([&] { series::SeriesTable::load(dir.path, 5); }) == ErrorKind::cache_miss);

  auto again = series::ensure_table(dir.path, 3, 3, 12);
  CHECK(again.built_at() == back.built_at());
}

TEST_CASE("unwritable cache directory") {
  oracle::TempDir dir("blocked");
  const auto blocker = dir.path / "file";
  std::ofstream(blocker) << "x";
  auto t = series::build_table(3, 1, 5);
  std::string msg;
  CHECK(error_kind([&] { t.save(blocker / "sub"); }, &msg) == ErrorKind::io);
  CHECK(msg.find(blocker.string()) != std::string::npos);
}

TEST_CASE("normal moments") {
  CHECK(series::normal_moment(1) == 0.0);
  CHECK(series::normal_moment(3) == 0.0);
  CHECK(series::normal_moment(2) == 1.0);
  CHECK(series::normal_moment(4) == 3.0);
}

TEST_CASE("ms_average") {
  auto a = series::ms_average(5, 1, 1, -0.5);
  CHECK(a.lhs == 0.0);
  CHECK(a.model == 0.0);

  auto b = series::ms_average(3, 2, 1, -0.5);
  const double expect =
      series::zeroed_series({1, 2}, 1).value + series::zeroed_series({1, 3}, 1).value + series::zeroed_series({2, 3}, 1).value;
  CHECK(b.lhs == doctest::Approx(expect).epsilon(1e-14));

  CHECK(error_kind([] { series::ms_average(5, 0, 1, 0); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { series::ms_average(2, 3, 1, 0); }) == ErrorKind::invalid_parameter);
  CHECK(error_kind([] { series::ms_average(1000, 4, 1, 0); }) == ErrorKind::budget);
}

TEST_CASE("fitted average-order constant lies in (-1, 0)") {
  auto fit = series::fit_ms_constant(1, 2, 20, 60);
  CHECK(fit.A > -1);
  CHECK(fit.A < 0);
  auto at40 = series::ms_average(40, 2, 1, fit.A);
  CHECK(std::abs(at40.lhs - at40.model) < 0.1 * std::abs(at40.lhs) + 1.0);
}
