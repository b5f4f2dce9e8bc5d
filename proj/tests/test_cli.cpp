#include <doctest.h>

#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "primepatterns/cli.hpp"
#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "primepatterns");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = primepatterns::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

bool single_error_line(const Result& r, const std::string& kind) {
  return count_lines(r.err) == 1 && r.err.rfind("error: kind=" + kind + " code=" + std::to_string(r.code) + " message=", 0) == 0;
}

}  // namespace

TEST_CASE("count up to 50") {
  auto r = run({"count", "--q", "3", "--k", "2", "--x", "50"});
  CHECK(r.code == 0);
  CHECK(r.out ==
        "limit_type,limit,q,k,pattern,count\n"
        "x,50,3,2,1-1,1\n"
        "x,50,3,2,1-2,5\n"
        "x,50,3,2,2-1,5\n"
        "x,50,3,2,2-2,2\n");
}

TEST_CASE("count writes files and accepts scientific limits") {
  oracle::TempDir dir("cli_count");
  const auto file = (dir.path / "c.csv").string();
  CHECK(run({"count", "--q", "10", "--first-primes", "1e4", "--out", file}).code == 0);
  auto text = slurp(file);
  CHECK(text.rfind("limit_type,limit,q,k,pattern,count\n", 0) == 0);
  CHECK(count_lines(text) == 17);
  CHECK(text.find("first_primes,10000,10,2,9-1,") != std::string::npos);
}

TEST_CASE("usage and parameter errors") {
  auto r = run({"frobnicate"});
  CHECK(r.code == 14);
  CHECK(single_error_line(r, "unknown_subcommand"));

  r = run({});
  CHECK(r.code == 2);
  CHECK(single_error_line(r, "usage"));

  r = run({"count", "--q", "3", "--x", "50", "--first-primes", "10"});
  CHECK(r.code == 2);
  CHECK(single_error_line(r, "usage"));

  r = run({"count", "--q", "3", "--x", "50", "--bogus"});
  CHECK(r.code == 2);

  r = run({"count", "--q", "2", "--x", "50"});
  CHECK(r.code == 3);
  CHECK(single_error_line(r, "invalid_parameter"));

  r = run({"count", "--q", "3", "--x", "2.5"});
  CHECK(r.code == 3);

  r = run({"--workers", "0", "count", "--q", "3", "--x", "50"});
  CHECK(r.code == 2);

  r = run({"predict", "--q", "3", "--a", "1", "--b", "1", "--x", "50"});
  CHECK(r.code == 4);
  CHECK(single_error_line(r, "domain"));
}

TEST_CASE("I/O failures") {
  oracle::TempDir dir("cli_io");
  auto r = run({"count", "--q", "3", "--x", "50", "--out", (dir.path / "missing" / "c.csv").string()});
  CHECK(r.code == 7);
  CHECK(single_error_line(r, "io"));

  r = run({"residuals", "--counts", (dir.path / "nope.csv").string()});
  CHECK(r.code == 7);

  r = run({"stitch", "--grid-dir", (dir.path / "nope").string(), "--b1", "2"});
  CHECK(r.code == 7);
}

TEST_CASE("help documents the exit codes") {
  auto r = run({"--help"});
  CHECK(r.code == 0);
  for (const char* s : {"Exit codes", "14 unknown subcommand", "7  I/O failure", "11 missing sampling window", "PRIMEPATTERNS_TABLE_DIR"})
    CHECK(r.out.find(s) != std::string::npos);
  for (const char* s : {"count", "sample", "stitch", "series", "predict", "lemma4", "residuals", "fit", "plotdata"})
    CHECK(r.out.find(s) != std::string::npos);
}

TEST_CASE("series table of singletons") {
  oracle::TempDir dir("cli_series");
  auto r = run({"--table-dir", dir.path.string(), "series", "--q", "3", "--max-size", "1"});
  CHECK(r.code == 0);
  auto text = slurp(dir.path / "series_q3.jsonl");
  CHECK(text.find("{\"q\":3,\"set\":[],\"value\":\"1\"") != std::string::npos);
  CHECK(text.find("{\"q\":3,\"set\":[0],\"value\":\"0\"") != std::string::npos);
  CHECK(count_lines(text) == 2);
  CHECK(std::filesystem::exists(dir.path / "series_q3.meta.json"));
}

TEST_CASE("flags take precedence over the environment") {
  oracle::TempDir env_dir("cli_env"), flag_dir("cli_flag");
  const char* saved = std::getenv("PRIMEPATTERNS_TABLE_DIR");
  const std::string restore = saved ? saved : "";
  setenv("PRIMEPATTERNS_TABLE_DIR", env_dir.path.c_str(), 1);
  CHECK(run({"series", "--q", "5", "--max-size", "1"}).code == 0);
  CHECK(std::filesystem::exists(env_dir.path / "series_q5.jsonl"));
  CHECK(run({"--table-dir", flag_dir.path.string(), "series", "--q", "7", "--max-size", "1"}).code == 0);
  CHECK(std::filesystem::exists(flag_dir.path / "series_q7.jsonl"));
  CHECK_FALSE(std::filesystem::exists(env_dir.path / "series_q7.jsonl"));

  setenv("PRIMEPATTERNS_WORKERS", "0", 1);
  auto bad = run({"count", "--q", "3", "--x", "50"});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("PRIMEPATTERNS_WORKERS") != std::string::npos);
  setenv("PRIMEPATTERNS_WORKERS", "3", 1);
  CHECK(run({"count", "--q", "3", "--x", "50"}).code == 0);
  CHECK(run({"--workers", "2", "count", "--q", "3", "--x", "50"}).code == 0);
  unsetenv("PRIMEPATTERNS_WORKERS");
  if (saved)
    setenv("PRIMEPATTERNS_TABLE_DIR", restore.c_str(), 1);
  else
    unsetenv("PRIMEPATTERNS_TABLE_DIR");
}

TEST_CASE("count, predict, residuals, fit and plotdata pipeline") {
  oracle::TempDir dir("cli_pipe");
  auto p = [&](const char* name) { return (dir.path / name).string(); };
  REQUIRE(run({"count", "--q", "3", "--x-grid", "1e3:1e6:12", "--out", p("counts.csv")}).code == 0);
  REQUIRE(run({"predict", "--q", "3", "--a", "1", "--b", "2", "--x", "1e6"}).code == 0);
  auto pred = run({"predict", "--q", "3", "--a", "1", "--b", "2", "--x-grid", "1e3:1e6:12", "--out", p("pred.csv")});
  REQUIRE(pred.code == 0);
  CHECK(slurp(p("pred.csv")).rfind("x,q,a,b,nmax,predicted,err_estimate\n", 0) == 0);
  CHECK(count_lines(slurp(p("pred.csv"))) == 13);

  auto r = run({"residuals", "--counts", p("counts.csv"), "--pattern", "1-2", "--predictions", p("pred.csv"), "--out", p("res.csv")});
  CHECK(r.code == 0);
  auto direct = run({"residuals", "--counts", p("counts.csv"), "--pattern", "1-2", "--model", "conjecture", "--out", p("res2.csv")});
  CHECK(direct.code == 0);
  CHECK(slurp(p("res.csv")) == slurp(p("res2.csv")));

  CHECK(run({"residuals", "--counts", p("counts.csv"), "--pattern", "1-1", "--out", p("eq19.csv")}).code == 0);
  auto fit = run({"fit", "--residuals", p("eq19.csv")});
  CHECK(fit.code == 0);
  CHECK(fit.out.rfind("coefficient,basis,rms_before,rms_after,standard_error\n", 0) == 0);

  auto plot = run({"plotdata", "--residuals", p("eq19.csv"), "--kind", "residual-after-fit"});
  CHECK(plot.code == 0);
  CHECK(plot.out.rfind("x,value\n", 0) == 0);
  CHECK(count_lines(plot.out) == 13);

  auto wrong = run({"residuals", "--counts", p("counts.csv"), "--pattern", "1-1", "--predictions", p("pred.csv")});
  CHECK(wrong.code == 12);
}

TEST_CASE("sample and stitch") {
  oracle::TempDir dir("cli_stitch");
  const auto grid = dir.path / "grid";
  auto r = run({"sample", "--q", "3", "--full-coverage-b1", "3", "--out-dir", grid.string()});
  REQUIRE(r.code == 0);
  auto s = run({"stitch", "--grid-dir", grid.string(), "--b1", "3"});
  CHECK(s.code == 0);
  CHECK(s.out.rfind("b1,q,pattern,estimate\n", 0) == 0);
  CHECK(count_lines(s.out) == 5);
  auto alt = run({"stitch", "--grid-dir", grid.string(), "--b1", "3", "--last-window-denominator"});
  CHECK(alt.code == 0);
  CHECK(alt.out != s.out);

  std::filesystem::remove(grid / "window_500.csv");
  auto missing = run({"stitch", "--grid-dir", grid.string(), "--b1", "3"});
  CHECK(missing.code == 11);
  CHECK(single_error_line(missing, "missing_window"));
  CHECK(missing.err.find("5e2") != std::string::npos);

  auto one = run({"sample", "--x", "2", "--c", "25", "--q", "3", "--k", "1", "--raw-denominator"});
  CHECK(one.code == 0);
  CHECK(one.out ==
        "X,C,q,k,pattern,frequency,sigma\n"
        "2,25,3,1,1,0.44,0.20000000000000001\n"
        "2,25,3,1,2,0.52000000000000002,0.20000000000000001\n");
}

TEST_CASE("identity discrepancy matrix subcommand") {
  auto r = run({"lemma4", "--q", "3", "--hmax", "5", "--ellmax", "2", "--form", "corrected"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("q,a,h,ell,b_discrepancy,c_discrepancy,d_discrepancy,max_discrepancy\n", 0) == 0);
  CHECK(count_lines(r.out) == 1 + 2 * 3 * 2);
}

TEST_CASE("outputs do not depend on workers or reruns") {
  const std::vector<std::vector<std::string>> cmds = {
      {"count", "--q", "5", "--k", "3", "--x-grid", "1e3:3e6:7"},
      {"predict", "--q", "3", "--a", "2", "--b", "1", "--x", "1e5", "--x", "1e7"},
      {"lemma4", "--q", "5", "--hmax", "6", "--ellmax", "2"},
      {"sample", "--x", "1e9", "--c", "1e5", "--q", "10"},
  };
  for (const auto& cmd : cmds) {
    auto base = cmd;
    base.insert(base.begin(), {"--workers", "1"});
    auto par = cmd;
    par.insert(par.begin(), {"--workers", "3"});
    auto a = run(base), b = run(par), c = run(base);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
  }
}

TEST_CASE("count parsing and number formatting") {
  using primepatterns::parse_count;
  CHECK(parse_count("50") == 50);
  CHECK(parse_count("1e8") == 100000000);
  CHECK(parse_count("2.5e3") == 2500);
  CHECK(parse_count("18446744073709551615") == 18446744073709551615ULL);
  for (const char* bad : {"", "-3", "2.5", "1e100", "x", "12a"})
    CHECK_THROWS_AS(parse_count(bad), primepatterns::Error);

  using primepatterns::format_real;
  CHECK(format_real(0.0) == "0");
  CHECK(format_real(0.2) == "0.20000000000000001");
  CHECK(format_real(1e-4) == "0.0001");
  CHECK(std::stod(format_real(1.0 / 3)) == 1.0 / 3);
}
