#include "primepatterns/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "primepatterns/analysis.hpp"
#include "primepatterns/conjecture.hpp"
#include "primepatterns/error.hpp"
#include "primepatterns/prime_engine.hpp"
#include "primepatterns/sampler.hpp"
#include "primepatterns/singular_series.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::cli {

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitUnknownSubcommand = 14;

const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  invalid flags or usage\n"
    "  3  invalid parameter\n"
    "  4  domain error\n"
    "  5  budget or capacity exceeded\n"
    "  6  cache miss (table or gap weights do not cover the request)\n"
    "  7  I/O failure\n"
    "  8  unit mismatch\n"
    "  9  singular fit\n"
    "  10 quadrature did not converge\n"
    "  11 missing sampling window\n"
    "  12 empty input\n"
    "  13 set size over the 2^7 subset budget\n"
    "  14 unknown subcommand\n"
    "Errors are printed as one line: error: kind=<name> code=<n> message=<text>\n"
    "Environment: PRIMEPATTERNS_TABLE_DIR, PRIMEPATTERNS_WORKERS (flags take precedence).";

void print_error(std::ostream& err, std::string_view kind, int code, std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  err << "error: kind=" << kind << " code=" << code << " message=" << message << '\n';
}

// Output goes to a file when given, else to the stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) fail(ErrorKind::io, "cannot write " + path);
      stream_ = &file_;
    }
  }
  ~Sink() = default;
  std::ostream& operator*() { return *stream_; }
  void finish(const std::string& path) {
    stream_->flush();
    if (!*stream_) fail(ErrorKind::io, "cannot write " + (path.empty() ? std::string("output") : path));
  }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

double parse_real(const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorKind::invalid_parameter, "not a number: '" + text + "'");
  }
}

std::vector<int> parse_pattern(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, '-')) out.push_back(std::stoi(part));
  } catch (const std::logic_error&) {
    fail(ErrorKind::invalid_parameter, "bad pattern '" + text + "'; expected residues joined by '-'");
  }
  return out;
}

// "lo:hi:n" -> n log-spaced integers from lo to hi inclusive
std::vector<std::uint64_t> parse_grid(const std::string& text) {
  auto a = text.find(':'), b = text.rfind(':');
  if (a == std::string::npos || a == b) fail(ErrorKind::invalid_parameter, "grid must look like lo:hi:n");
  const double lo = parse_real(text.substr(0, a)), hi = parse_real(text.substr(a + 1, b - a - 1));
  const auto n = parse_count(text.substr(b + 1));
  if (!(lo >= 2) || !(hi > lo) || n < 2) fail(ErrorKind::invalid_parameter, "grid needs 2 <= lo < hi and n >= 2");
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    double x = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1));
    auto v = static_cast<std::uint64_t>(std::llround(x));
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

// predict CSV -> x -> predicted count, for the pattern being analysed
std::map<double, double> read_predictions(const std::string& path, const analysis::ObservedSeries& observed) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "x,q,a,b,nmax,predicted,err_estimate")
    fail(ErrorKind::io, "unexpected header in " + path);
  std::map<double, double> out;
  try {
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, ',');) f.push_back(part);
    if (f.size() != 7) fail(ErrorKind::io, "malformed row in " + path);
    if (std::stoi(f[1]) != observed.q || observed.pattern.size() != 2 || std::stoi(f[2]) != observed.pattern[0] ||
        std::stoi(f[3]) != observed.pattern[1])
      continue;
    out[parse_real(f[0])] = parse_real(f[5]);
  }
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "malformed row in " + path);
  }
  if (out.empty()) fail(ErrorKind::empty_input, "no predictions for the requested pattern in " + path);
  return out;
}

std::filesystem::path table_dir_or_default(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (auto d = series::cache_dir()) return *d;
  return ".primepatterns-cache";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Consecutive prime patterns modulo q: counting, singular series, conjectural integrals, sampling"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  int workers = 1;
  std::string table_dir;
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (>= 1, env PRIMEPATTERNS_WORKERS)")->check(CLI::PositiveNumber);
  app.add_option("--table-dir", table_dir, "cache directory for series tables and gap weights")
      ->envname("PRIMEPATTERNS_TABLE_DIR");

  // count
  auto* count = app.add_subcommand("count", "count consecutive prime patterns modulo q");
  int c_q = 0, c_k = 2;
  std::string c_x, c_first, c_grid, c_out;
  count->add_option("--q", c_q, "modulus (>= 3)")->required();
  count->add_option("--k", c_k, "pattern length in [1,4]");
  auto* ox = count->add_option("--x", c_x, "count starting primes p_n <= x");
  auto* of = count->add_option("--first-primes", c_first, "count among the first N primes");
  auto* og = count->add_option("--x-grid", c_grid, "lo:hi:n log-spaced x limits in one pass");
  ox->excludes(of)->excludes(og);
  of->excludes(og);
  count->add_option("--out", c_out, "output CSV (default stdout)");

  // sample
  auto* sample = app.add_subcommand("sample", "pattern frequencies among the first C primes above X");
  std::string s_x, s_c = "1e6", s_out, s_outdir;
  int s_q = 3, s_k = 2, s_b1 = 0;
  bool s_raw = false;
  sample->add_option("--x", s_x, "window start X");
  sample->add_option("--c", s_c, "primes per window");
  sample->add_option("--q", s_q, "modulus");
  sample->add_option("--k", s_k, "pattern length");
  sample->add_flag("--raw-denominator", s_raw, "divide by C - k + 1 instead of the coprime window count");
  sample->add_option("--full-coverage-b1", s_b1, "write the exact-coverage grid X = a*10^b, b <= b1, to --out-dir");
  sample->add_option("--out", s_out, "output CSV for a single window (default stdout)");
  sample->add_option("--out-dir", s_outdir, "directory for grid windows");

  // stitch
  auto* stitch = app.add_subcommand("stitch", "combine a window grid into a ratio estimate");
  std::string st_dir, st_out;
  int st_b1 = 0;
  bool st_last = false;
  stitch->add_option("--grid-dir", st_dir, "directory of window CSV files")->required();
  stitch->add_option("--b1", st_b1, "top decade exponent")->required();
  stitch->add_flag("--last-window-denominator", st_last,
                   "divide by li(9*10^b1) instead of li(10^(b1+1)) - li(10)");
  stitch->add_option("--out", st_out, "output CSV (default stdout)");

  // series
  auto* ser = app.add_subcommand("series", "build the zeroed singular series table");
  int se_q = 3, se_size = 5, se_elem = 150;
  ser->add_option("--q", se_q, "modulus (1 for the unrestricted series)");
  ser->add_option("--max-size", se_size, "largest set size");
  ser->add_option("--max-elem", se_elem, "largest element of a canonical set");

  // predict
  auto* pred = app.add_subcommand("predict", "evaluate the conjectural integral for pi(x; q, (a,b))");
  int p_q = 3, p_a = 1, p_b = 1, p_nmax = conjecture::kMaxDepth;
  double p_c = 4.0, p_target = 1e-6;
  std::vector<std::string> p_x;
  std::string p_grid, p_out, p_eps;
  bool p_alpha = false;
  pred->add_option("--q", p_q, "modulus");
  pred->add_option("--a", p_a, "first residue");
  pred->add_option("--b", p_b, "second residue");
  auto* px = pred->add_option("--x", p_x, "one or more x values");
  auto* pg = pred->add_option("--x-grid", p_grid, "lo:hi:n log-spaced x values");
  px->excludes(pg);
  pred->add_option("--nmax", p_nmax, "truncation depth in [0,5]");
  pred->add_option("--c", p_c, "gap cutoff constant");
  pred->add_option("--target", p_target, "quadrature relative error target");
  pred->add_option("--epsilon", p_eps, "override the exponent of alpha");
  pred->add_flag("--alpha-prefactor", p_alpha, "use (q/(phi alpha log y))^2 instead of (q/(phi log y))^2");
  pred->add_option("--out", p_out, "output CSV (default stdout)");

  // lemma4
  auto* l4 = app.add_subcommand("lemma4", "discrepancies of the subset-sum telescoping identities");
  int l_q = 3, l_hmax = 12, l_ellmax = 3;
  std::string l_form = "as-stated", l_out;
  l4->add_option("--q", l_q, "modulus");
  l4->add_option("--hmax", l_hmax, "largest h");
  l4->add_option("--ellmax", l_ellmax, "largest ell");
  l4->add_option("--form", l_form, "as-stated | corrected")->check(CLI::IsMember({"as-stated", "corrected"}));
  l4->add_option("--out", l_out, "output CSV (default stdout)");

  // residuals
  auto* res = app.add_subcommand("residuals", "observed minus model for one pattern");
  std::string r_counts, r_pattern = "1-1", r_model = "eq19", r_mode = "ratio", r_pred, r_out;
  res->add_option("--counts", r_counts, "count CSV with x limits")->required();
  res->add_option("--pattern", r_pattern, "pattern such as 1-1");
  res->add_option("--model", r_model, "eq19 | conjecture")->check(CLI::IsMember({"eq19", "conjecture"}));
  res->add_option("--predictions", r_pred, "predict CSV used as the model instead of --model");
  res->add_option("--mode", r_mode, "ratio | count")->check(CLI::IsMember({"ratio", "count"}));
  res->add_option("--out", r_out, "output CSV (default stdout)");

  // fit
  auto* fit = app.add_subcommand("fit", "fit c (loglog x)^2/(log x)^2 to residuals");
  std::string f_res, f_out;
  bool f_count = false;
  fit->add_option("--residuals", f_res, "residual CSV")->required();
  fit->add_flag("--count-space", f_count, "residuals are counts; basis is multiplied by li(x)");
  fit->add_option("--out", f_out, "output CSV (default stdout)");

  // plotdata
  auto* plot = app.add_subcommand("plotdata", "two-column plot data from residuals");
  std::string pl_res, pl_kind = "residual", pl_out;
  bool pl_count = false;
  plot->add_option("--residuals", pl_res, "residual CSV")->required();
  plot->add_option("--kind", pl_kind, "proportion | residual | residual-after-fit")
      ->check(CLI::IsMember({"proportion", "residual", "residual-after-fit"}));
  plot->add_flag("--count-space", pl_count, "residuals are counts");
  plot->add_option("--out", pl_out, "output CSV (default stdout)");

  if (argc >= 2) {
    std::string first = argv[1];
    std::set<std::string> known;
    for (auto* s : app.get_subcommands({})) known.insert(s->get_name());
    if (!first.empty() && first[0] != '-' && !known.count(first)) {
      print_error(err, "unknown_subcommand", kExitUnknownSubcommand, "unknown subcommand '" + first + "'");
      return kExitUnknownSubcommand;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", kExitUsage, e.what());
    return kExitUsage;
  }

  try {
    if (workers_opt->count() == 0) workers = default_workers();
    if (workers < 1) fail(ErrorKind::invalid_parameter, "worker count must be >= 1");
    series::set_workers(workers);
    if (!table_dir.empty()) series::set_cache_dir(std::filesystem::path(table_dir));

    if (count->parsed()) {
      std::vector<primes::PatternCounts> rows;
      if (!c_grid.empty()) {
        rows = primes::count_patterns_grid(primes::LimitMode::x_bound, parse_grid(c_grid), c_q, c_k, workers);
      } else if (!c_x.empty()) {
        rows.push_back(primes::count_patterns(primes::Limit::up_to(parse_count(c_x)), c_q, c_k, workers));
      } else if (!c_first.empty()) {
        rows.push_back(primes::count_patterns(primes::Limit::first(parse_count(c_first)), c_q, c_k, workers));
      } else {
        fail(ErrorKind::invalid_parameter, "count needs one of --x, --first-primes, --x-grid");
      }
      if (c_out.empty()) {
        out << "limit_type,limit,q,k,pattern,count\n";
        for (const auto& c : rows)
          for (const auto& [key, n] : c.counts)
            out << c.limit.type_name() << ',' << c.limit.value << ',' << c.q << ',' << c.k << ',' << key.label() << ','
                << n << '\n';
      } else {
        analysis::write_counts(c_out, rows);
      }
    } else if (sample->parsed()) {
      const auto mode = s_raw ? sampler::Denominator::raw : sampler::Denominator::coprime;
      if (s_b1 > 0) {
        if (s_outdir.empty()) fail(ErrorKind::invalid_parameter, "--full-coverage-b1 needs --out-dir");
        std::filesystem::create_directories(s_outdir);
        for (const auto& r : sampler::full_coverage_grid(s_b1, s_q, s_k, mode, workers))
          sampler::write_records(std::filesystem::path(s_outdir) / ("window_" + std::to_string(r.window.X) + ".csv"), {r});
      } else {
        if (s_x.empty()) fail(ErrorKind::invalid_parameter, "sample needs --x or --full-coverage-b1");
        auto r = sampler::sample_window({parse_count(s_x), parse_count(s_c), s_q, s_k}, mode, workers);
        if (s_out.empty()) {
          auto tmp = std::filesystem::temp_directory_path() / "primepatterns_window.csv";
          sampler::write_records(tmp, {r});
          std::ifstream in(tmp);
          out << in.rdbuf();
          std::filesystem::remove(tmp);
        } else {
          sampler::write_records(s_out, {r});
        }
      }
    } else if (stitch->parsed()) {
      std::vector<sampler::FrequencyRecord> records;
      std::vector<std::filesystem::path> files;
      if (!std::filesystem::is_directory(st_dir)) fail(ErrorKind::io, "grid directory " + st_dir + " not found");
      for (const auto& e : std::filesystem::directory_iterator(st_dir))
        if (e.path().extension() == ".csv") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files)
        for (auto& r : sampler::read_records(f)) records.push_back(std::move(r));
      auto est = sampler::stitch(records, st_b1,
                                 st_last ? sampler::StitchDenominator::last_window_start : sampler::StitchDenominator::telescoped);
      Sink sink(st_out, out);
      *sink << "b1,q,pattern,estimate\n";
      for (const auto& [key, v] : est.value) *sink << est.b1 << ',' << est.q << ',' << key.label() << ',' << format_real(v) << '\n';
      sink.finish(st_out);
    } else if (ser->parsed()) {
      const auto dir = table_dir_or_default(table_dir);
      auto t = series::build_table(se_q, se_size, se_elem, series::kDefaultCutoffTarget, workers);
      t.save(dir);
      out << "table=" << series::SeriesTable::file_for(dir, se_q).string() << " entries=" << t.size() << '\n';
    } else if (pred->parsed()) {
      conjecture::ConjectureParams params;
      params.q = p_q;
      params.a = p_a;
      params.b = p_b;
      params.n_max = p_nmax;
      params.c = p_c;
      params.quadrature.target_relative = p_target;
      params.prefactor = p_alpha ? conjecture::Prefactor::alpha_scaled : conjecture::Prefactor::normalized;
      if (!p_eps.empty()) params.epsilon_override = parse_real(p_eps);
      conjecture::validate(params);
      std::vector<double> xs;
      if (!p_grid.empty())
        for (auto v : parse_grid(p_grid)) xs.push_back(static_cast<double>(v));
      for (const auto& s : p_x) xs.push_back(parse_real(s));
      if (xs.empty()) fail(ErrorKind::invalid_parameter, "predict needs --x or --x-grid");
      for (double x : xs)
        if (!(x >= 100)) fail(ErrorKind::domain, "predict requires x >= 100");
      series::set_cache_dir(table_dir_or_default(table_dir));
      const auto weights = conjecture::cached_gap_weights(
          p_q, p_a, p_b, conjecture::gap_cutoff(*std::max_element(xs.begin(), xs.end()), p_c), p_nmax,
          params.cutoff_target, workers);
      Sink sink(p_out, out);
      *sink << "x,q,a,b,nmax,predicted,err_estimate\n";
      for (double x : xs) {
        auto r = conjecture::predict(params, x, weights);
        *sink << format_real(x) << ',' << p_q << ',' << p_a << ',' << p_b << ',' << p_nmax << ','
              << format_real(r.predicted) << ',' << format_real(r.err_estimate) << '\n';
      }
      sink.finish(p_out);
    } else if (l4->parsed()) {
      if (l_hmax < 3 || l_ellmax < 1) fail(ErrorKind::invalid_parameter, "lemma4 needs hmax >= 3 and ellmax >= 1");
      auto table = series::build_table(l_q, l_ellmax + 2 > 7 ? 7 : l_ellmax + 2, l_hmax, series::kDefaultCutoffTarget, workers);
      const auto form = l_form == "corrected" ? conjecture::Lemma4Form::corrected : conjecture::Lemma4Form::as_stated;
      Sink sink(l_out, out);
      *sink << "q,a,h,ell,b_discrepancy,c_discrepancy,d_discrepancy,max_discrepancy\n";
      for (int a : primes::reduced_residues(l_q))
        for (int h = 3; h <= l_hmax; ++h)
          for (int ell = 1; ell <= l_ellmax; ++ell) {
            auto r = conjecture::lemma4_check(h, ell, l_q, a, table, form);
            *sink << l_q << ',' << a << ',' << h << ',' << ell << ',' << format_real(r.b_discrepancy) << ','
                  << format_real(r.c_discrepancy) << ',' << format_real(r.d_discrepancy) << ','
                  << format_real(r.max_discrepancy()) << '\n';
          }
      sink.finish(l_out);
    } else if (res->parsed()) {
      auto counts = analysis::read_counts(r_counts);
      auto observed = analysis::observed_from_counts(counts, parse_pattern(r_pattern));
      const auto mode = r_mode == "count" ? analysis::ResidualMode::count : analysis::ResidualMode::ratio;
      analysis::ResidualSeries r;
      if (!r_pred.empty()) {
        const auto table = read_predictions(r_pred, observed);
        r = analysis::residuals(
            observed,
            [&](double x) {
              auto it = table.find(x);
              if (it == table.end()) fail(ErrorKind::invalid_parameter, "no prediction at x=" + format_real(x) + " in " + r_pred);
              return it->second;
            },
            mode);
      } else {
        if (r_model == "conjecture") series::set_cache_dir(table_dir_or_default(table_dir));
        r = analysis::residuals(observed, r_model == "eq19" ? analysis::Model::eq19 : analysis::Model::conjecture_integral,
                                mode, workers);
      }
      if (r_out.empty()) {
        out << "x,observed,model,residual\n";
        for (const auto& row : r.rows)
          out << format_real(row.x) << ',' << format_real(row.observed) << ',' << format_real(row.model) << ','
              << format_real(row.residual) << '\n';
      } else {
        analysis::write_residuals(r_out, r);
      }
    } else if (fit->parsed()) {
      auto r = analysis::read_residuals(f_res, f_count ? analysis::ResidualMode::count : analysis::ResidualMode::ratio);
      auto f = analysis::fit_lower_order(r);
      Sink sink(f_out, out);
      *sink << "coefficient,basis,rms_before,rms_after,standard_error\n"
            << format_real(f.coefficient) << ',' << f.basis << ',' << format_real(f.rms_before) << ','
            << format_real(f.rms_after) << ',' << format_real(f.standard_error) << '\n';
      sink.finish(f_out);
    } else if (plot->parsed()) {
      auto r = analysis::read_residuals(pl_res, pl_count ? analysis::ResidualMode::count : analysis::ResidualMode::ratio);
      const auto kind = pl_kind == "proportion" ? analysis::PlotKind::proportion
                        : pl_kind == "residual"  ? analysis::PlotKind::residual
                                                 : analysis::PlotKind::residual_after_fit;
      if (pl_out.empty()) {
        out << "x,value\n";
        for (const auto& p : analysis::plot_data(r, kind)) out << format_real(p.x) << ',' << format_real(p.value) << '\n';
      } else {
        analysis::emit_plot_data(r, kind, pl_out);
      }
    }
  } catch (const Error& e) {
    print_error(err, error_name(e.kind()), exit_code(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    print_error(err, "io", exit_code(ErrorKind::io), e.what());
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    print_error(err, "internal", kExitInternal, e.what());
    return kExitInternal;
  }
  return 0;
}

}  // namespace primepatterns::cli
