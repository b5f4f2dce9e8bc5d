#include "primepatterns/analysis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "primepatterns/conjecture.hpp"
#include "primepatterns/error.hpp"
#include "primepatterns/util.hpp"

namespace primepatterns::analysis {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

double rms(const std::vector<double>& v) {
  double s = 0;
  for (double e : v) s += e * e;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

ResidualSeries residuals(const ObservedSeries& observed, const std::function<double(double)>& model_count,
                         ResidualMode mode) {
  if (observed.x.size() != observed.value.size())
    fail(ErrorKind::invalid_parameter, "observed series has mismatched columns");
  if (mode == ResidualMode::count && observed.unit == Unit::ratio)
    fail(ErrorKind::unit, "count-mode residuals need observed counts, got ratios");
  ResidualSeries r;
  r.mode = mode;
  for (std::size_t i = 0; i < observed.x.size(); ++i) {
    const double x = observed.x[i];
    if (i && !(x > observed.x[i - 1])) fail(ErrorKind::invalid_parameter, "observed x values must increase strictly");
    double obs = observed.value[i];
    double model = model_count(x);
    if (mode == ResidualMode::ratio) {
      const double li = primes::log_integral(x).value;
      if (observed.unit == Unit::count) obs /= li;
      model /= li;
    }
    if (!std::isfinite(model)) fail(ErrorKind::domain, "model is not finite at x=" + format_real(x));
    r.rows.push_back({x, obs, model, obs - model});
  }
  return r;
}

ResidualSeries residuals(const ObservedSeries& observed, Model model, ResidualMode mode, int workers) {
  if (observed.pattern.size() != 2) fail(ErrorKind::invalid_parameter, "models are defined for pairs (a,b)");
  const int a = observed.pattern[0], b = observed.pattern[1];
  if (model == Model::eq19) {
    if (observed.q != 3) fail(ErrorKind::invalid_parameter, "the simplified asymptotic is stated for q = 3");
    return residuals(observed, [&](double x) { return conjecture::simplified_prediction(x, a == b); }, mode);
  }
  conjecture::ConjectureParams params;
  params.q = observed.q;
  params.a = a;
  params.b = b;
  double x_top = 0;
  for (double x : observed.x) x_top = std::max(x_top, x);
  const auto weights = conjecture::cached_gap_weights(params.q, a, b, conjecture::gap_cutoff(std::max(x_top, 100.0), params.c),
                                                      params.n_max, params.cutoff_target, workers);
  return residuals(observed, [&](double x) { return conjecture::predict(params, x, weights).predicted; }, mode);
}

double lower_order_basis(double x, ResidualMode mode) {
  const double L = std::log(x);
  const double ll = std::log(L);
  const double b = ll * ll / (L * L);
  return mode == ResidualMode::count ? b * primes::log_integral(x).value : b;
}

FitResult fit_lower_order(const ResidualSeries& r) {
  if (r.rows.size() < 10) fail(ErrorKind::invalid_parameter, "the fit needs at least 10 rows");
  bool distinct = false;
  for (const auto& row : r.rows) distinct = distinct || row.x != r.rows.front().x;
  if (!distinct) fail(ErrorKind::singular_fit, "all x are equal; the basis is degenerate");
  double sbb = 0, srb = 0;
  std::vector<double> basis, before;
  for (const auto& row : r.rows) {
    const double b = lower_order_basis(row.x, r.mode);
    basis.push_back(b);
    before.push_back(row.residual);
    sbb += b * b;
    srb += row.residual * b;
  }
  if (!(sbb > 0)) fail(ErrorKind::singular_fit, "basis vanishes on every row");
  FitResult fit;
  fit.coefficient = srb / sbb;
  std::vector<double> after;
  for (std::size_t i = 0; i < basis.size(); ++i) after.push_back(before[i] - fit.coefficient * basis[i]);
  fit.rms_before = rms(before);
  fit.rms_after = rms(after);
  double sse = 0;
  for (double e : after) sse += e * e;
  fit.standard_error = std::sqrt(sse / static_cast<double>(after.size() - 1) / sbb);
  return fit;
}

std::vector<PlotPoint> plot_data(const ResidualSeries& source, PlotKind kind) {
  if (source.rows.empty()) fail(ErrorKind::empty_input, "plot source is empty");
  std::vector<PlotPoint> out;
  double c = 0;
  if (kind == PlotKind::residual_after_fit) c = fit_lower_order(source).coefficient;
  for (const auto& row : source.rows) {
    double v = row.residual;
    if (kind == PlotKind::proportion) v = row.observed;
    if (kind == PlotKind::residual_after_fit) v = row.residual - c * lower_order_basis(row.x, source.mode);
    out.push_back({row.x, v});
  }
  return out;
}

void emit_plot_data(const ResidualSeries& source, PlotKind kind, const std::filesystem::path& file) {
  const auto points = plot_data(source, kind);
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << "x,value\n";
  for (const auto& p : points) out << format_real(p.x) << ',' << format_real(p.value) << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
}

ObservedSeries observed_from_counts(const std::vector<primes::PatternCounts>& counts, const std::vector<int>& pattern) {
  if (counts.empty()) fail(ErrorKind::empty_input, "no count rows");
  ObservedSeries s;
  s.q = counts.front().q;
  s.pattern = pattern;
  s.unit = Unit::count;
  for (const auto& c : counts) {
    if (c.limit.mode != primes::LimitMode::x_bound)
      fail(ErrorKind::unit, "observed series need x-bounded counts, got first-primes counts");
    if (c.q != s.q || c.k != static_cast<int>(pattern.size()))
      fail(ErrorKind::invalid_parameter, "count rows mix moduli or pattern lengths");
    s.x.push_back(static_cast<double>(c.limit.value));
    s.value.push_back(static_cast<double>(c.at(pattern)));
  }
  return s;
}

void write_counts(const std::filesystem::path& file, const std::vector<primes::PatternCounts>& counts) {
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << "limit_type,limit,q,k,pattern,count\n";
  for (const auto& c : counts)
    for (const auto& [key, n] : c.counts)
      out << c.limit.type_name() << ',' << c.limit.value << ',' << c.q << ',' << c.k << ',' << key.label() << ',' << n << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
}

std::vector<primes::PatternCounts> read_counts(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::io, "cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "limit_type,limit,q,k,pattern,count") fail(ErrorKind::io, file.string() + " is not a count file");
  std::vector<primes::PatternCounts> out;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      if (f.size() != 6) fail(ErrorKind::io, "bad row in " + file.string() + ": " + line);
      primes::Limit lim{f[0] == "x" ? primes::LimitMode::x_bound : primes::LimitMode::first_primes, std::stoull(f[1])};
      const int q = std::stoi(f[2]), k = std::stoi(f[3]);
      if (out.empty() || out.back().limit.value != lim.value || out.back().limit.mode != lim.mode || out.back().q != q ||
          out.back().k != k) {
        primes::PatternCounts pc;
        pc.limit = lim;
        pc.q = q;
        pc.k = k;
        out.push_back(pc);
      }
      primes::PatternKey key{q, {}};
      for (const auto& r : split(f[4], '-')) key.residues.push_back(std::stoi(r));
      const std::uint64_t n = std::stoull(f[5]);
      out.back().counts[key] = n;
      out.back().total_pairs += n;
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "malformed number in " + file.string());
  }
  return out;
}

void write_residuals(const std::filesystem::path& file, const ResidualSeries& r) {
  std::ofstream out(file);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << "x,observed,model,residual\n";
  for (const auto& row : r.rows)
    out << format_real(row.x) << ',' << format_real(row.observed) << ',' << format_real(row.model) << ','
        << format_real(row.residual) << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
}

ResidualSeries read_residuals(const std::filesystem::path& file, ResidualMode mode) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::io, "cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "x,observed,model,residual") fail(ErrorKind::io, file.string() + " is not a residual file");
  ResidualSeries r;
  r.mode = mode;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      if (f.size() != 4) fail(ErrorKind::io, "bad row in " + file.string() + ": " + line);
      r.rows.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::io, "malformed number in " + file.string());
  }
  return r;
}

}  // namespace primepatterns::analysis
