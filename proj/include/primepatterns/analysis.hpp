#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "primepatterns/prime_engine.hpp"

namespace primepatterns::analysis {

enum class Unit { count, ratio };
enum class Model { eq19, conjecture_integral };
// ratio: both sides divided by li(x); count: raw counts.
enum class ResidualMode { ratio, count };
enum class PlotKind { proportion, residual, residual_after_fit };

struct ObservedSeries {
  int q = 3;
  std::vector<int> pattern;  // (a, b)
  Unit unit = Unit::count;
  std::vector<double> x;
  std::vector<double> value;
};

struct ResidualRow {
  double x = 0;
  double observed = 0;
  double model = 0;
  double residual = 0;
};

struct ResidualSeries {
  ResidualMode mode = ResidualMode::ratio;
  std::vector<ResidualRow> rows;
};

struct FitResult {
  double coefficient = 0;
  std::string basis = "((loglog x)^2/(log x)^2)";
  double rms_before = 0;
  double rms_after = 0;
  double standard_error = 0;
};

struct PlotPoint {
  double x = 0;
  double value = 0;
};

// model_count(x) returns the modelled count at x.
ResidualSeries residuals(const ObservedSeries& observed, const std::function<double(double)>& model_count,
                         ResidualMode mode = ResidualMode::ratio);
ResidualSeries residuals(const ObservedSeries& observed, Model model, ResidualMode mode = ResidualMode::ratio,
                         int workers = 1);

// (loglog x)^2/(log x)^2, times li(x) in count mode
double lower_order_basis(double x, ResidualMode mode);

FitResult fit_lower_order(const ResidualSeries& r);

std::vector<PlotPoint> plot_data(const ResidualSeries& source, PlotKind kind);
void emit_plot_data(const ResidualSeries& source, PlotKind kind, const std::filesystem::path& file);

// Observed series for one pattern from count-CSV rows of mode x.
ObservedSeries observed_from_counts(const std::vector<primes::PatternCounts>& counts, const std::vector<int>& pattern);
std::vector<primes::PatternCounts> read_counts(const std::filesystem::path& file);
void write_counts(const std::filesystem::path& file, const std::vector<primes::PatternCounts>& counts);

void write_residuals(const std::filesystem::path& file, const ResidualSeries& r);
ResidualSeries read_residuals(const std::filesystem::path& file, ResidualMode mode = ResidualMode::ratio);

}  // namespace primepatterns::analysis
