#pragma once

#include <array>
#include <optional>
#include <vector>

#include "primepatterns/singular_series.hpp"

namespace primepatterns::conjecture {

inline constexpr int kMaxDepth = 5;

struct Coefficients {
  double y = 0;
  int q = 0;
  double alpha = 0;  // 1 - q/(phi(q) log y)
  double z = 0;      // q/(phi(q) alpha log y)
  double g = 0;      // alpha^(phi(q)/q)
};

Coefficients coefficients(double y, int q);

// normalized: (q/(phi log y))^2, whose leading term sums to 1/log y over all
// pairs (a,b). alpha_scaled: (q/(phi alpha log y))^2.
enum class Prefactor { normalized, alpha_scaled };

struct QuadratureSettings {
  double target_relative = 1e-6;
  double panel_width = 0.5;  // in log y
  int max_depth = 48;
};

struct ConjectureParams {
  int q = 3;
  int a = 1;
  int b = 1;
  int n_max = kMaxDepth;
  double c = 4.0;
  QuadratureSettings quadrature;
  Prefactor prefactor = Prefactor::normalized;
  std::optional<double> epsilon_override;
  double cutoff_target = series::kDefaultCutoffTarget;
};

void validate(const ConjectureParams& p);

struct EpsilonQ {
  int q = 0, a = 0, b = 0;
  int h0 = 0;
  double value = 0;
};

EpsilonQ epsilon_q(int q, int a, int b);

// largest gap length kept at height y: floor(c loglog y * log y)
int gap_cutoff(double y, double c);

enum class SubsetKind { A, B, C, D };

struct SubsetSum {
  int h = 0;
  int ell = 0;
  SubsetKind kind = SubsetKind::A;
  double value = 0;
};

// restricted: T ranges over t in [1,h-1] with gcd(t+a,q) = 1; otherwise over
// all of [1,h-1].
SubsetSum subset_sum(SubsetKind kind, int h, int ell, int q, int a, const series::SeriesTable& table,
                     bool restricted = true);

enum class Lemma4Form {
  as_stated,  // restricted sums, D_{h-1,l-2}
  corrected,  // unrestricted sums, D_{h-2,l-2}
};

struct Lemma4Result {
  double b_discrepancy = 0;
  double c_discrepancy = 0;
  double d_discrepancy = 0;  // only when ell >= 2
  double max_discrepancy() const;
};

Lemma4Result lemma4_check(int h, int ell, int q, int a, const series::SeriesTable& table,
                          Lemma4Form form = Lemma4Form::as_stated);

// W_{h,n}: sum over A subset {0,h} and T subset R_h with |T| = n of
// S_{q,0}(A u T), for h = h0, h0+q, ... <= h_max.
struct GapWeights {
  int q = 0, a = 0, b = 0;
  int h0 = 0;
  int n_max = 0;
  int h_max = 0;
  double cutoff_target = series::kDefaultCutoffTarget;
  std::vector<int> hs;
  std::vector<std::array<long double, kMaxDepth + 1>> w;
};

GapWeights gap_weights(int q, int a, int b, int h_max, int n_max,
                       double cutoff_target = series::kDefaultCutoffTarget, int workers = 1);

// Uses the on-disk cache in series::cache_dir() when present.
GapWeights cached_gap_weights(int q, int a, int b, int h_max, int n_max,
                              double cutoff_target = series::kDefaultCutoffTarget, int workers = 1);

double d_n(const ConjectureParams& params, const Coefficients& co, int n, const GapWeights& weights);
double d_n(const ConjectureParams& params, double y, int n, const GapWeights& weights);

// Same sum built term by term from table lookups; for cross-checking.
double d_n_from_table(const ConjectureParams& params, double y, int n, const series::SeriesTable& table);

struct GeometricCheck {
  double summed = 0;        // sum of g^h over kept h
  double finite_form = 0;   // g^h0 (1 - g^(qN)) / (1 - g^q)
  double infinite_form = 0; // g^h0 / (1 - g^q)
  double truncation_bound = 0;  // g^(M log y) / (1 - g^q)
};
GeometricCheck geometric_check(const ConjectureParams& params, double y);

struct Prediction {
  double x = 0;
  double predicted = 0;
  double err_estimate = 0;
  double y0 = 0;
  double discarded_bound = 0;  // crude bound on the dropped [2, y0] part
  long evaluations = 0;
};

double lower_limit(int q);

Prediction predict(const ConjectureParams& params, double x, const GapWeights& weights);
Prediction predict(const ConjectureParams& params, double x, int workers = 1);

double integrand(const ConjectureParams& params, double y, const GapWeights& weights);

double simplified_prediction(double x, bool same_residue);

}  // namespace primepatterns::conjecture
