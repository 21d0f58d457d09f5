#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace minima {

// Raised when an evaluation produces a non-finite value (e.g. exp overflow).
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ActKind {
  Exponential,
  ShiftedSigmoid,
  ShiftedTanh,
  ShiftedSoftplus,
  Polynomial,
  CustomSeries,
};

/// An analytic scalar activation with exact derivatives and truncated
/// power-series coefficients about 0. Shifted kinds evaluate sigma(x + shift);
/// Exponential and Polynomial require shift == 0. Immutable after
/// construction; all operations are pure.
struct ActivationSpec {
  ActKind kind = ActKind::Exponential;
  double shift = 0.0;
  std::vector<double> coeffs;  // Polynomial / CustomSeries only
  int series_depth = 64;

  static ActivationSpec exponential();
  static ActivationSpec shifted_sigmoid(double shift);
  static ActivationSpec shifted_tanh(double shift);
  static ActivationSpec shifted_softplus(double shift);
  static ActivationSpec polynomial(std::vector<double> coeffs);
  static ActivationSpec custom_series(std::vector<double> coeffs, double shift = 0.0);

  void validate() const;

  double eval(double x) const;
  double d1(double x) const;
  double d2(double x) const;
};

/// Taylor coefficients of the (shifted) activation about 0, length J+1.
/// Closed-form recurrences for the analytic kinds, literal coefficients for
/// Polynomial/CustomSeries (rebased when shifted).
std::vector<double> series_coeffs(const ActivationSpec& act, int J);

enum class GoodVerdict { Good, NotGood, Inconclusive };

struct GoodCertificate {
  GoodVerdict verdict;
  std::string reason;
};

// Finite-depth certificate for the "good activation" property: c_0 != 0 plus
// nonzero odd- and even-index coefficients in the window (J/2, J]. Exact for
// Exponential (every coefficient is 1/j! > 0); a polynomial tail vanishes
// identically; other kinds whose truncated tail decays below the relative
// threshold are reported Inconclusive, never guessed Good.
GoodCertificate good_certificate(const ActivationSpec& act, int J);

const char* act_kind_name(ActKind kind);
ActKind act_kind_from_name(const std::string& name);

}  // namespace minima
