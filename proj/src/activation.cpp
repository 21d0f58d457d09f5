#include "minima/activation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace minima {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 30.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericsError(std::string("non-finite result in ") + what);
  return v;
}

double horner(const std::vector<double>& c, double z) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

double horner_d1(const std::vector<double>& c, double z) {
  double acc = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 1; --j) acc = acc * z + j * c[j];
  return acc;
}

double horner_d2(const std::vector<double>& c, double z) {
  double acc = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 2; --j)
    acc = acc * z + static_cast<double>(j) * (j - 1) * c[j];
  return acc;
}

// Self-convolution term sum_{i=0..j} c_i c_{j-i}.
double conv(const std::vector<double>& c, int j) {
  double s = 0.0;
  for (int i = 0; i <= j; ++i) s += c[i] * c[j - i];
  return s;
}

// Coefficients of sigmoid about `shift` via s' = s(1-s).
std::vector<double> sigmoid_coeffs(double shift, int J) {
  std::vector<double> c(J + 1, 0.0);
  c[0] = sigmoid(shift);
  for (int j = 0; j < J; ++j) c[j + 1] = (c[j] - conv(c, j)) / (j + 1);
  return c;
}

}  // namespace

ActivationSpec ActivationSpec::exponential() { return ActivationSpec{ActKind::Exponential, 0.0, {}, 64}; }

ActivationSpec ActivationSpec::shifted_sigmoid(double shift) {
  return ActivationSpec{ActKind::ShiftedSigmoid, shift, {}, 64};
}

ActivationSpec ActivationSpec::shifted_tanh(double shift) {
  return ActivationSpec{ActKind::ShiftedTanh, shift, {}, 64};
}

ActivationSpec ActivationSpec::shifted_softplus(double shift) {
  return ActivationSpec{ActKind::ShiftedSoftplus, shift, {}, 64};
}

ActivationSpec ActivationSpec::polynomial(std::vector<double> coeffs) {
  return ActivationSpec{ActKind::Polynomial, 0.0, std::move(coeffs), 64};
}

ActivationSpec ActivationSpec::custom_series(std::vector<double> coeffs, double shift) {
  return ActivationSpec{ActKind::CustomSeries, shift, std::move(coeffs), 64};
}

void ActivationSpec::validate() const {
  if (!std::isfinite(shift)) throw std::invalid_argument("activation shift must be finite");
  if (series_depth < 1) throw std::invalid_argument("series_depth must be positive");
  if ((kind == ActKind::Exponential || kind == ActKind::Polynomial) && shift != 0.0)
    throw std::invalid_argument("Exponential/Polynomial activations take shift 0");
  if (kind == ActKind::Polynomial || kind == ActKind::CustomSeries) {
    if (coeffs.empty()) throw std::invalid_argument("Polynomial/CustomSeries needs coefficients");
    for (double c : coeffs)
      if (!std::isfinite(c)) throw std::invalid_argument("activation coefficients must be finite");
  }
}

double ActivationSpec::eval(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("activation input must be finite");
  double z = x + shift;
  switch (kind) {
    case ActKind::Exponential: return check_finite(std::exp(x), "eval(Exponential)");
    case ActKind::ShiftedSigmoid: return sigmoid(z);
    case ActKind::ShiftedTanh: return std::tanh(z);
    case ActKind::ShiftedSoftplus: return check_finite(softplus(z), "eval(ShiftedSoftplus)");
    case ActKind::Polynomial: return check_finite(horner(coeffs, x), "eval(Polynomial)");
    case ActKind::CustomSeries: return check_finite(horner(coeffs, z), "eval(CustomSeries)");
  }
  std::abort();
}

double ActivationSpec::d1(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("activation input must be finite");
  double z = x + shift;
  switch (kind) {
    case ActKind::Exponential: return check_finite(std::exp(x), "d1(Exponential)");
    case ActKind::ShiftedSigmoid: {
      double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case ActKind::ShiftedTanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActKind::ShiftedSoftplus: return sigmoid(z);
    case ActKind::Polynomial: return check_finite(horner_d1(coeffs, x), "d1(Polynomial)");
    case ActKind::CustomSeries: return check_finite(horner_d1(coeffs, z), "d1(CustomSeries)");
  }
  std::abort();
}

double ActivationSpec::d2(double x) const {
  if (!std::isfinite(x)) throw std::invalid_argument("activation input must be finite");
  double z = x + shift;
  switch (kind) {
    case ActKind::Exponential: return check_finite(std::exp(x), "d2(Exponential)");
    case ActKind::ShiftedSigmoid: {
      double s = sigmoid(z);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case ActKind::ShiftedTanh: {
      double t = std::tanh(z);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActKind::ShiftedSoftplus: {
      double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case ActKind::Polynomial: return check_finite(horner_d2(coeffs, x), "d2(Polynomial)");
    case ActKind::CustomSeries: return check_finite(horner_d2(coeffs, z), "d2(CustomSeries)");
  }
  std::abort();
}

std::vector<double> series_coeffs(const ActivationSpec& act, int J) {
  if (J < 1) throw std::invalid_argument("series_coeffs: J >= 1 required");
  act.validate();
  std::vector<double> c(J + 1, 0.0);
  switch (act.kind) {
    case ActKind::Exponential: {
      c[0] = 1.0;
      for (int j = 1; j <= J; ++j) c[j] = c[j - 1] / j;
      return c;
    }
    case ActKind::ShiftedSigmoid: return sigmoid_coeffs(act.shift, J);
    case ActKind::ShiftedTanh: {
      c[0] = std::tanh(act.shift);
      for (int j = 0; j < J; ++j) c[j + 1] = ((j == 0 ? 1.0 : 0.0) - conv(c, j)) / (j + 1);
      return c;
    }
    case ActKind::ShiftedSoftplus: {
      std::vector<double> s = sigmoid_coeffs(act.shift, J);
      c[0] = softplus(act.shift);
      for (int j = 0; j < J; ++j) c[j + 1] = s[j] / (j + 1);
      return c;
    }
    case ActKind::Polynomial:
    case ActKind::CustomSeries: {
      if (act.shift == 0.0) {
        for (std::size_t j = 0; j < act.coeffs.size() && j <= static_cast<std::size_t>(J); ++j)
          c[j] = act.coeffs[j];
        return c;
      }
      // Rebase sum c_j (z)^j about z = shift with binomial weights.
      int deg = static_cast<int>(act.coeffs.size()) - 1;
      for (int k = 0; k <= std::min(J, deg); ++k) {
        double acc = 0.0;
        for (int j = deg; j >= k; --j) {
          double binom = 1.0;
          for (int t = 0; t < k; ++t) binom *= static_cast<double>(j - t) / (k - t);
          acc += act.coeffs[j] * binom * std::pow(act.shift, j - k);
        }
        c[k] = acc;
      }
      return c;
    }
  }
  std::abort();
}

GoodCertificate good_certificate(const ActivationSpec& act, int J) {
  if (J < 8) throw std::invalid_argument("good_certificate: J >= 8 required");
  std::vector<double> c = series_coeffs(act, J);
  double cmax = 0.0;
  for (double v : c) cmax = std::max(cmax, std::abs(v));
  double thresh = 1e-12 * cmax;
  if (cmax == 0.0 || std::abs(c[0]) <= thresh) return {GoodVerdict::NotGood, "c0 = 0"};
  if (act.kind == ActKind::Polynomial) return {GoodVerdict::NotGood, "tail vanishes"};
  if (act.kind == ActKind::Exponential)
    return {GoodVerdict::Good, "exact: c_j = 1/j! > 0 for every j"};
  bool odd = false, even = false;
  for (int j = J / 2 + 1; j <= J; ++j) {
    if (std::abs(c[j]) > thresh) ((j % 2 != 0) ? odd : even) = true;
  }
  if (odd && even)
    return {GoodVerdict::Good, "window (J/2, J] has nonzero odd and even coefficients"};
  return {GoodVerdict::Inconclusive,
          "truncated tail below relative threshold; finite window cannot certify"};
}

const char* act_kind_name(ActKind kind) {
  switch (kind) {
    case ActKind::Exponential: return "exponential";
    case ActKind::ShiftedSigmoid: return "shifted_sigmoid";
    case ActKind::ShiftedTanh: return "shifted_tanh";
    case ActKind::ShiftedSoftplus: return "shifted_softplus";
    case ActKind::Polynomial: return "polynomial";
    case ActKind::CustomSeries: return "custom_series";
  }
  std::abort();
}

ActKind act_kind_from_name(const std::string& name) {
  if (name == "exponential") return ActKind::Exponential;
  if (name == "shifted_sigmoid") return ActKind::ShiftedSigmoid;
  if (name == "shifted_tanh") return ActKind::ShiftedTanh;
  if (name == "shifted_softplus") return ActKind::ShiftedSoftplus;
  if (name == "polynomial") return ActKind::Polynomial;
  if (name == "custom_series") return ActKind::CustomSeries;
  throw std::invalid_argument("unknown activation kind: " + name);
}

}  // namespace minima
