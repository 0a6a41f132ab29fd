#include "cumulab/activation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cumulab {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// tanh(k xi) and its first three derivatives in xi.
ActivationValues tanh_chain(double k, double xi) {
  const double th = std::tanh(k * xi);
  const double sech2 = 1.0 - th * th;
  return {th, k * sech2, -2.0 * k * k * th * sech2, -2.0 * k * k * k * sech2 * (sech2 - 2.0 * th * th)};
}

}  // namespace

Activation Activation::neg_identity() { return {Kind::neg_identity, 0.0, 0.0}; }
Activation Activation::neg_tanh() { return {Kind::neg_tanh, 1.0, 0.0}; }

Activation Activation::scaled_neg_tanh(double a) {
  if (!(a > 0.0)) throw std::invalid_argument("scaled_neg_tanh: scale must be > 0");
  return {Kind::scaled_neg_tanh, a, 0.0};
}

Activation Activation::smoothed_relu(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smoothed_relu: beta must be > 0");
  return {Kind::smoothed_relu, beta, 0.0};
}

Activation Activation::smoothed_relu_sq(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smoothed_relu_sq: beta must be > 0");
  return {Kind::smoothed_relu_sq, beta, 0.0};
}

Activation Activation::matched(const DiffusionTime& dt) {
  if (!(dt.delta() > 0.0)) throw std::domain_error("matched activation is singular at t = 0");
  return {Kind::matched, dt.shrink(), dt.shrink() / dt.delta()};
}

Activation Activation::polynomial(std::vector<double> coeffs) {
  Activation a{Kind::polynomial, 0.0, 0.0};
  a.coeffs_ = std::move(coeffs);
  return a;
}

Activation Activation::parse(const std::string& spec, const DiffusionTime& dt) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto number = [&](double fallback) {
    if (arg.empty()) return fallback;
    std::size_t used = 0;
    const double v = std::stod(arg, &used);
    if (used != arg.size()) throw std::invalid_argument("bad activation argument '" + arg + "'");
    return v;
  };
  if (head == "neg_identity") return neg_identity();
  if (head == "neg_tanh") return neg_tanh();
  if (head == "scaled_neg_tanh") return scaled_neg_tanh(number(10.0));
  if (head == "smoothed_relu") return smoothed_relu(number(10.0));
  if (head == "smoothed_relu_sq") return smoothed_relu_sq(number(10.0));
  if (head == "matched") return matched(arg.empty() ? dt : DiffusionTime(number(dt.t())));
  if (head == "polynomial") {
    std::vector<double> c;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) c.push_back(std::stod(item));
    if (c.empty()) throw std::invalid_argument("polynomial activation needs coefficients");
    return polynomial(std::move(c));
  }
  throw std::invalid_argument("unknown activation '" + spec + "'");
}

std::string Activation::name() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::neg_identity: return "neg_identity";
    case Kind::neg_tanh: return "neg_tanh";
    case Kind::scaled_neg_tanh: os << "scaled_neg_tanh:" << p0_; break;
    case Kind::smoothed_relu: os << "smoothed_relu:" << p0_; break;
    case Kind::smoothed_relu_sq: os << "smoothed_relu_sq:" << p0_; break;
    case Kind::matched: os << "matched:" << -std::log(p0_); break;
    case Kind::polynomial:
      os << "polynomial:";
      for (std::size_t i = 0; i < coeffs_.size(); ++i) os << (i ? "," : "") << coeffs_[i];
      break;
  }
  return os.str();
}

bool Activation::is_odd() const {
  switch (kind_) {
    case Kind::neg_identity:
    case Kind::neg_tanh:
    case Kind::scaled_neg_tanh:
    case Kind::matched: return true;
    case Kind::smoothed_relu:
    case Kind::smoothed_relu_sq: return false;
    case Kind::polynomial:
      for (std::size_t k = 0; k < coeffs_.size(); k += 2) {
        if (coeffs_[k] != 0.0) return false;
      }
      return true;
  }
  return false;
}

ActivationValues Activation::eval(double xi) const {
  switch (kind_) {
    case Kind::neg_identity: return {-xi, -1.0, 0.0, 0.0};
    case Kind::neg_tanh:
    case Kind::scaled_neg_tanh: {
      const double a = p0_;
      const auto t = tanh_chain(a, xi);
      return {-t.s / a, -t.s1 / a, -t.s2 / a, -t.s3 / a};
    }
    case Kind::smoothed_relu: {
      const double b = p0_;
      const double p = logistic(b * xi);
      const double q = p * (1.0 - p);
      return {softplus(b * xi) / b, p, b * q, b * b * q * (1.0 - 2.0 * p)};
    }
    case Kind::smoothed_relu_sq: {
      const double b = p0_;
      const double p = logistic(b * xi);
      const double q = p * (1.0 - p);
      const double r = softplus(b * xi) / b;
      const double r1 = p;
      const double r2 = b * q;
      const double r3 = b * b * q * (1.0 - 2.0 * p);
      return {r * r, 2.0 * r * r1, 2.0 * (r1 * r1 + r * r2), 2.0 * (3.0 * r1 * r2 + r * r3)};
    }
    case Kind::matched: {
      const double e = p0_;
      const double k = p1_;
      const auto t = tanh_chain(k, xi);
      return {k * (e * xi - t.s), k * (e - t.s1), -k * t.s2, -k * t.s3};
    }
    case Kind::polynomial: {
      ActivationValues out;
      // Horner for the value and each derivative.
      const auto n = coeffs_.size();
      for (std::size_t i = n; i-- > 0;) {
        out.s3 = out.s3 * xi + 3.0 * out.s2;
        out.s2 = out.s2 * xi + 2.0 * out.s1;
        out.s1 = out.s1 * xi + out.s;
        out.s = out.s * xi + coeffs_[i];
      }
      return out;
    }
  }
  return {};
}

double Activation::value(double xi) const { return eval(xi).s; }

double matched_sigma(const DiffusionTime& dt, double xi) { return Activation::matched(dt).value(xi); }

}  // namespace cumulab
