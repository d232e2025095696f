#pragma once

// Tail fits for the stretched-exponential size classes, quantiles, and
// algebraic rate fits with bootstrap confidence bands.

#include <algorithm>
#include <cmath>
#include <vector>

#include "nlhomog/common.hpp"
#include "nlhomog/rng.hpp"

namespace nlhomog {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("quantile: empty sample");
  if (q < 0 || q > 1) throw DomainError("quantile: q outside [0,1]");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  std::size_t k = static_cast<std::size_t>(pos);
  if (k + 1 >= v.size()) return v.back();
  double t = pos - static_cast<double>(k);
  return (1 - t) * v[k] + t * v[k + 1];
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw DomainError("mean_of: empty sample");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// theta_hat is the smallest theta with empirical mean of exp((X+/theta)^sigma)
// at most 2; the lambda rows report observed tail fractions P[X > lambda*theta]
// against the Markov bound 2 exp(-lambda^sigma)
struct TailFit {
  double sigma = 1;
  double theta_hat = 0;
  std::size_t sample_count = 0;
  bool degenerate = false;
  std::array<double, 3> lambda{1, 2, 4};
  std::array<double, 3> tail_frac{};
  std::array<double, 3> tail_bound{};
};

inline TailFit fit_Osigma(const std::vector<double>& samples, double sigma) {
  if (!(sigma > 0)) throw ConfigError("fit_Osigma: sigma must be positive");
  if (samples.size() < 8)
    throw ConfigError("fit_Osigma: need at least 8 samples");
  TailFit fit;
  fit.sigma = sigma;
  fit.sample_count = samples.size();
  for (int i = 0; i < 3; ++i)
    fit.tail_bound[i] = 2 * std::exp(-std::pow(fit.lambda[i], sigma));

  double mx = 0;
  for (double x : samples) mx = std::max(mx, x);
  if (mx <= 0) {
    fit.degenerate = true;
    return fit;
  }

  const double N = static_cast<double>(samples.size());
  auto mean_exp = [&](double theta) {
    double acc = 0;
    for (double x : samples)
      acc += std::exp(std::pow(std::max(x, 0.0) / theta, sigma));
    return acc / N;
  };
  // brackets proportional to the max sample, so the fit is exactly
  // homogeneous: mean(lo) > 2 >= mean(hi)
  double lo = mx / std::pow(std::log(2.0 * N), 1.0 / sigma);
  double hi = mx / std::pow(std::log(2.0), 1.0 / sigma);
  while (hi - lo > 1e-6 * hi) {
    double mid = 0.5 * (lo + hi);
    if (mean_exp(mid) <= 2.0)
      hi = mid;
    else
      lo = mid;
  }
  fit.theta_hat = hi;
  for (int i = 0; i < 3; ++i) {
    std::size_t over = 0;
    for (double x : samples)
      if (x > fit.lambda[i] * fit.theta_hat) ++over;
    fit.tail_frac[i] = static_cast<double>(over) / N;
  }
  return fit;
}

struct RateFit {
  double alpha_hat = 0;
  double half_width = 0;
  double intercept = 0;
  std::vector<int> n_list;
  std::size_t per_level = 0;
};

namespace detail {

inline double rate_slope(const std::vector<double>& x,
                         const std::vector<double>& logmed) {
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += logmed[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (logmed[i] - my);
  }
  return sxy / sxx;
}

}  // namespace detail

// least-squares slope of log(median error) against log(3^-n); the bootstrap
// resamples member indices (jointly across levels when counts match, so
// common-seed designs stay paired)
inline RateFit fit_rate(const std::vector<int>& n_list,
                        const std::vector<std::vector<double>>& samples) {
  if (n_list.size() != samples.size())
    throw ConfigError("fit_rate: level count mismatch");
  if (n_list.size() < 3) throw ConfigError("fit_rate: need at least 3 scales");
  for (const auto& s : samples)
    if (s.size() < 8) throw ConfigError("fit_rate: need 8 samples per scale");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1])
      throw ConfigError("fit_rate: scales must increase");

  const std::size_t L = n_list.size();
  std::vector<double> x(L), logmed(L);
  for (std::size_t i = 0; i < L; ++i) {
    x[i] = -std::log(3.0) * static_cast<double>(n_list[i]);
    double m = median(samples[i]);
    if (!(m > 0)) throw DomainError("fit_rate: nonpositive level median");
    logmed[i] = std::log(m);
  }

  RateFit out;
  out.n_list = n_list;
  out.per_level = samples[0].size();
  for (const auto& s : samples)
    out.per_level = std::min(out.per_level, s.size());
  out.alpha_hat = detail::rate_slope(x, logmed);
  {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < L; ++i) {
      mx += x[i];
      my += logmed[i];
    }
    out.intercept = my / static_cast<double>(L) -
                    out.alpha_hat * mx / static_cast<double>(L);
  }

  bool joint = true;
  for (const auto& s : samples) joint = joint && s.size() == samples[0].size();

  const int resamples = 200;
  std::uint64_t rs = 0x2545F4914F6CDD1DULL;
  std::vector<double> alphas;
  alphas.reserve(resamples);
  std::vector<double> lm(L);
  for (int r = 0; r < resamples; ++r) {
    bool ok = true;
    if (joint) {
      const std::size_t N = samples[0].size();
      std::vector<std::size_t> idx(N);
      for (auto& v : idx) {
        rs = splitmix64(rs);
        v = static_cast<std::size_t>(rs % N);
      }
      for (std::size_t i = 0; i < L && ok; ++i) {
        std::vector<double> pick(N);
        for (std::size_t j = 0; j < N; ++j) pick[j] = samples[i][idx[j]];
        double m = median(std::move(pick));
        if (!(m > 0)) ok = false;
        else lm[i] = std::log(m);
      }
    } else {
      for (std::size_t i = 0; i < L && ok; ++i) {
        const std::size_t N = samples[i].size();
        std::vector<double> pick(N);
        for (auto& v : pick) {
          rs = splitmix64(rs);
          v = samples[i][static_cast<std::size_t>(rs % N)];
        }
        double m = median(std::move(pick));
        if (!(m > 0)) ok = false;
        else lm[i] = std::log(m);
      }
    }
    if (ok) alphas.push_back(detail::rate_slope(x, lm));
  }
  if (alphas.size() >= 20)
    out.half_width =
        0.5 * (quantile(alphas, 0.95) - quantile(alphas, 0.05));
  return out;
}

}  // namespace nlhomog
