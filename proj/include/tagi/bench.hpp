#pragma once

// Wall-time of one training step on dense nets of increasing width.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tagi/inference.hpp"

namespace tagi {

struct ScalingPoint {
  std::size_t width = 0;
  std::size_t params = 0;
  double seconds = 0;  // median over repeats
};

struct ScalingResult {
  std::vector<ScalingPoint> points;
  double slope = 0;  // seconds per parameter
  double intercept = 0;
  double r2 = 0;
};

/// in -> width -> width -> out, ReLU hidden units.
inline NetworkConfig scaling_config(std::size_t in, std::size_t width, std::size_t out) {
  std::string t = "head regression\ninput 1x1x" + std::to_string(in) + "\n";
  t += "fc " + std::to_string(width) + "x1x1 - - - relu -\n";
  t += "fc " + std::to_string(width) + "x1x1 - - - relu -\n";
  t += "output " + std::to_string(out) + "x1x1" + " - - - - -\n";
  return parse_config(t);
}

/// Ordinary least squares y = a + b x with its coefficient of determination.
inline void fit_line(const std::vector<double>& x, const std::vector<double>& y, double& a, double& b, double& r2) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  b = sxx > 0 ? sxy / sxx : 0;
  a = my - b * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sse += (y[i] - a - b * x[i]) * (y[i] - a - b * x[i]);
  r2 = syy > 0 ? 1 - sse / syy : 1;
}

template <typename T = float>
ScalingResult bench_scaling(const std::vector<std::size_t>& widths, std::size_t batch = 16, int repeats = 15,
                            std::uint64_t seed = 0, std::size_t in = 784, std::size_t out = 10) {
  if (widths.size() < 2) throw PreconditionError("bench_scaling: need at least two widths");
  ScalingResult r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  for (std::size_t w : widths) {
    auto b = build<T>(scaling_config(in, w, out), seed);
    BatchState<T> x(batch, in);
    for (auto& v : x.mean) v = static_cast<T>(n01(rng));
    std::vector<T> y(batch * out);
    for (auto& v : y) v = static_cast<T>(n01(rng));
    const ObservationModel<T> obs{T(1), T(1), 0};
    train_step(b.net, b.params, x, std::span<const T>(y), obs);  // warm-up
    std::vector<double> times;
    for (int k = 0; k < repeats; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      train_step(b.net, b.params, x, std::span<const T>(y), obs);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    r.points.push_back({w, b.params.parameter_count(), times[times.size() / 2]});
  }
  std::vector<double> px, py;
  for (const auto& p : r.points) {
    px.push_back(static_cast<double>(p.params));
    py.push_back(p.seconds);
  }
  fit_line(px, py, r.intercept, r.slope, r.r2);
  return r;
}

}  // namespace tagi
