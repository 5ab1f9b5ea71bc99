#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "shapesel/binary_io.hpp"
#include "shapesel/errors.hpp"

namespace shapesel {

/// C-channel center-point probability map at output stride R.
struct Heatmap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;  // x fastest, then y, then channel

  Heatmap() = default;
  Heatmap(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 1 || h < 1 || c < 1) throw InvalidArgument("heatmap dimensions must be positive");
  }

  std::size_t index(int c, int y, int x) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(width) * (y + static_cast<std::size_t>(height) * c);
  }
  double& at(int c, int y, int x) { return values[index(c, y, x)]; }
  double at(int c, int y, int x) const { return values[index(c, y, x)]; }
};

struct Detection {
  int x = 0;
  int y = 0;
  int class_id = 0;
  double score = 0.0;
};

struct CenterTarget {
  double x = 0.0;
  double y = 0.0;
  int class_id = 0;
  double sigma = 1.0;
};

struct SigmaRule {
  int stride = 4;             // R
  double box_fraction = 6.0;  // σ = min(w, h) / (box_fraction * R)
  double min_sigma = 1.0;
};

/// Gaussian radius in heatmap pixels for an object whose projected box is
/// (w, h) input pixels.
inline double gaussian_sigma(double w, double h, const SigmaRule& rule = {}) {
  if (!(w > 0.0 && h > 0.0)) throw InvalidArgument("box size must be positive");
  return std::max(rule.min_sigma, std::min(w, h) / (rule.box_fraction * rule.stride));
}

/// Splats one Gaussian per center into its class channel; overlaps combine by
/// element-wise maximum.
inline Heatmap make_targets(const std::vector<CenterTarget>& centers, int width, int height, int channels) {
  Heatmap y(width, height, channels);
  for (const auto& c : centers) {
    if (c.class_id < 0 || c.class_id >= channels || c.x < 0 || c.y < 0 || c.x > width - 1 || c.y > height - 1)
      throw InvalidArgument("center outside the heatmap");
    const double inv = 1.0 / (2.0 * c.sigma * c.sigma);
    for (int py = 0; py < height; ++py)
      for (int px = 0; px < width; ++px) {
        const double r2 = (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y);
        double& v = y.at(c.class_id, py, px);
        v = std::max(v, std::exp(-r2 * inv));
      }
  }
  return y;
}

struct FocalLossParams {
  double alpha = 2.0;
  double beta = 4.0;
  double clamp = 1e-7;
};

struct FocalLossResult {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d pred, zero where pred was clamped
};

/// Penalty-reduced pixel-wise focal loss, normalized by the object count.
/// The positive branch applies only where the target is exactly 1.
inline FocalLossResult focal_loss_with_gradient(const Heatmap& pred, const Heatmap& target, int n_objects,
                                                const FocalLossParams& p = {}) {
  if (pred.values.size() != target.values.size()) throw MismatchedLengths("heatmap shapes differ");
  if (n_objects < 1) throw InvalidArgument("object count must be >= 1");
  FocalLossResult r;
  r.gradient.assign(pred.values.size(), 0.0);
  const double scale = -1.0 / n_objects;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double raw = pred.values[i];
    const double q = std::clamp(raw, p.clamp, 1.0 - p.clamp);
    const bool active = raw == q;
    const double y = target.values[i];
    double term, dterm;
    if (y == 1.0) {
      const double om = 1.0 - q;
      term = std::pow(om, p.alpha) * std::log(q);
      dterm = -p.alpha * std::pow(om, p.alpha - 1.0) * std::log(q) + std::pow(om, p.alpha) / q;
    } else {
      const double w = std::pow(1.0 - y, p.beta);
      term = w * std::pow(q, p.alpha) * std::log1p(-q);
      dterm = w * (p.alpha * std::pow(q, p.alpha - 1.0) * std::log1p(-q) - std::pow(q, p.alpha) / (1.0 - q));
    }
    sum += term;
    r.gradient[i] = active ? scale * dterm : 0.0;
  }
  r.loss = scale * sum;
  return r;
}

inline double focal_loss(const Heatmap& pred, const Heatmap& target, int n_objects, const FocalLossParams& p = {}) {
  return focal_loss_with_gradient(pred, target, n_objects, p).loss;
}

/// 3x3 max-pool peak extraction. A pixel is kept when it is the maximum of
/// its border-clamped neighborhood and at least `tau`; among equal values in a
/// neighborhood the lexicographically smallest (y, x) wins. Output is sorted by
/// descending score, then (class, y, x).
inline std::vector<Detection> extract_peaks(const Heatmap& pred, double tau = 1e-2) {
  std::vector<Detection> out;
  for (int c = 0; c < pred.channels; ++c)
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x) {
        const double v = pred.at(c, y, x);
        if (v < tau) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy)
          for (int dx = -1; dx <= 1 && peak; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if ((dx == 0 && dy == 0) || ny < 0 || nx < 0 || ny >= pred.height || nx >= pred.width) continue;
            const double w = pred.at(c, ny, nx);
            if (w > v || (w == v && std::tie(ny, nx) < std::tie(y, x))) peak = false;
          }
        if (peak) out.push_back({x, y, c, v});
      }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

// Heatmap container (SDFG version 2):
//   "SDFG" | u32 version = 2 | u32 width, height, channels | f32 values (x, y, channel order)

inline void write_heatmap(std::ostream& out, const Heatmap& h) {
  out.write("SDFG", 4);
  detail::put_le<std::uint32_t>(out, 2);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.width));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.height));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.channels));
  for (double v : h.values) detail::put_le<float>(out, static_cast<float>(v));
}

inline Heatmap read_heatmap(std::istream& in, const std::string& name = "<stream>") {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "SDFG") throw FormatError(name + ": bad magic");
  if (detail::get_le<std::uint32_t>(in) != 2) throw FormatError(name + ": not a heatmap container (version 2)");
  const auto w = detail::get_le<std::uint32_t>(in);
  const auto h = detail::get_le<std::uint32_t>(in);
  const auto c = detail::get_le<std::uint32_t>(in);
  if (w == 0 || h == 0 || c == 0 || w > 65536 || h > 65536 || c > 65536) throw FormatError(name + ": invalid dims");
  Heatmap out(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (auto& v : out.values) v = detail::get_le<float>(in);
  return out;
}

}  // namespace shapesel
