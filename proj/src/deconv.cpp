#include "petsr/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "petsr/error.hpp"

namespace petsr {

namespace {

std::ptrdiff_t axis_stride(const Dims& d, int axis) {
  return axis == 0 ? 1 : axis == 1 ? d.nx : std::ptrdiff_t(d.nx) * d.ny;
}

template <class F>
void for_each_forward_difference(const ImageGrid& x, F f) {
  const Dims& d = x.dims;
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] < 2) continue;
    const std::ptrdiff_t st = axis_stride(d, axis);
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int xx = 0; xx < d.nx; ++xx) {
          const int c = axis == 0 ? xx : axis == 1 ? y : z;
          if (c == d[axis] - 1) continue;
          const std::size_t k = x.index(xx, y, z);
          f(k, k + st, x.data[k + st] - x.data[k]);
        }
  }
}

}  // namespace

double tv_penalty(const ImageGrid& x) {
  double s = 0.0;
  for_each_forward_difference(x, [&](std::size_t, std::size_t, double t) { s += std::abs(t); });
  return s;
}

double tv_penalty_smoothed(const ImageGrid& x, double eps) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "TV smoothing must be positive");
  double s = 0.0;
  for_each_forward_difference(x,
                              [&](std::size_t, std::size_t, double t) { s += std::hypot(t, eps); });
  return s;
}

ImageGrid tv_gradient(const ImageGrid& x, double eps) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "TV smoothing must be positive");
  ImageGrid g = x.like();
  g.modality = Modality::GENERIC;
  for_each_forward_difference(x, [&](std::size_t lo, std::size_t hi, double t) {
    const double d = t / std::hypot(t, eps);
    g.data[hi] += d;
    g.data[lo] -= d;
  });
  return g;
}

// ---------------------------------------------------------------------------
// Joint entropy

void JeConfig::validate() const {
  require(n_bins >= 2, ErrorKind::InvalidArgument, "JE needs at least two bins");
  require(parzen_sigma_u > 0.0 && parzen_sigma_v > 0.0, ErrorKind::InvalidArgument,
          "Parzen sigmas must be positive");
  require(u_max > u_min && v_max > v_min, ErrorKind::InvalidArgument,
          "JE intensity bounds have zero range");
}

JeConfig JeConfig::for_images(const ImageGrid& x, const ImageGrid& y, int n_bins) {
  JeConfig c;
  c.n_bins = n_bins;
  c.u_max = *std::max_element(x.data.begin(), x.data.end());
  c.v_max = *std::max_element(y.data.begin(), y.data.end());
  c.validate();
  return c;
}

namespace {

constexpr double kDensityFloor = 1e-12;

// Normalized Parzen weights of one sample over a window of bins. The kernel
// is a Gaussian minus a quadratic in d chosen so value and slope both vanish
// at 4 sigma; weights are then C1 in the sample value, even when a sample
// sits exactly on a bin center (flat phantom regions do).
struct ParzenWeights {
  int first = 0;
  std::vector<double> w;    // normalized weights
  std::vector<double> dw;   // d w / d (sample value)
};

void parzen(double value, double lo, double delta, double sigma, int n_bins, bool want_grad,
            ParzenWeights& out) {
  const double radius = 4.0 * sigma;
  // Far outside the bin range; keeps the int conversions below in range.
  const double q = std::clamp((value - lo) / delta, -radius - 2.0, n_bins + radius + 1.0);
  const double floor_k = std::exp(-0.5 * radius * radius / (sigma * sigma));
  const int first = std::max(0, static_cast<int>(std::ceil(q - radius)));
  const int last = std::min(n_bins - 1, static_cast<int>(std::floor(q + radius)));
  out.w.clear();
  out.dw.clear();
  double sum = 0.0, dsum = 0.0;
  std::vector<double>& k = out.w;
  std::vector<double>& dk = out.dw;
  for (int i = first; i <= last; ++i) {
    const double d = q - i;
    const double g = std::exp(-0.5 * d * d / (sigma * sigma));
    const double kv =
        std::max(0.0, g - floor_k * (1.0 + 0.5 * (radius * radius - d * d) / (sigma * sigma)));
    k.push_back(kv);
    dk.push_back(kv > 0.0 ? -d / (sigma * sigma) * (g - floor_k) : 0.0);
    sum += kv;
    dsum += dk.back();
  }
  if (sum <= 0.0) {
    // Sample outside every kernel support: hard-assign to the nearest bin.
    out.first = std::clamp(static_cast<int>(std::lround(q)), 0, n_bins - 1);
    out.w.assign(1, 1.0);
    out.dw.assign(1, 0.0);
    return;
  }
  out.first = first;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double a = k[i] / sum;
    if (want_grad) dk[i] = (dk[i] - a * dsum) / sum / delta;
    k[i] = a;
  }
}

void check_je_inputs(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg) {
  cfg.validate();
  require(x.dims == y.dims, ErrorKind::ShapeMismatch, "JE images differ in dims");
}

}  // namespace

std::vector<double> joint_density(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg) {
  check_je_inputs(x, y, cfg);
  const int M = cfg.n_bins;
  const double du = cfg.delta_u();
  const double dv = cfg.delta_v();
  std::vector<double> P(static_cast<std::size_t>(M) * M, 0.0);
  ParzenWeights wu, wv;
  for (std::size_t k = 0; k < x.size(); ++k) {
    parzen(x.data[k], cfg.u_min, du, cfg.parzen_sigma_u, M, false, wu);
    parzen(y.data[k], cfg.v_min, dv, cfg.parzen_sigma_v, M, false, wv);
    for (std::size_t i = 0; i < wu.w.size(); ++i)
      for (std::size_t j = 0; j < wv.w.size(); ++j)
        P[(wu.first + i) * M + wv.first + j] += wu.w[i] * wv.w[j];
  }
  const double norm = 1.0 / (static_cast<double>(x.size()) * du * dv);
  for (double& p : P) p *= norm;
  return P;
}

double je_penalty(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg) {
  const auto p = joint_density(x, y, cfg);
  const double cell = cfg.delta_u() * cfg.delta_v();
  double h = 0.0;
  for (double v : p)
    if (v >= kDensityFloor) h -= cell * v * std::log(v);
  return h;
}

ImageGrid je_gradient(const ImageGrid& x, const ImageGrid& y, const JeConfig& cfg) {
  const auto p = joint_density(x, y, cfg);
  const int M = cfg.n_bins;
  const double du = cfg.delta_u();
  const double dv = cfg.delta_v();
  // dPhi/dP_ij with P the cell probability p * du * dv.
  std::vector<double> G(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] >= kDensityFloor) G[i] = -(std::log(p[i]) + 1.0);

  ImageGrid g = x.like();
  g.modality = Modality::GENERIC;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel
  {
    ParzenWeights wu, wv;
#pragma omp for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      parzen(x.data[k], cfg.u_min, du, cfg.parzen_sigma_u, M, true, wu);
      parzen(y.data[k], cfg.v_min, dv, cfg.parzen_sigma_v, M, false, wv);
      double acc = 0.0;
      for (std::size_t i = 0; i < wu.w.size(); ++i) {
        if (wu.dw[i] == 0.0) continue;
        const double* row = G.data() + (wu.first + i) * M + wv.first;
        double h = 0.0;
        for (std::size_t j = 0; j < wv.w.size(); ++j) h += row[j] * wv.w[j];
        acc += h * wu.dw[i];
      }
      g.data[k] = acc * inv_n;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Penalized deconvolution

std::string_view to_string(Penalty p) { return p == Penalty::TV ? "TV" : "JE"; }

Penalty penalty_from_string(std::string_view s) {
  if (s == "TV" || s == "tv") return Penalty::TV;
  if (s == "JE" || s == "je") return Penalty::JE;
  fail(ErrorKind::InvalidArgument, "unknown penalty '" + std::string(s) + "'");
}

std::string_view to_string(DeconvStatus s) {
  switch (s) {
    case DeconvStatus::MaxIterations: return "max_iterations";
    case DeconvStatus::Converged: return "converged";
    case DeconvStatus::StepUnderflow: return "step_underflow";
  }
  return "unknown";
}

DeconvResult penalized_deconvolve(const ImageGrid& lr, const PsfModel& model,
                                  const std::optional<ImageGrid>& mr, const DeconvConfig& cfg,
                                  const std::optional<ImageGrid>& init) {
  lr.validate();
  model.validate();
  require(cfg.beta >= 0.0 && std::isfinite(cfg.beta), ErrorKind::InvalidArgument,
          "beta must be finite and non-negative");
  require(cfg.max_iters >= 1, ErrorKind::InvalidArgument, "max_iters must be >= 1");
  require(cfg.initial_step > 0.0 && cfg.shrink > 0.0 && cfg.shrink < 1.0,
          ErrorKind::InvalidArgument, "invalid backtracking parameters");

  const auto [lo_it, hi_it] = std::minmax_element(lr.data.begin(), lr.data.end());
  const double range = *hi_it - *lo_it;
  const double eps = cfg.tv_epsilon > 0.0 ? cfg.tv_epsilon : 1e-6 * (range > 0 ? range : 1.0);

  JeConfig je;
  if (cfg.penalty == Penalty::JE) {
    require(mr.has_value(), ErrorKind::InvalidArgument, "JE penalty requires an MR image");
    require(mr->dims == lr.dims, ErrorKind::ShapeMismatch, "MR and LR differ in dims");
    if (cfg.je) {
      je = *cfg.je;
    } else {
      je = JeConfig::for_images(lr, *mr);
      je.u_max *= 1.5;
    }
    je.validate();
  }

  auto penalty = [&](const ImageGrid& x) {
    if (cfg.beta == 0.0) return 0.0;
    return cfg.penalty == Penalty::TV ? tv_penalty_smoothed(x, eps) : je_penalty(x, *mr, je);
  };
  auto penalty_grad = [&](const ImageGrid& x) {
    return cfg.penalty == Penalty::TV ? tv_gradient(x, eps) : je_gradient(x, *mr, je);
  };
  auto data_term = [&](const ImageGrid& bx) {
    double s = 0.0;
    for (std::size_t i = 0; i < bx.size(); ++i) {
      const double r = bx.data[i] - lr.data[i];
      s += r * r;
    }
    return 0.5 * s;
  };

  DeconvResult res;
  ImageGrid x = init ? *init : lr;
  require(x.dims == lr.dims, ErrorKind::ShapeMismatch, "initial image differs from LR in dims");
  for (double& v : x.data) v = std::max(v, 0.0);
  x.modality = Modality::PET;

  ImageGrid bx = apply_spatially_variant_blur(x, model);
  double f = data_term(bx) + cfg.beta * penalty(x);
  res.objective.push_back(f);
  double step = cfg.initial_step;
  ImageGrid trial = x;

  for (int it = 0; it < cfg.max_iters; ++it) {
    ImageGrid resid = bx;
    for (std::size_t i = 0; i < resid.size(); ++i) resid.data[i] -= lr.data[i];
    resid.modality = Modality::GENERIC;
    ImageGrid grad = apply_spatially_variant_blur_adjoint(resid, model);
    if (cfg.beta > 0.0) {
      const ImageGrid pg = penalty_grad(x);
      for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] += cfg.beta * pg.data[i];
    }

    if (it > 0) step = std::min(step / cfg.shrink, cfg.initial_step * 1e12);
    bool accepted = false;
    bool stationary = false;
    double f_new = f;
    ImageGrid bx_new;
    while (step >= 1e-20) {
      double descent = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        trial.data[i] = std::max(0.0, x.data[i] - step * grad.data[i]);
        descent += grad.data[i] * (trial.data[i] - x.data[i]);
      }
      if (descent == 0.0) {
        stationary = true;
        break;
      }
      bx_new = apply_spatially_variant_blur(trial, model);
      f_new = data_term(bx_new) + cfg.beta * penalty(trial);
      if (f_new <= f + cfg.sufficient_decrease * descent) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    res.iterations = it + 1;
    if (stationary) {
      res.status = DeconvStatus::Converged;
      break;
    }
    if (!accepted) {
      res.status = DeconvStatus::StepUnderflow;
      break;
    }
    std::swap(x, trial);
    bx = std::move(bx_new);
    const double change = std::abs(f - f_new) / std::max(std::abs(f), std::numeric_limits<double>::min());
    f = f_new;
    res.objective.push_back(f);
    if (change < cfg.rel_tolerance) {
      res.status = DeconvStatus::Converged;
      break;
    }
  }
  x.description = std::string(to_string(cfg.penalty)) + "-penalized deconvolution";
  res.image = std::move(x);
  return res;
}

}  // namespace petsr
