#pragma once

// Blind Richardson-Lucy deconvolution with symmetric border handling.

#include <cmath>
#include <functional>
#include <string>

#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/psf.hpp"
#include "dcnn/regressor.hpp"

namespace dcnn {

inline constexpr double kRlEpsilon = 1e-12;

struct DeconvParams {
  int outer_iterations = 10;
  int image_iterations_per_outer = 5;
  int psf_iterations_per_outer = 5;
  bool psf_frozen = false;

  void validate() const {
    detail::require(outer_iterations >= 1 && image_iterations_per_outer >= 1 && psf_iterations_per_outer >= 1,
                    "DeconvParams: iteration counts must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const DeconvParams& p) {
  j = {{"outer_iterations", p.outer_iterations},
       {"image_iterations_per_outer", p.image_iterations_per_outer},
       {"psf_iterations_per_outer", p.psf_iterations_per_outer},
       {"psf_frozen", p.psf_frozen},
       {"padding", "symmetric"}};
}

namespace detail {

inline void require_non_negative(const GrayImage& img, const char* what) {
  for (double v : img.pixels())
    if (!(v >= 0.0)) throw InvalidArgument(std::string(what) + " must be non-negative and finite");
}

inline void require_psf(const GrayImage& psf) {
  require_non_negative(psf, "psf");
  if (psf.width() % 2 == 0 || psf.height() % 2 == 0) throw InvalidArgument("psf sides must be odd");
  if (std::abs(sum(psf) - 1.0) > 1e-6) throw InvalidArgument("psf must sum to 1");
}

/// observed / max(estimate * psf, eps), with symmetric padding.
inline GrayImage rl_ratio(const GrayImage& estimate, const GrayImage& observed, const GrayImage& psf) {
  GrayImage ratio = convolve2d(estimate, psf, Padding::symmetric);
  auto r = ratio.pixels();
  auto o = observed.pixels();
  for (std::size_t p = 0; p < r.size(); ++p) r[p] = o[p] / std::max(r[p], kRlEpsilon);
  return ratio;
}

}  // namespace detail

/// estimate' = estimate . [(observed / (estimate * psf)) * flip(psf)].
inline GrayImage rl_image_step(const GrayImage& estimate, const GrayImage& observed, const GrayImage& psf) {
  detail::require(estimate.same_shape(observed), "rl_image_step: estimate and observed differ in shape");
  detail::require_non_negative(estimate, "rl_image_step: estimate");
  detail::require_non_negative(observed, "rl_image_step: observed");
  detail::require_psf(psf);
  const GrayImage ratio = detail::rl_ratio(estimate, observed, psf);
  GrayImage out = convolve2d(ratio, flipped(psf), Padding::symmetric);
  auto e = estimate.pixels();
  auto c = out.pixels();
  for (std::size_t p = 0; p < c.size(); ++p) c[p] = std::max(0.0, e[p] * c[p]);
  return out;
}

/// Multiplicative PSF update with the image fixed, renormalized to unit sum.
/// The PSF keeps its window; every tap v is scaled by
/// sum_y ratio(y) img(y - v) / sum_y img(y - v) over the padded image.
inline GrayImage rl_psf_step(const GrayImage& psf_estimate, const GrayImage& observed, const GrayImage& image_estimate) {
  detail::require(image_estimate.same_shape(observed), "rl_psf_step: image and observed differ in shape");
  detail::require_non_negative(image_estimate, "rl_psf_step: image estimate");
  detail::require_non_negative(observed, "rl_psf_step: observed");
  detail::require_psf(psf_estimate);
  if (psf_estimate.width() > observed.width() || psf_estimate.height() > observed.height())
    throw InvalidArgument("rl_psf_step: psf larger than image");

  const GrayImage ratio = detail::rl_ratio(image_estimate, observed, psf_estimate);
  const int cx = psf_estimate.width() / 2, cy = psf_estimate.height() / 2;
  const GrayImage padded = detail::pad(image_estimate, cx, cy, Padding::symmetric);
  const int W = observed.width(), H = observed.height();

  GrayImage out(psf_estimate.width(), psf_estimate.height(), 0.0);
  for (int j = 0; j < psf_estimate.height(); ++j)
    for (int i = 0; i < psf_estimate.width(); ++i) {
      if (psf_estimate(i, j) == 0.0) continue;
      // same offsets as convolve2d: tap (i, j) reads padded(x + 2cx - i, y + 2cy - j)
      const int ox = 2 * cx - i, oy = 2 * cy - j;
      double num = 0.0, den = 0.0;
      for (int y = 0; y < H; ++y) {
        const double* src = padded.row(y + oy).data() + ox;
        const double* rat = ratio.row(y).data();
        for (int x = 0; x < W; ++x) {
          num += rat[x] * src[x];
          den += src[x];
        }
      }
      out(i, j) = psf_estimate(i, j) * (den > 0.0 ? num / den : 1.0);
    }
  const double total = sum(out);
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("rl_psf_step: degenerate psf update");
  for (double& v : out.pixels()) v /= total;
  return out;
}

/// sum(observed log(blur) - blur), the Poisson log-likelihood up to a constant.
inline double poisson_log_likelihood(const GrayImage& estimate, const GrayImage& observed, const GrayImage& psf) {
  const GrayImage blur = convolve2d(estimate, psf, Padding::symmetric);
  double ll = 0.0;
  for (std::size_t p = 0; p < blur.size(); ++p) {
    const double b = std::max(blur.pixels()[p], kRlEpsilon);
    ll += observed.pixels()[p] * std::log(b) - b;
  }
  return ll;
}

struct DeconvResult {
  GrayImage restored;
  GrayImage psf;
};

/// Called after every inner step with the current estimates.
struct DeconvEvent {
  int outer = 0;
  int inner = 0;
  bool psf_step = false;
  const GrayImage& observed;
  const GrayImage& estimate;
  const GrayImage& psf;
};
using DeconvObserver = std::function<void(const DeconvEvent&)>;

/// Normalizes observed by its maximum and the PSF to unit sum, then
/// alternates image and PSF update blocks. The image block runs first in
/// each outer iteration.
inline DeconvResult blind_deconvolve(const GrayImage& observed, const GrayImage& init_psf, const DeconvParams& params,
                                     const DeconvObserver& observer = {}) {
  params.validate();
  detail::require_non_negative(observed, "blind_deconvolve: observed");
  detail::require_non_negative(init_psf, "blind_deconvolve: psf");
  const double peak = max_value(observed);
  if (!(peak > 0.0)) throw DataError("blind_deconvolve: empty map");
  GrayImage obs = observed;
  for (double& v : obs.pixels()) v /= peak;
  GrayImage psf = init_psf;
  const double psf_sum = sum(psf);
  if (!(psf_sum > 0.0)) throw InvalidArgument("blind_deconvolve: psf sums to zero");
  for (double& v : psf.pixels()) v /= psf_sum;

  GrayImage estimate = obs;
  for (int outer = 0; outer < params.outer_iterations; ++outer) {
    for (int k = 0; k < params.image_iterations_per_outer; ++k) {
      estimate = rl_image_step(estimate, obs, psf);
      if (observer) observer({outer, k, false, obs, estimate, psf});
    }
    if (params.psf_frozen) continue;
    for (int k = 0; k < params.psf_iterations_per_outer; ++k) {
      psf = rl_psf_step(psf, obs, estimate);
      if (observer) observer({outer, k, true, obs, estimate, psf});
    }
  }
  if (!all_finite(estimate)) throw NumericalError("blind_deconvolve: non-finite estimate");
  return {std::move(estimate), std::move(psf)};
}

inline DeconvResult blind_deconvolve(const ProbabilityMap& observed, const MappingFilter& init_psf,
                                     const DeconvParams& params, const DeconvObserver& observer = {}) {
  for (double v : observed.image.pixels())
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("blind_deconvolve: probability map must lie in [0,1]");
  return blind_deconvolve(observed.image, init_psf.weights(), params, observer);
}

}  // namespace dcnn
