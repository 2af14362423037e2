#pragma once

#include <cstdint>
#include <queue>
#include <vector>

#include "hgan/dataio.hpp"
#include "hgan/errors.hpp"

namespace hgan {

struct RefineParams {
  int64_t median_kernel = 5;  // odd
  int64_t close_radius = 2;
  int64_t erode_radius = 1;
};

inline void validate(const RefineParams& p) {
  require(p.median_kernel >= 1 && p.median_kernel % 2 == 1, Err::InvalidKernel,
          "median kernel must be odd and >= 1");
  require(p.close_radius >= 0 && p.erode_radius >= 0, Err::InvalidKernel, "radii must be >= 0");
}

// Majority vote over the k x k neighborhood; borders replicate edge pixels.
inline MaskImage median_filter(const MaskImage& mask, int64_t k) {
  require(k % 2 == 1, Err::InvalidKernel, "median kernel must be odd");
  require(k >= 1 && k <= mask.h && k <= mask.w, Err::InvalidKernel, "median kernel too large");
  if (k == 1) return mask;
  const int64_t r = k / 2;
  MaskImage out(mask.h, mask.w);
  for (int64_t y = 0; y < mask.h; ++y)
    for (int64_t x = 0; x < mask.w; ++x) {
      int64_t ones = 0;
      for (int64_t dy = -r; dy <= r; ++dy)
        for (int64_t dx = -r; dx <= r; ++dx) {
          const int64_t yy = std::clamp(y + dy, int64_t{0}, mask.h - 1);
          const int64_t xx = std::clamp(x + dx, int64_t{0}, mask.w - 1);
          ones += mask.at(yy, xx);
        }
      out.at(y, x) = ones * 2 > k * k ? 1 : 0;
    }
  return out;
}

// Keeps the 8-connected foreground component of maximum area; ties go to the
// component met first in row-major order. All-zero masks pass through.
inline MaskImage keep_largest_component(const MaskImage& mask) {
  std::vector<int32_t> label(mask.bits.size(), -1);
  int32_t n_labels = 0;
  std::vector<int64_t> areas;
  for (int64_t y = 0; y < mask.h; ++y)
    for (int64_t x = 0; x < mask.w; ++x) {
      if (!mask.at(y, x) || label[y * mask.w + x] >= 0) continue;
      const int32_t id = n_labels++;
      int64_t area = 0;
      std::queue<std::pair<int64_t, int64_t>> q;
      q.push({y, x});
      label[y * mask.w + x] = id;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        ++area;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= mask.h || nx < 0 || nx >= mask.w) continue;
            if (!mask.at(ny, nx) || label[ny * mask.w + nx] >= 0) continue;
            label[ny * mask.w + nx] = id;
            q.push({ny, nx});
          }
      }
      areas.push_back(area);
    }
  if (n_labels == 0) return mask;
  int32_t best = 0;
  for (int32_t i = 1; i < n_labels; ++i)
    if (areas[i] > areas[best]) best = i;
  MaskImage out(mask.h, mask.w);
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = label[i] == best ? 1 : 0;
  return out;
}

namespace detail {
// Square structuring element of side 2r+1; pixels outside the frame count as 0.
inline MaskImage morph(const MaskImage& mask, int64_t radius, bool dilate) {
  if (radius == 0) return mask;
  MaskImage out(mask.h, mask.w);
  for (int64_t y = 0; y < mask.h; ++y)
    for (int64_t x = 0; x < mask.w; ++x) {
      uint8_t v = dilate ? 0 : 1;
      for (int64_t dy = -radius; dy <= radius && v == (dilate ? 0 : 1); ++dy)
        for (int64_t dx = -radius; dx <= radius; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          const uint8_t bit =
              (yy < 0 || yy >= mask.h || xx < 0 || xx >= mask.w) ? 0 : mask.at(yy, xx);
          if (dilate && bit) {
            v = 1;
            break;
          }
          if (!dilate && !bit) {
            v = 0;
            break;
          }
        }
      out.at(y, x) = v;
    }
  return out;
}
}  // namespace detail

inline MaskImage dilate(const MaskImage& mask, int64_t radius) {
  require(radius >= 0, Err::InvalidKernel, "radius must be >= 0");
  return detail::morph(mask, radius, true);
}

inline MaskImage erode(const MaskImage& mask, int64_t radius) {
  require(radius >= 0, Err::InvalidKernel, "radius must be >= 0");
  return detail::morph(mask, radius, false);
}

inline MaskImage morph_close(const MaskImage& mask, int64_t radius) {
  require(radius >= 0, Err::InvalidKernel, "radius must be >= 0");
  return erode(dilate(mask, radius), radius);
}

// median -> largest component -> close -> erode, in that order.
inline MaskImage refine_mask(const MaskImage& mask, const RefineParams& params) {
  validate(params);
  MaskImage m = median_filter(mask, params.median_kernel);
  m = keep_largest_component(m);
  m = morph_close(m, params.close_radius);
  return erode(m, params.erode_radius);
}

// Foreground pixels copied, background set to fill in all channels.
inline ImageSample apply_mask(const ImageSample& image, const MaskImage& mask, double fill) {
  require(mask.h == image.height() && mask.w == image.width(), Err::ShapeMismatch,
          "apply_mask dims differ");
  require(fill >= -1.0 && fill <= 1.0, Err::InvalidConfig, "fill must lie in [-1,1]");
  ImageSample out = image;
  for (int64_t ch = 0; ch < out.pixels.c; ++ch)
    for (int64_t y = 0; y < out.pixels.h; ++y)
      for (int64_t x = 0; x < out.pixels.w; ++x)
        if (!mask.at(y, x)) out.pixels.at(ch, y, x) = fill;
  return out;
}

}  // namespace hgan
