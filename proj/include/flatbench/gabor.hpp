#pragma once

// Gabor orientation bank and per-block wrinkle magnitude / orientation.
//
// Responses are quadrature energies |even + i*odd| of the complex filter.
// Correlation runs in the frequency domain (FFTW); `convolve_direct` is the
// spatial-domain reference the FFT path is tested against.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "flatbench/error.hpp"
#include "flatbench/image.hpp"

namespace flatbench {

/// Dense row-major raster of doubles (grayscale intensities or filter energies).
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> px;

  Raster() = default;
  Raster(int w, int h, double fill = 0.0)
      : width(w), height(h), px(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {}

  double& at(int x, int y) { return px[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const noexcept { return px.empty(); }

  /// Copy of the rectangle `r`.
  Raster crop(const BlockRect& r) const {
    Raster out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
      for (int x = 0; x < r.w; ++x) out.at(x, y) = at(r.x0 + x, r.y0 + y);
    return out;
  }
};

/// Luma 0.299R + 0.587G + 0.114B.
inline Raster to_luma(const RgbImage& img) {
  Raster out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb c = img.at(x, y);
      out.at(x, y) = 0.299 * c.r + 0.587 * c.g + 0.114 * c.b;
    }
  }
  return out;
}

struct GaborParams {
  double lambda = 16.0;  // wavelength, px
  double phi = 0.0;      // phase offset, rad
  double sigma = 0.56 * 16.0;
  double gamma = 0.5;    // spatial aspect ratio
  double theta = 0.0;    // normal to the stripes, rad, [0, pi)
  int ksize = 37;

  /// Defaults tied to a wavelength: sigma = 0.56 lambda, ksize = 4 sigma
  /// rounded up to the next odd integer.
  static GaborParams for_wavelength(double lambda) {
    GaborParams p;
    p.lambda = lambda;
    p.sigma = 0.56 * lambda;
    int k = static_cast<int>(std::ceil(4.0 * p.sigma));
    if (k % 2 == 0) ++k;
    p.ksize = std::max(k, 3);
    return p;
  }

  void validate() const {
    if (!(lambda > 0.0) || !(sigma > 0.0) || !(gamma > 0.0))
      throw Error(ErrorCode::BadParams, "lambda, sigma and gamma must be positive");
    if (ksize < 3 || ksize % 2 == 0) throw Error(ErrorCode::BadParams, "ksize must be odd and >= 3");
    if (!(theta >= 0.0 && theta < std::numbers::pi)) throw Error(ErrorCode::BadParams, "theta must lie in [0, pi)");
    if (!std::isfinite(phi)) throw Error(ErrorCode::BadParams, "phi must be finite");
  }
};

/// Complex Gabor value at offset (x, y) from the kernel center.
inline std::complex<double> gabor_value(const GaborParams& p, double x, double y) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  const double xr = x * c + y * s;
  const double yr = -x * s + y * c;
  const double envelope = std::exp(-(xr * xr + p.gamma * p.gamma * yr * yr) / (2.0 * p.sigma * p.sigma));
  const double arg = 2.0 * std::numbers::pi * xr / p.lambda + p.phi;
  return {envelope * std::cos(arg), envelope * std::sin(arg)};
}

struct Kernel {
  int side = 0;
  std::vector<double> even_taps;  // row-major, side*side
  std::vector<double> odd_taps;
  double even_dc = 0.0;  // mean removed from even_taps (0 when uncorrected)

  int half() const noexcept { return side / 2; }
  /// Taps addressed by offset from the center, dx, dy in [-half, half].
  double even(int dx, int dy) const { return even_taps[static_cast<std::size_t>(dy + half()) * side + dx + half()]; }
  double odd(int dx, int dy) const { return odd_taps[static_cast<std::size_t>(dy + half()) * side + dx + half()]; }
};

inline Kernel gabor_kernel(const GaborParams& p, bool dc_correct = true) {
  p.validate();
  Kernel k;
  k.side = p.ksize;
  const int h = p.ksize / 2;
  k.even_taps.resize(static_cast<std::size_t>(p.ksize) * p.ksize);
  k.odd_taps.resize(k.even_taps.size());
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) {
      const auto g = gabor_value(p, dx, dy);
      const auto i = static_cast<std::size_t>(dy + h) * p.ksize + dx + h;
      k.even_taps[i] = g.real();
      k.odd_taps[i] = g.imag();
    }
  }
  if (dc_correct) {
    double sum = 0.0;
    for (double t : k.even_taps) sum += t;
    k.even_dc = sum / static_cast<double>(k.even_taps.size());
    for (double& t : k.even_taps) t -= k.even_dc;
  }
  return k;
}

namespace detail {

/// 64-byte aligned storage so FFTW can take its SIMD code paths.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, std::max<std::size_t>(bytes, kAlign));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

}  // namespace detail

using CVec = std::vector<std::complex<double>, detail::AlignedAllocator<std::complex<double>>>;

namespace detail {

/// Smallest n' >= n whose only prime factors are 2, 3 and 5.
inline int smooth_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int f : {2, 3, 5})
      while (r % f == 0) r /= f;
    if (r == 1) return m;
  }
}

/// Forward/backward 2D complex plans for one size. Planning is not
/// thread-safe in FFTW, so plans are built once under a global lock and
/// executed through the new-array interface afterwards; every buffer is a
/// CVec, so the alignment matches the planning arrays.
class FftPlans {
 public:
  static const FftPlans& get(int rows, int cols) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<FftPlans>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{rows, cols}];
    if (!slot) slot.reset(new FftPlans(rows, cols));
    return *slot;
  }

  void forward(CVec& in, CVec& out) const {
    fftw_execute_dft(fwd_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  }
  void backward(CVec& in, CVec& out) const {
    fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
  ~FftPlans() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

 private:
  FftPlans(int rows, int cols) {
    CVec a(static_cast<std::size_t>(rows) * cols), b(a.size());
    auto* pa = reinterpret_cast<fftw_complex*>(a.data());
    auto* pb = reinterpret_cast<fftw_complex*>(b.data());
    const unsigned flags = FFTW_ESTIMATE;
    fwd_ = fftw_plan_dft_2d(rows, cols, pa, pb, FFTW_FORWARD, flags);
    bwd_ = fftw_plan_dft_2d(rows, cols, pa, pb, FFTW_BACKWARD, flags);
  }

  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

struct FftLayout {
  int rows = 0, cols = 0;  // transform size
  int pad = 0;             // kernel radius
};

inline FftLayout layout_for(int width, int height, int radius) {
  return {smooth_size(height + 2 * radius), smooth_size(width + 2 * radius), radius};
}

/// Kernel placed for circular convolution so that the product with the
/// input spectrum yields correlation with the (even + i*odd) taps.
inline CVec kernel_spectrum(const Kernel& k, const FftLayout& lay) {
  CVec placed(static_cast<std::size_t>(lay.rows) * lay.cols);
  const int h = k.half();
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) {
      const int r = ((-dy) % lay.rows + lay.rows) % lay.rows;
      const int c = ((-dx) % lay.cols + lay.cols) % lay.cols;
      placed[static_cast<std::size_t>(r) * lay.cols + c] = {k.even(dx, dy), k.odd(dx, dy)};
    }
  }
  CVec spec(placed.size());
  FftPlans::get(lay.rows, lay.cols).forward(placed, spec);
  return spec;
}

/// Edge-replicated input placed with `pad` pixels of border, transformed.
inline CVec input_spectrum(const Raster& in, const FftLayout& lay) {
  CVec buf(static_cast<std::size_t>(lay.rows) * lay.cols);
  for (int r = 0; r < lay.rows; ++r) {
    const int y = std::clamp(r - lay.pad, 0, in.height - 1);
    for (int c = 0; c < lay.cols; ++c) {
      const int x = std::clamp(c - lay.pad, 0, in.width - 1);
      buf[static_cast<std::size_t>(r) * lay.cols + c] = in.at(x, y);
    }
  }
  CVec spec(buf.size());
  FftPlans::get(lay.rows, lay.cols).forward(buf, spec);
  return spec;
}

/// Inverse transform of in_spec * k_spec; calls `sink(x, y, energy)` for
/// every pixel of the original raster.
template <class Sink>
void energy_from_spectra(const CVec& in_spec,
                         const CVec& k_spec, const FftLayout& lay, int width,
                         int height, CVec& scratch,
                         CVec& out, Sink&& sink) {
  scratch.resize(in_spec.size());
  out.resize(in_spec.size());
  for (std::size_t i = 0; i < in_spec.size(); ++i) scratch[i] = in_spec[i] * k_spec[i];
  FftPlans::get(lay.rows, lay.cols).backward(scratch, out);
  const double norm = 1.0 / (static_cast<double>(lay.rows) * lay.cols);
  for (int y = 0; y < height; ++y) {
    const auto* row = out.data() + static_cast<std::size_t>(y + lay.pad) * lay.cols + lay.pad;
    for (int x = 0; x < width; ++x) sink(x, y, std::sqrt(std::norm(row[x])) * norm);
  }
}

}  // namespace detail

/// Per-pixel quadrature energy of `gray` correlated with `kernel`, edge
/// replication at the borders, same size as the input.
inline Raster convolve(const Raster& gray, const Kernel& kernel) {
  if (gray.width < kernel.side || gray.height < kernel.side)
    throw Error(ErrorCode::RasterTooSmall, "raster smaller than the kernel");
  const auto lay = detail::layout_for(gray.width, gray.height, kernel.half());
  const auto in_spec = detail::input_spectrum(gray, lay);
  const auto k_spec = detail::kernel_spectrum(kernel, lay);
  Raster out(gray.width, gray.height);
  CVec scratch, buf;
  detail::energy_from_spectra(in_spec, k_spec, lay, gray.width, gray.height, scratch, buf,
                              [&](int x, int y, double e) { out.at(x, y) = e; });
  return out;
}

/// Spatial-domain reference for `convolve`. O(W*H*k^2).
inline Raster convolve_direct(const Raster& gray, const Kernel& kernel) {
  if (gray.width < kernel.side || gray.height < kernel.side)
    throw Error(ErrorCode::RasterTooSmall, "raster smaller than the kernel");
  Raster out(gray.width, gray.height);
  const int h = kernel.half();
  for (int y = 0; y < gray.height; ++y) {
    for (int x = 0; x < gray.width; ++x) {
      double re = 0.0, im = 0.0;
      for (int dy = -h; dy <= h; ++dy) {
        const int sy = std::clamp(y + dy, 0, gray.height - 1);
        for (int dx = -h; dx <= h; ++dx) {
          const double v = gray.at(std::clamp(x + dx, 0, gray.width - 1), sy);
          re += kernel.even(dx, dy) * v;
          im += kernel.odd(dx, dy) * v;
        }
      }
      out.at(x, y) = std::hypot(re, im);
    }
  }
  return out;
}

/// N_o kernels at theta_i = i*pi/N_o sharing every other parameter.
class FilterBank {
 public:
  FilterBank() = default;
  FilterBank(const GaborParams& base, int n_orientations) : base_(base), cache_(std::make_shared<Cache>()) {
    if (n_orientations < 1) throw Error(ErrorCode::BadParams, "filter bank needs at least one orientation");
    for (int i = 0; i < n_orientations; ++i) {
      GaborParams p = base;
      p.theta = i * std::numbers::pi / n_orientations;
      thetas_.push_back(p.theta);
      kernels_.push_back(gabor_kernel(p));
    }
  }

  int n_o() const noexcept { return static_cast<int>(kernels_.size()); }
  const std::vector<Kernel>& kernels() const noexcept { return kernels_; }
  const std::vector<double>& thetas() const noexcept { return thetas_; }
  const GaborParams& base() const noexcept { return base_; }
  int radius() const noexcept { return kernels_.empty() ? 0 : kernels_.front().half(); }

  using Spectra = std::vector<CVec>;

  /// Kernel spectra for one transform size, computed once and shared.
  std::shared_ptr<const Spectra> spectra(const detail::FftLayout& lay) const {
    std::lock_guard lock(cache_->mu);
    auto& slot = cache_->by_size[{lay.rows, lay.cols}];
    if (!slot) {
      auto s = std::make_shared<Spectra>();
      for (const auto& k : kernels_) s->push_back(detail::kernel_spectrum(k, lay));
      slot = std::move(s);
    }
    return slot;
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<std::pair<int, int>, std::shared_ptr<const Spectra>> by_size;
  };

  GaborParams base_;
  std::vector<Kernel> kernels_;
  std::vector<double> thetas_;
  std::shared_ptr<Cache> cache_;
};

/// Wrinkle stripes run perpendicular to the filter normal that responds best.
inline double stripe_orientation(double filter_theta) {
  return std::fmod(filter_theta + std::numbers::pi / 2.0, std::numbers::pi);
}

struct BlockResponse {
  std::vector<double> per_orientation;  // M_w,(i,j) for each bank orientation
  double magnitude = 0.0;               // max over orientations
  int best_index = 0;                   // arg max, ties toward the smallest index
  double theta_star = 0.0;              // stripe orientation of the winning filter, [0, pi)
};

inline BlockResponse block_response(const Raster& block, const FilterBank& bank) {
  if (block.empty()) throw Error(ErrorCode::BadParams, "empty block");
  const auto lay = detail::layout_for(block.width, block.height, bank.radius());
  const auto in_spec = detail::input_spectrum(block, lay);
  const auto spectra = bank.spectra(lay);
  BlockResponse r;
  r.per_orientation.resize(bank.n_o(), 0.0);
  CVec scratch, buf;
  for (int i = 0; i < bank.n_o(); ++i) {
    double sum = 0.0;
    detail::energy_from_spectra(in_spec, (*spectra)[i], lay, block.width, block.height, scratch, buf,
                                [&](int, int, double e) { sum += e; });
    r.per_orientation[i] = sum;
  }
  for (int i = 1; i < bank.n_o(); ++i)
    if (r.per_orientation[i] > r.per_orientation[r.best_index]) r.best_index = i;
  r.magnitude = r.per_orientation[r.best_index];
  r.theta_star = stripe_orientation(bank.thetas()[r.best_index]);
  return r;
}

struct WrinkleField {
  BlockGrid grid;
  std::vector<double> magnitudes;      // M_w,j >= 0
  std::vector<double> orientations;    // theta*_j, stripe direction in [0, pi)
  std::vector<int> best_index;         // bank index behind theta*_j
  std::vector<double> cloth_fraction;  // share of block pixels on cloth
  std::optional<std::vector<std::vector<double>>> per_orientation;  // [i][j]

  int n_b() const noexcept { return grid.n_b(); }
  double max_magnitude() const {
    return magnitudes.empty() ? 0.0 : *std::max_element(magnitudes.begin(), magnitudes.end());
  }
};

struct FieldOptions {
  double min_cloth_fraction = 0.25;
  bool keep_per_orientation = false;
};

/// Luma is centered on the mean cloth intensity and non-cloth pixels are
/// zeroed, so both uniform cloth and the cloth/background boundary score
/// nothing; only shading variation on the cloth produces energy.
inline WrinkleField wrinkle_field(const RgbImage& img, const Mask& mask, const BlockGrid& grid,
                                  const FilterBank& bank, const FieldOptions& opt = {}) {
  if (img.width() != mask.width() || img.height() != mask.height() || grid.image_w != img.width() ||
      grid.image_h != img.height())
    throw Error(ErrorCode::BadParams, "image, mask and grid dimensions disagree");
  const Raster luma = to_luma(img);
  double mean = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (mask.at(x, y)) {
        mean += luma.at(x, y);
        ++n;
      }
  if (n > 0) mean /= static_cast<double>(n);
  Raster centered(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) centered.at(x, y) = mask.at(x, y) ? luma.at(x, y) - mean : 0.0;

  WrinkleField f;
  f.grid = grid;
  const auto nb = static_cast<std::size_t>(grid.n_b());
  f.magnitudes.assign(nb, 0.0);
  f.orientations.assign(nb, stripe_orientation(bank.thetas().front()));
  f.best_index.assign(nb, 0);
  f.cloth_fraction.assign(nb, 0.0);
  if (opt.keep_per_orientation)
    f.per_orientation.emplace(static_cast<std::size_t>(bank.n_o()), std::vector<double>(nb, 0.0));

  for (std::size_t j = 0; j < nb; ++j) {
    const BlockRect& b = grid.blocks[j];
    std::size_t cloth = 0;
    for (int y = b.y0; y < b.y0 + b.h; ++y)
      for (int x = b.x0; x < b.x0 + b.w; ++x) cloth += mask.at(x, y) ? 1 : 0;
    f.cloth_fraction[j] = static_cast<double>(cloth) / b.area();
    if (f.cloth_fraction[j] < opt.min_cloth_fraction) continue;
    const BlockResponse r = block_response(centered.crop(b), bank);
    f.magnitudes[j] = r.magnitude;
    f.orientations[j] = r.theta_star;
    f.best_index[j] = r.best_index;
    if (f.per_orientation)
      for (int i = 0; i < bank.n_o(); ++i) (*f.per_orientation)[i][j] = r.per_orientation[i];
  }
  return f;
}

/// Block magnitudes painted over the image footprint with a linear ramp
/// from dark blue (0) to yellow (field maximum).
inline RgbImage heatmap_image(const WrinkleField& f) {
  RgbImage out(f.grid.image_w, f.grid.image_h);
  const double mx = f.max_magnitude();
  for (int j = 0; j < f.n_b(); ++j) {
    const double t = mx > 0.0 ? f.magnitudes[j] / mx : 0.0;
    const Rgb c{static_cast<std::uint8_t>(std::lround(20 + t * 235)), static_cast<std::uint8_t>(std::lround(20 + t * 200)),
                static_cast<std::uint8_t>(std::lround(120 * (1.0 - t)))};
    const BlockRect& b = f.grid.blocks[j];
    for (int y = b.y0; y < b.y0 + b.h; ++y)
      for (int x = b.x0; x < b.x0 + b.w; ++x) out.set(x, y, c);
  }
  return out;
}

}  // namespace flatbench
