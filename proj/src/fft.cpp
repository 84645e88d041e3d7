#include "dasleak/fft.hpp"

#include "dasleak/error.hpp"

#include <algorithm>
#include <cstring>
#include <fftw3.h>
#include <mutex>

namespace dasleak {

namespace {
// FFTW's planner is not re-entrant.
std::mutex planner_mutex;
} // namespace

struct RealFft::Plans {
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;

    ~Plans() {
        std::lock_guard lock(planner_mutex);
        if (fwd) fftw_destroy_plan(fwd);
        if (inv) fftw_destroy_plan(inv);
        fftw_free(real);
        fftw_free(spec);
    }
};

RealFft::RealFft(std::size_t n) : n_(n), plans_(std::make_unique<Plans>()) {
    require(n >= 2, "FFT length must be at least 2");
    std::lock_guard lock(planner_mutex);
    plans_->real = fftw_alloc_real(n);
    plans_->spec = fftw_alloc_complex(n / 2 + 1);
    const int len = static_cast<int>(n);
    plans_->fwd = fftw_plan_dft_r2c_1d(len, plans_->real, plans_->spec, FFTW_ESTIMATE);
    plans_->inv = fftw_plan_dft_c2r_1d(len, plans_->spec, plans_->real, FFTW_ESTIMATE);
    if (!plans_->fwd || !plans_->inv) throw NumericalError("FFTW planning failed");
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> spectrum) {
    require(input.size() == n_ && spectrum.size() == bins(), "FFT buffer size mismatch");
    std::copy(input.begin(), input.end(), plans_->real);
    fftw_execute(plans_->fwd);
    std::memcpy(static_cast<void*>(spectrum.data()), plans_->spec, bins() * sizeof(fftw_complex));
}

void RealFft::inverse(std::span<const std::complex<double>> spectrum, std::span<double> output) {
    require(output.size() == n_ && spectrum.size() == bins(), "FFT buffer size mismatch");
    // c2r destroys its input, so it always runs on the internal copy.
    std::memcpy(plans_->spec, spectrum.data(), bins() * sizeof(fftw_complex));
    fftw_execute(plans_->inv);
    std::copy(plans_->real, plans_->real + n_, output.begin());
}

} // namespace dasleak
