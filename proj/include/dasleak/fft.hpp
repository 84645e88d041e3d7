#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace dasleak {

/**
 * Real-input FFT of a fixed length backed by FFTW.
 *
 * forward() produces n/2+1 bins; inverse() is unnormalized (c2r), so
 * inverse(forward(x)) == n·x. Plans use FFTW_ESTIMATE so results do not
 * depend on run-time measurement. One instance must not be used from two
 * threads at once; separate instances are independent.
 */
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(RealFft&&) noexcept;
    RealFft& operator=(RealFft&&) noexcept;

    std::size_t size() const { return n_; }
    std::size_t bins() const { return n_ / 2 + 1; }

    void forward(std::span<const double> input, std::span<std::complex<double>> spectrum);
    void inverse(std::span<const std::complex<double>> spectrum, std::span<double> output);

private:
    struct Plans;
    std::size_t n_;
    std::unique_ptr<Plans> plans_;
};

} // namespace dasleak
