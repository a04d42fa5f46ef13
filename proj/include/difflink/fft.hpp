// SPDX-License-Identifier: Apache-2.0
//
// difflink: simulation and training of diffractive metasurface transceivers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef DIFFLINK_FFT_HPP
#define DIFFLINK_FFT_HPP

#include "difflink/core.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>
#include <vector>

namespace difflink
{

namespace detail
{
// The FFTW planner is not re-entrant; plan execution is.
inline std::mutex &fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace detail

/// In-place unnormalized 2-D DFT on a row-major rows x cols complex array.
/// Plans are created once; execute() is safe to call concurrently on distinct buffers.
class Fft2d
{
public:
    Fft2d(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols)
    {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Fft2d: empty transform");
        std::vector<cplx> tmp(rows * cols);
        auto *buf = reinterpret_cast<fftw_complex *>(tmp.data());
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fwd_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf, FFTW_FORWARD, flags);
        inv_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf, FFTW_BACKWARD, flags);
        if (!fwd_ || !inv_)
            throw std::runtime_error("Fft2d: FFTW planning failed");
    }

    Fft2d(const Fft2d &) = delete;
    Fft2d &operator=(const Fft2d &) = delete;

    ~Fft2d()
    {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (fwd_)
            fftw_destroy_plan(fwd_);
        if (inv_)
            fftw_destroy_plan(inv_);
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return rows_ * cols_; }

    void forward(cplx *data) const { run(fwd_, data); }
    /// Unnormalized inverse: forward followed by inverse scales by size().
    void inverse(cplx *data) const { run(inv_, data); }

private:
    static void run(fftw_plan p, cplx *data)
    {
        auto *buf = reinterpret_cast<fftw_complex *>(data);
        fftw_execute_dft(p, buf, buf);
    }

    std::size_t rows_;
    std::size_t cols_;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

} // namespace difflink

#endif
