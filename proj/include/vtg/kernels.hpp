#pragma once

#include <cstddef>
#include <span>

// Dense double-precision kernels behind the policy math. A scalar reference
// implementation always exists; an AVX2+FMA variant is selected at runtime on
// machines that support it. The two are equivalence-tested against each other
// (they may differ in the last few ulps because of reassociation and FMA).
//
// Selection order: VTG_KERNELS=scalar|avx2|auto environment variable first
// (default auto), then CPU capability. set_backend() overrides both, for
// tests.
namespace vtg::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);
bool avx2_supported();

/// Forces a backend. Throws std::runtime_error if it is not usable here.
void set_backend(Backend b);

/// Dot product. x and y must have equal length.
double dot(std::span<const double> x, std::span<const double> y);

/// y += alpha * x. Equal lengths required.
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = A x for row-major A (m x n).
void matvec(std::size_t m, std::size_t n, const double* a, const double* x, double* y);

/// y += A^T x for row-major A (m x n); y has length n.
void matvec_t_accum(std::size_t m, std::size_t n, const double* a, const double* x,
                    double* y);

/// A += alpha * x y^T for row-major A (m x n).
void add_outer(std::size_t m, std::size_t n, double* a, double alpha, const double* x,
               const double* y);

namespace detail {
double dot_scalar(const double* x, const double* y, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
bool avx2_compiled();
}  // namespace detail

}  // namespace vtg::kern
