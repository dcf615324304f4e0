#include "vtg/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace vtg::kern {

namespace {

struct Dispatch {
  Backend which;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

Dispatch make_dispatch(Backend b) {
  if (b == Backend::avx2) return {Backend::avx2, detail::dot_avx2, detail::axpy_avx2};
  return {Backend::scalar, detail::dot_scalar, detail::axpy_scalar};
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend resolve_initial() {
  const char* env = std::getenv("VTG_KERNELS");
  std::string choice = env ? env : "auto";
  if (choice == "scalar") return Backend::scalar;
  if (choice == "avx2") {
    if (!avx2_supported())
      throw std::runtime_error("VTG_KERNELS=avx2 but AVX2 is not usable on this machine");
    return Backend::avx2;
  }
  if (choice != "auto")
    throw std::runtime_error("VTG_KERNELS must be scalar, avx2 or auto (got '" + choice +
                             "')");
  return avx2_supported() ? Backend::avx2 : Backend::scalar;
}

Dispatch& dispatch() {
  static Dispatch d = make_dispatch(resolve_initial());
  return d;
}

}  // namespace

bool avx2_supported() { return detail::avx2_compiled() && cpu_has_avx2(); }

Backend active_backend() { return dispatch().which; }

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported())
    throw std::runtime_error("AVX2 backend is not usable on this machine");
  dispatch() = make_dispatch(b);
}

double dot(std::span<const double> x, std::span<const double> y) {
  return dispatch().dot(x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  dispatch().axpy(alpha, x.data(), y.data(), x.size());
}

void matvec(std::size_t m, std::size_t n, const double* a, const double* x, double* y) {
  const auto d = dispatch().dot;
  for (std::size_t i = 0; i < m; ++i) y[i] = d(a + i * n, x, n);
}

void matvec_t_accum(std::size_t m, std::size_t n, const double* a, const double* x,
                    double* y) {
  const auto ax = dispatch().axpy;
  for (std::size_t i = 0; i < m; ++i) {
    if (x[i] != 0.0) ax(x[i], a + i * n, y, n);
  }
}

void add_outer(std::size_t m, std::size_t n, double* a, double alpha, const double* x,
               const double* y) {
  const auto ax = dispatch().axpy;
  for (std::size_t i = 0; i < m; ++i) {
    const double s = alpha * x[i];
    if (s != 0.0) ax(s, y, a + i * n, n);
  }
}

}  // namespace vtg::kern
