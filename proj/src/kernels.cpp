#include "fracstep/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace fracstep::kernels {

namespace scalar {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void weighted_sum(const double* w, const double* const* vecs, std::size_t count,
                  double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < count; ++j) s += w[j] * vecs[j][i];
    out[i] = s;
  }
}

}  // namespace scalar

namespace {

struct Dispatch {
  Isa isa;
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*weighted_sum)(const double*, const double* const*, std::size_t, double*,
                       std::size_t);
};

Dispatch select_backend() {
  Dispatch d{Isa::scalar, &scalar::axpy, &scalar::dot, &scalar::weighted_sum};
#if defined(__x86_64__) || defined(_M_X64)
  bool want_avx2 = avx2_supported();
  if (const char* env = std::getenv("FRACSTEP_SIMD")) {
    std::string s(env);
    if (s == "scalar") {
      want_avx2 = false;
    } else if (s == "avx2") {
      if (!avx2_supported())
        throw std::runtime_error("FRACSTEP_SIMD=avx2 but host lacks AVX2");
      want_avx2 = true;
    } else {
      throw std::runtime_error("unknown FRACSTEP_SIMD value: " + s);
    }
  }
  if (want_avx2) d = {Isa::avx2, &avx2::axpy, &avx2::dot, &avx2::weighted_sum};
#else
  if (const char* env = std::getenv("FRACSTEP_SIMD")) {
    if (std::string(env) != "scalar")
      throw std::runtime_error("only FRACSTEP_SIMD=scalar supported on this arch");
  }
#endif
  return d;
}

const Dispatch& backend() {
  static const Dispatch d = select_backend();
  return d;
}

}  // namespace

Isa active_isa() { return backend().isa; }

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "?";
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  backend().axpy(a, x, y, n);
}

double dot(const double* x, const double* y, std::size_t n) {
  return backend().dot(x, y, n);
}

void weighted_sum(const double* w, const double* const* vecs, std::size_t count,
                  double* out, std::size_t n) {
  if (count == 0) {
    std::memset(out, 0, n * sizeof(double));
    return;
  }
  backend().weighted_sum(w, vecs, count, out, n);
}

}  // namespace fracstep::kernels
