#pragma once

#include <cstddef>

// Data-parallel inner loops used by the time steppers, in particular the
// weighted accumulation of the full increment history each fractional step.
// Scalar reference implementations always exist; an AVX2 variant is selected
// at runtime on capable x86-64 hosts. Set FRACSTEP_SIMD=scalar|avx2 to force
// a backend (forcing avx2 on an unsupported host is rejected at startup).

namespace fracstep::kernels {

enum class Isa { scalar, avx2 };

Isa active_isa();
const char* isa_name(Isa isa);

// y += a*x
void axpy(double a, const double* x, double* y, std::size_t n);

double dot(const double* x, const double* y, std::size_t n);

// out[i] = sum_j w[j] * vecs[j][i], j ascending
void weighted_sum(const double* w, const double* const* vecs, std::size_t count,
                  double* out, std::size_t n);

namespace scalar {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void weighted_sum(const double* w, const double* const* vecs, std::size_t count,
                  double* out, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported();
namespace avx2 {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void weighted_sum(const double* w, const double* const* vecs, std::size_t count,
                  double* out, std::size_t n);
}  // namespace avx2
#endif

}  // namespace fracstep::kernels
