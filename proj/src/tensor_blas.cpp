#ifdef INDRNN_WITH_OPENBLAS

#include <cblas.h>

#include "indrnn/tensor.hpp"

extern "C" void openblas_set_num_threads(int);

namespace indrnn::detail {

namespace {
// Results must be bitwise reproducible across runs; multi-threaded BLAS can
// reorder reductions, so pin it to one thread.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
}  // namespace

template <>
void matmul_kernel<double>(const double* a, const double* b, double* c, std::size_t P, std::size_t Q,
                           std::size_t R) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(Q), 1.0, a, static_cast<int>(Q), b, static_cast<int>(R), 0.0, c,
                static_cast<int>(R));
}

template <>
void matmul_kernel<float>(const float* a, const float* b, float* c, std::size_t P, std::size_t Q,
                          std::size_t R) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(Q), 1.0f, a, static_cast<int>(Q), b, static_cast<int>(R), 0.0f, c,
                static_cast<int>(R));
}

template <>
void matmul_atb_accum_kernel<double>(const double* a, const double* b, double* c, std::size_t K,
                                     std::size_t P, std::size_t R) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(K), 1.0, a, static_cast<int>(P), b, static_cast<int>(R), 1.0, c,
                static_cast<int>(R));
}

template <>
void matmul_atb_accum_kernel<float>(const float* a, const float* b, float* c, std::size_t K, std::size_t P,
                                    std::size_t R) {
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(K), 1.0f, a, static_cast<int>(P), b, static_cast<int>(R), 1.0f, c,
                static_cast<int>(R));
}

template <>
void matmul_abt_kernel<double>(const double* a, const double* b, double* c, std::size_t P, std::size_t Q,
                               std::size_t R) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(Q), 1.0, a, static_cast<int>(Q), b, static_cast<int>(Q), 0.0, c,
                static_cast<int>(R));
}

template <>
void matmul_abt_kernel<float>(const float* a, const float* b, float* c, std::size_t P, std::size_t Q,
                              std::size_t R) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(P), static_cast<int>(R),
                static_cast<int>(Q), 1.0f, a, static_cast<int>(Q), b, static_cast<int>(Q), 0.0f, c,
                static_cast<int>(R));
}

}  // namespace indrnn::detail

#endif  // INDRNN_WITH_OPENBLAS
