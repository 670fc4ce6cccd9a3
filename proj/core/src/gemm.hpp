#pragma once

#include <Eigen/Core>

namespace gexse::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, with cblas-style leading dimensions.
inline void gemm(bool trans_a, bool trans_b, long m, long n, long k, double alpha, const double* a, long lda,
                 const double* b, long ldb, double beta, double* c, long ldc) {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
    using Map = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
    const ConstMap ma(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
    const ConstMap mb(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
    Map mc(c, m, n, Eigen::OuterStride<>(ldc));
    if (beta == 0.0) {
        mc.setZero();
    } else if (beta != 1.0) {
        mc *= beta;
    }
    if (trans_a && trans_b) {
        mc.noalias() += alpha * ma.transpose() * mb.transpose();
    } else if (trans_a) {
        mc.noalias() += alpha * ma.transpose() * mb;
    } else if (trans_b) {
        mc.noalias() += alpha * ma * mb.transpose();
    } else {
        mc.noalias() += alpha * ma * mb;
    }
}

}  // namespace gexse::detail
