#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace simpli::detail {

// Row-major kernels on raw buffers, all accumulating into C (m x n).

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

// Below this many multiply-adds the plain loops beat Eigen's packing overhead.
inline constexpr std::size_t kSmallGemm = 4096;

/// C += A(m x k) * B(k x n)
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    if (m * n * k <= kSmallGemm) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[i * k + p];
                for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
            }
        return;
    }
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    MapM<T>(c, M, N).noalias() += MapC<T>(a, M, K) * MapC<T>(b, K, N);
}

/// C += A(m x k) * B(n x k)^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    if (m * n * k <= kSmallGemm) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T s = T(0);
                for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
                c[i * n + j] += s;
            }
        return;
    }
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    MapM<T>(c, M, N).noalias() += MapC<T>(a, M, K) * MapC<T>(b, N, K).transpose();
}

/// C += A(k x m)^T * B(k x n)
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    if (m == 0 || n == 0 || k == 0) return;
    if (m * n * k <= kSmallGemm) {
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                const T av = a[p * m + i];
                for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
            }
        return;
    }
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    MapM<T>(c, M, N).noalias() += MapC<T>(a, K, M).transpose() * MapC<T>(b, K, N);
}

/// C = A(k x m)^T * B(k x n), overwriting C.
template <typename T>
void gemm_tn_assign(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    MapM<T>(c, M, N).noalias() = MapC<T>(a, K, M).transpose() * MapC<T>(b, K, N);
}

}  // namespace simpli::detail
