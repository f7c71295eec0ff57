#pragma once

#include <Eigen/Core>

namespace pavepci::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// C(MxN) = A(MxK) * B(KxN), or += when accumulate.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c,
             bool accumulate = false) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

// C(MxN) += A(MxK) * B(NxK)^T
template <typename T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c) {
  ConstMatMap<T> A(a, m, k);
  ConstMatMap<T> B(b, n, k);
  MatMap<T> C(c, m, n);
  C.noalias() += A * B.transpose();
}

// C(MxN) = A(KxM)^T * B(KxN)
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c) {
  ConstMatMap<T> A(a, k, m);
  ConstMatMap<T> B(b, k, n);
  MatMap<T> C(c, m, n);
  C.noalias() = A.transpose() * B;
}

}  // namespace pavepci::detail

namespace pavepci::detail {

template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
Eigen::Map<Arr<T>> arr(T* p, std::size_t n) {
  return Eigen::Map<Arr<T>>(p, static_cast<Eigen::Index>(n));
}
template <typename T>
Eigen::Map<const Arr<T>> carr(const T* p, std::size_t n) {
  return Eigen::Map<const Arr<T>>(p, static_cast<Eigen::Index>(n));
}

// Plane reductions over 16 fixed lanes. The summation order depends only on
// the length, never on the pointer's alignment.
template <typename T, typename F>
double lane_reduce(std::size_t n, F term) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += term(i + j);
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += term(i);
  double total = 0.0;
  for (std::size_t j = 0; j < kLanes; ++j) total += acc[j];
  return total;
}

template <typename T>
double plane_sum(const T* p, std::size_t n) {
  return lane_reduce<T>(n, [p](std::size_t i) { return p[i]; });
}
template <typename T>
double plane_dot(const T* a, const T* b, std::size_t n) {
  return lane_reduce<T>(n, [a, b](std::size_t i) { return a[i] * b[i]; });
}
template <typename T>
double plane_centered_sq(const T* p, std::size_t n, T mean) {
  return lane_reduce<T>(n, [p, mean](std::size_t i) {
    const T d = p[i] - mean;
    return d * d;
  });
}

}  // namespace pavepci::detail
