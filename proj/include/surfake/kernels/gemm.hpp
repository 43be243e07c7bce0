#pragma once

// Single-threaded row-major SGEMM building blocks used by the convolution and
// linear layers. Callers parallelize over independent blocks.
namespace surfake::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt_acc(int m, int n, int k, const float* a, const float* b, float* c);

}  // namespace surfake::kernels
