// SPDX-License-Identifier: Apache-2.0
//
// Raw matmul kernels used by the op layer. All variants accumulate into
// the output (callers zero or pre-fill as needed).

#pragma once

namespace ts2::numcore::kernels {

// c[m,n] += a[m,k] * b[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n);

// c[m,n] += a[m,k] * b[n,k]^T
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n);

// c[m,n] += a[k,m]^T * b[k,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace ts2::numcore::kernels
