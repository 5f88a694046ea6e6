#pragma once

// Small blocked GEMM kernels used by the convolution ops. Row-major,
// contiguous. Arithmetic order per output element is fixed by the block
// constants, never by the thread partition, so results are identical for
// any thread count.

#include <algorithm>
#include <cstring>

#include "sspnet/parallel.hpp"
#include "sspnet/tensor.hpp"

namespace ssp::detail {

template <typename T>
inline constexpr int64_t kNR = sizeof(T) == 4 ? 32 : 16;
inline constexpr int64_t kMR = 4;
inline constexpr int64_t kNC = 512;  // macro column tile kept hot across row blocks

// ---- micro kernels: C[i0:i0+mi, j0:j0+nj] (+)= A * B over the full K run.
// ATrans selects A[k][i] (A stored [K,M]) instead of A[i][k] (A stored [M,K]).

template <typename T, bool Accumulate, bool ATrans>
void micro_block(int64_t i0, int64_t mi, int64_t j0, int64_t nj, int64_t K, const T* A,
                 int64_t lda, const T* B, int64_t ldb, T* C, int64_t ldc) {
  constexpr int64_t MR = kMR;
  constexpr int64_t NR = kNR<T>;
  if (mi == MR && nj == NR) {
    T acc[MR][NR];
    for (auto& row : acc)
      for (auto& v : row) v = T(0);
    const T* bp = B + j0;
    if constexpr (ATrans) {
      const T* ap = A + i0;
      for (int64_t k = 0; k < K; ++k, bp += ldb, ap += lda) {
        const T a0 = ap[0], a1 = ap[1], a2 = ap[2], a3 = ap[3];
        for (int64_t n = 0; n < NR; ++n) {
          const T bv = bp[n];
          acc[0][n] += a0 * bv;
          acc[1][n] += a1 * bv;
          acc[2][n] += a2 * bv;
          acc[3][n] += a3 * bv;
        }
      }
    } else {
      const T* a0 = A + (i0 + 0) * lda;
      const T* a1 = A + (i0 + 1) * lda;
      const T* a2 = A + (i0 + 2) * lda;
      const T* a3 = A + (i0 + 3) * lda;
      for (int64_t k = 0; k < K; ++k, bp += ldb) {
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (int64_t n = 0; n < NR; ++n) {
          const T bv = bp[n];
          acc[0][n] += v0 * bv;
          acc[1][n] += v1 * bv;
          acc[2][n] += v2 * bv;
          acc[3][n] += v3 * bv;
        }
      }
    }
    for (int64_t m = 0; m < MR; ++m) {
      T* c = C + (i0 + m) * ldc + j0;
      if constexpr (Accumulate)
        for (int64_t n = 0; n < NR; ++n) c[n] += acc[m][n];
      else
        for (int64_t n = 0; n < NR; ++n) c[n] = acc[m][n];
    }
    return;
  }
  // ragged edge
  for (int64_t m = 0; m < mi; ++m) {
    T accrow[kNR<T>];
    for (int64_t n = 0; n < nj; ++n) accrow[n] = T(0);
    const T* bp = B + j0;
    for (int64_t k = 0; k < K; ++k, bp += ldb) {
      const T av = ATrans ? A[k * lda + i0 + m] : A[(i0 + m) * lda + k];
      for (int64_t n = 0; n < nj; ++n) accrow[n] += av * bp[n];
    }
    T* c = C + (i0 + m) * ldc + j0;
    if constexpr (Accumulate)
      for (int64_t n = 0; n < nj; ++n) c[n] += accrow[n];
    else
      for (int64_t n = 0; n < nj; ++n) c[n] = accrow[n];
  }
}

template <typename T, bool ATrans>
void gemm_outer(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb,
                T* C, int64_t ldc, bool accumulate) {
  constexpr int64_t NR = kNR<T>;
  // Column macro-tiles keep a [K x NC] panel of B hot while every row block
  // passes over it.
  auto run_cols = [&](int64_t jc0, int64_t jc1) {
    for (int64_t jc = jc0; jc < jc1; jc += kNC) {
      const int64_t jend = std::min(jc1, jc + kNC);
      for (int64_t i = 0; i < M; i += kMR) {
        const int64_t mi = std::min(kMR, M - i);
        for (int64_t j = jc; j < jend; j += NR) {
          const int64_t nj = std::min(NR, jend - j);
          if (accumulate)
            micro_block<T, true, ATrans>(i, mi, j, nj, K, A, lda, B, ldb, C, ldc);
          else
            micro_block<T, false, ATrans>(i, mi, j, nj, K, A, lda, B, ldb, C, ldc);
        }
      }
    }
  };
  const int64_t work = M * N * K;
  if (work < (1 << 16)) {
    run_cols(0, N);
    return;
  }
  const int threads = num_threads();
  if (N >= 2 * NR * threads || M < 2 * kMR) {
    const int64_t tiles = (N + NR - 1) / NR;
    parallel_for(0, tiles, 1,
                 [&](int64_t lo, int64_t hi) { run_cols(lo * NR, std::min(N, hi * NR)); });
  } else {
    parallel_for(0, M, kMR, [&](int64_t lo, int64_t hi) {
      for (int64_t jc = 0; jc < N; jc += kNC) {
        const int64_t jend = std::min(N, jc + kNC);
        for (int64_t i = lo; i < hi; i += kMR) {
          const int64_t mi = std::min(kMR, hi - i);
          for (int64_t j = jc; j < jend; j += NR) {
            const int64_t nj = std::min(NR, jend - j);
            if (accumulate)
              micro_block<T, true, ATrans>(i, mi, j, nj, K, A, lda, B, ldb, C, ldc);
            else
              micro_block<T, false, ATrans>(i, mi, j, nj, K, A, lda, B, ldb, C, ldc);
          }
        }
      }
    });
  }
}

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate) {
  gemm_outer<T, false>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

// C[M,N] (+)= A[K,M]^T * B[K,N] -- the weight-gradient shape: both operands
// are streamed along K (rows), C stays small.
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate) {
  gemm_outer<T, true>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

// C[M,N] (+)= A[M,K] * B[N,K]^T (dot products over contiguous K). Keep K
// modest; the large-K weight-gradient case belongs to gemm_tn.
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb,
             T* C, int64_t ldc, bool accumulate) {
  constexpr int64_t L = 8;   // accumulator lanes, fixed reduction order
  constexpr int64_t JB = 8;  // B rows kept hot per pass
  auto rows = [&](int64_t i0, int64_t i1) {
    for (int64_t j0 = 0; j0 < N; j0 += JB) {
      const int64_t j1 = std::min(N, j0 + JB);
      for (int64_t i = i0; i < i1; ++i) {
        const T* a = A + i * lda;
        for (int64_t j = j0; j < j1; ++j) {
          const T* b = B + j * ldb;
          T lane[L] = {};
          int64_t k = 0;
          for (; k + L <= K; k += L)
            for (int64_t l = 0; l < L; ++l) lane[l] += a[k + l] * b[k + l];
          T tail = T(0);
          for (; k < K; ++k) tail += a[k] * b[k];
          T dot = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                  ((lane[4] + lane[5]) + (lane[6] + lane[7]));
          dot += tail;
          if (accumulate)
            C[i * ldc + j] += dot;
          else
            C[i * ldc + j] = dot;
        }
      }
    }
  };
  if (M * N * K < (1 << 16))
    rows(0, M);
  else
    parallel_for(0, M, 1, rows);
}

// out[N,M] = in[M,N]^T
template <typename T>
void transpose(int64_t M, int64_t N, const T* in, T* out) {
  constexpr int64_t BL = 32;
  if (M * N >= (1 << 18)) {
    parallel_for(0, (M + BL - 1) / BL, 1, [&](int64_t blo, int64_t bhi) {
      for (int64_t ib = blo; ib < bhi; ++ib) {
        const int64_t i0 = ib * BL, i1 = std::min(M, i0 + BL);
        for (int64_t j0 = 0; j0 < N; j0 += BL) {
          const int64_t j1 = std::min(N, j0 + BL);
          for (int64_t i = i0; i < i1; ++i)
            for (int64_t j = j0; j < j1; ++j) out[j * M + i] = in[i * N + j];
        }
      }
    });
    return;
  }
  for (int64_t i0 = 0; i0 < M; i0 += BL)
    for (int64_t j0 = 0; j0 < N; j0 += BL) {
      const int64_t i1 = std::min(M, i0 + BL), j1 = std::min(N, j0 + BL);
      for (int64_t i = i0; i < i1; ++i)
        for (int64_t j = j0; j < j1; ++j) out[j * M + i] = in[i * N + j];
    }
}

}  // namespace ssp::detail
