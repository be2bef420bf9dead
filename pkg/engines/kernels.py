"""
Word-level popcount kernels compiled with numba.

All kernels take words widened to uint64; narrower word sizes only leave the
upper bits zero, so one compiled kernel serves 8/16/32/64-bit packing.
"""
import numpy as np
from numba import njit

m1 = np.uint64(0x5555555555555555)
m2 = np.uint64(0x3333333333333333)
m4 = np.uint64(0x0F0F0F0F0F0F0F0F)
h01 = np.uint64(0x0101010101010101)


@njit(cache=True)
def popcount64(x):
    x = x - ((x >> np.uint64(1)) & m1)
    x = (x & m2) + ((x >> np.uint64(2)) & m2)
    x = (x + (x >> np.uint64(4))) & m4
    return (x * h01) >> np.uint64(56)


@njit(cache=True)
def xnor_popcount_gemm(A, B, masks):
    """
    Count agreeing bits of every row pair: out[i, j] = sum_k popcount(~(A[i,k] ^ B[j,k]) & masks[k]).

    Padding bits are zero in both operands, so XOR-ing the mask in is the
    same as complementing and masking.
    """
    M = A.shape[0]
    F = B.shape[0]
    K = A.shape[1]
    out = np.empty((M, F), dtype=np.int64)
    for i in range(M):
        for j in range(F):
            acc = np.int64(0)
            for k in range(K):
                acc += np.int64(popcount64((A[i, k] ^ B[j, k]) ^ masks[k]))
            out[i, j] = acc
    return out


@njit(cache=True)
def float_conv2d_naive(x, w, stride, ho, wo):
    """Direct-loop cross-correlation of an already padded NCHW input; the float baseline of bench."""
    N = x.shape[0]
    C = x.shape[1]
    F = w.shape[0]
    kh = w.shape[2]
    kw = w.shape[3]
    out = np.zeros((N, F, ho, wo), dtype=x.dtype)
    for n in range(N):
        for f in range(F):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                acc += x[n, c, oy * stride + i, ox * stride + j] * w[f, c, i, j]
                    out[n, f, oy, ox] = acc
    return out
