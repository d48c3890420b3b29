"""Compiled inner loops for the scalar (d = q = 1) scheme recursion.

Each kernel adds one step's increment ``w[i] * drift[p] + g`` to the rows
``A[p, l + i]``, evaluating the two products, their sum and the accumulation
as separate IEEE operations (no fused multiply-add), which matches the numpy
fallback in ``schemes`` operation for operation.  numba is optional; when it
is missing ``AVAILABLE`` is False and callers use the numpy path.
"""
try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    AVAILABLE = False
    push_discrete = push_integrated = None
else:
    AVAILABLE = True

    @njit(cache=True, nogil=True)
    def push_discrete(A, l, w, drift, k2, sdw):
        """``A[p, l+i] += w[i] drift[p] + k2[i] sdw[p]``."""
        P, m = A.shape[0], w.shape[0]
        for p in range(P):
            dp = drift[p]
            sp = sdw[p]
            # a row view lets the inner loop vectorise
            row = A[p, l:l + m]
            for i in range(m):
                row[i] = row[i] + (w[i] * dp + k2[i] * sp)

    @njit(cache=True, nogil=True)
    def push_integrated(A, l, w, drift, s, Y):
        """``A[p, l+i] += w[i] drift[p] + s[p] Y[p, i]``."""
        P, m = A.shape[0], w.shape[0]
        for p in range(P):
            dp = drift[p]
            sp = s[p]
            row = A[p, l:l + m]
            y = Y[p]
            for i in range(m):
                row[i] = row[i] + (w[i] * dp + sp * y[i])
