# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled application/rejection updates over a site-major pair list.

Only the listed (active) sites or centers are recomputed; all arrays are
updated in place.  The arithmetic mirrors ``_stage_py`` operation for
operation, so both backends produce identical numbers.
"""
cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")


def application_update(const cnp.int64_t[:] site_ptr,
                       const cnp.uint8_t[:] shell_start,
                       const double[:] dist,
                       const double[:] w_pair,
                       const double[:] cap_pair,
                       const cnp.int64_t[:] j_pair,
                       const double[:] R,
                       double[:] A,
                       double[:] a,
                       double[:] c,
                       cnp.int64_t[:] a_end,
                       const cnp.int64_t[:] active,
                       double limit,
                       double eps,
                       cnp.uint8_t[:] changed_center,
                       cnp.uint8_t[:] need):
    """Recompute the application row of every active site; returns the max change."""
    cdef Py_ssize_t n_active = active.shape[0]
    cdef Py_ssize_t q, i, k, s0, s1, end, b0, b1, old_end
    cdef double acc, s, t, v, change = 0.0, diff
    cdef bint found
    with nogil:
        for q in range(n_active):
            i = active[q]
            k = site_ptr[i]
            end = site_ptr[i + 1]
            acc = 0.0
            found = False
            b0 = end
            b1 = end
            t = 0.0
            while k < end:
                s0 = k
                s = (cap_pair[k] - R[k]) * w_pair[k]
                k += 1
                while k < end and not shell_start[k]:
                    s = s + (cap_pair[k] - R[k]) * w_pair[k]
                    k += 1
                s1 = k
                if acc + s > 1.0 + eps:
                    t = (1.0 - acc) / s
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    b0 = s0
                    b1 = s1
                    found = True
                    break
                acc = acc + s
            if (not found and limit < INF) or (found and dist[b0] > limit):
                need[i] = 1
                continue
            for k in range(site_ptr[i], b0):
                v = cap_pair[k]
                diff = v - A[k]
                if diff != 0.0:
                    A[k] = v
                    changed_center[j_pair[k]] = 1
                    if diff < 0.0:
                        diff = -diff
                    if diff > change:
                        change = diff
            for k in range(b0, b1):
                v = R[k] + t * (cap_pair[k] - R[k])
                diff = v - A[k]
                if diff != 0.0:
                    A[k] = v
                    changed_center[j_pair[k]] = 1
                    if diff < 0.0:
                        diff = -diff
                    if diff > change:
                        change = diff
            old_end = a_end[i]
            for k in range(b1, old_end):
                v = A[k]
                if v != 0.0:
                    A[k] = 0.0
                    changed_center[j_pair[k]] = 1
                    if v < 0.0:
                        v = -v
                    if v > change:
                        change = v
            a_end[i] = b1
            if found:
                a[i] = dist[b0]
                c[i] = 1.0 - t
            else:
                a[i] = INF
                c[i] = 1.0
    return change


def rejection_update(const cnp.int64_t[:] center_ptr,
                     const cnp.int64_t[:] perm,
                     const cnp.uint8_t[:] shell_start_c,
                     const double[:] dist,
                     const double[:] u_pair_c,
                     const cnp.int64_t[:] i_pair,
                     const double[:] A,
                     double[:] R,
                     double[:] r,
                     double[:] cp,
                     const cnp.int64_t[:] active,
                     double eps,
                     cnp.uint8_t[:] changed_site):
    """Recompute the rejection column of every active center; returns the max change."""
    cdef Py_ssize_t n_active = active.shape[0]
    cdef Py_ssize_t q, j, k, s0, s1, end, p, b0, b1
    cdef double acc, s, t, v, change = 0.0, diff
    cdef bint found
    with nogil:
        for q in range(n_active):
            j = active[q]
            k = center_ptr[j]
            end = center_ptr[j + 1]
            acc = 0.0
            found = False
            b0 = end
            b1 = end
            t = 0.0
            while k < end:
                s0 = k
                s = A[perm[k]] * u_pair_c[k]
                k += 1
                while k < end and not shell_start_c[k]:
                    s = s + A[perm[k]] * u_pair_c[k]
                    k += 1
                s1 = k
                if acc + s > 1.0 + eps:
                    t = (1.0 - acc) / s
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                    b0 = s0
                    b1 = s1
                    found = True
                    break
                acc = acc + s
            for k in range(center_ptr[j], end):
                p = perm[k]
                if k < b0:
                    v = 0.0
                elif k < b1:
                    v = (1.0 - t) * A[p]
                else:
                    v = A[p]
                diff = v - R[p]
                if diff != 0.0:
                    R[p] = v
                    changed_site[i_pair[p]] = 1
                    if diff < 0.0:
                        diff = -diff
                    if diff > change:
                        change = diff
            if found:
                r[j] = dist[perm[b0]]
                cp[j] = 1.0 - t
            else:
                r[j] = INF
                cp[j] = 0.0
    return change
