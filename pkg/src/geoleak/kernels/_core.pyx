# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled inner loops: radius neighbourhoods, DBSCAN expansion, windowed nearest search."""
import numpy as np

cimport numpy as cnp
from libc.math cimport asin, cos, fabs, sin, sqrt, M_PI
from libcpp.algorithm cimport sort
from libcpp.vector cimport vector

cnp.import_array()

cdef double EARTH_RADIUS_M = 6371000.0
cdef double DEG = M_PI / 180.0


cdef inline double _hav(double p1, double l1, double c1, double p2, double l2, double c2) nogil:
    cdef double s1 = sin((p2 - p1) * 0.5)
    cdef double s2 = sin((l2 - l1) * 0.5)
    cdef double h = s1 * s1 + c1 * c2 * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_M * asin(sqrt(h))


def haversine_many(double lat0, double lon0, double[::1] lat, double[::1] lon):
    cdef Py_ssize_t n = lat.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double p0 = lat0 * DEG, l0 = lon0 * DEG, c0 = cos(p0), p
    with nogil:
        for i in range(n):
            p = lat[i] * DEG
            o[i] = _hav(p0, l0, c0, p, lon[i] * DEG, cos(p))
    return out


def neighbor_lists(double[::1] lat, double[::1] lon, long long[::1] ts,
                   double eps_m, double eps_t_ms):
    """CSR neighbourhoods (self included, rows sorted by index).

    ``eps_t_ms < 0`` disables the temporal predicate.
    """
    cdef Py_ssize_t n = lat.shape[0], a, b, i, j
    order = np.argsort(lat, kind="stable").astype(np.int64)
    cdef long long[::1] od = order
    cdef vector[double] phi, lmb, cph
    phi.resize(n)
    lmb.resize(n)
    cph.resize(n)
    cdef vector[long long] pi, pj
    # meridian arc is the shortest path between two latitudes
    cdef double band = eps_m / EARTH_RADIUS_M * (1.0 + 1e-9)
    cdef bint temporal = eps_t_ms >= 0
    with nogil:
        for i in range(n):
            phi[i] = lat[i] * DEG
            lmb[i] = lon[i] * DEG
            cph[i] = cos(phi[i])
        for a in range(n):
            i = od[a]
            for b in range(a + 1, n):
                j = od[b]
                if phi[j] - phi[i] > band:
                    break
                if temporal and fabs(<double>(ts[j] - ts[i])) > eps_t_ms:
                    continue
                if _hav(phi[i], lmb[i], cph[i], phi[j], lmb[j], cph[j]) <= eps_m:
                    pi.push_back(i)
                    pj.push_back(j)
    cdef Py_ssize_t m = pi.size()
    indptr = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] ip = indptr
    indices = np.empty(n + 2 * m, dtype=np.int64)
    cdef long long[::1] ix = indices
    cdef vector[long long] fill
    fill.resize(n)
    cdef Py_ssize_t k
    with nogil:
        for i in range(n):
            ip[i + 1] = 1
        for k in range(m):
            ip[pi[k] + 1] += 1
            ip[pj[k] + 1] += 1
        for i in range(n):
            ip[i + 1] += ip[i]
        for i in range(n):
            ix[ip[i]] = i
            fill[i] = ip[i] + 1
        for k in range(m):
            ix[fill[pi[k]]] = pj[k]
            fill[pi[k]] += 1
            ix[fill[pj[k]]] = pi[k]
            fill[pj[k]] += 1
        for i in range(n):
            sort(&ix[0] + ip[i], &ix[0] + ip[i + 1])
    return indptr, indices


def dbscan_expand(long long[::1] indptr, long long[::1] indices, long long min_pts):
    """Label points (-1 noise, else 0-based cluster id) and flag core points."""
    cdef Py_ssize_t n = indptr.shape[0] - 1, i, p, q, k, head
    labels = np.full(n, -2, dtype=np.int64)
    core = np.zeros(n, dtype=np.bool_)
    cdef long long[::1] lb = labels
    cdef cnp.npy_bool[::1] cr = core
    cdef long long cid = 0
    cdef vector[long long] queue
    with nogil:
        for i in range(n):
            cr[i] = (indptr[i + 1] - indptr[i]) >= min_pts
        for i in range(n):
            if lb[i] != -2:
                continue
            if not cr[i]:
                lb[i] = -1
                continue
            lb[i] = cid
            queue.clear()
            queue.push_back(i)
            head = 0
            while head < <Py_ssize_t>queue.size():
                p = queue[head]
                head += 1
                for k in range(indptr[p], indptr[p + 1]):
                    q = indices[k]
                    if lb[q] == -2:
                        lb[q] = cid
                        if cr[q]:
                            queue.push_back(q)
                    elif lb[q] == -1:
                        lb[q] = cid
            cid += 1
    return labels, core


def nearest_in_window(long long[::1] obs_ts, double[::1] obs_lat, double[::1] obs_lon,
                      long long[::1] s_ts, double[::1] s_lat, double[::1] s_lon,
                      long long window_ms):
    """Distance to the spatially nearest sample within +-window of each observation.

    ``s_ts`` must be sorted. Observations with no sample in the window get +inf.
    """
    cdef Py_ssize_t n = obs_ts.shape[0], m = s_ts.shape[0], i, j, lo, hi, mid
    out = np.full(n, np.inf, dtype=np.float64)
    cdef double[::1] o = out
    cdef long long t0, t1
    cdef double p0, l0, c0, p, d, best
    with nogil:
        for i in range(n):
            t0 = obs_ts[i] - window_ms
            t1 = obs_ts[i] + window_ms
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) // 2
                if s_ts[mid] < t0:
                    lo = mid + 1
                else:
                    hi = mid
            if lo >= m or s_ts[lo] > t1:
                continue
            p0 = obs_lat[i] * DEG
            l0 = obs_lon[i] * DEG
            c0 = cos(p0)
            best = 1e300
            j = lo
            while j < m and s_ts[j] <= t1:
                p = s_lat[j] * DEG
                d = _hav(p0, l0, c0, p, s_lon[j] * DEG, cos(p))
                if d < best:
                    best = d
                j += 1
            o[i] = best
    return out
