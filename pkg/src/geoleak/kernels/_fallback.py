"""Pure numpy implementations of the compiled kernels (same signatures and results)."""
import numpy as np

EARTH_RADIUS_M = 6371000.0


def _hav(p0, l0, p, l):
    h = np.sin((p - p0) * 0.5) ** 2 + np.cos(p0) * np.cos(p) * np.sin((l - l0) * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def haversine_many(lat0, lon0, lat, lon):
    return _hav(np.radians(lat0), np.radians(lon0), np.radians(lat), np.radians(lon))


def neighbor_lists(lat, lon, ts, eps_m, eps_t_ms):
    n = len(lat)
    phi = np.radians(lat)
    lmb = np.radians(lon)
    rows = []
    for i in range(n):
        ok = _hav(phi[i], lmb[i], phi, lmb) <= eps_m
        if eps_t_ms >= 0:
            ok &= np.abs(ts - ts[i]) <= eps_t_ms
        ok[i] = True
        rows.append(np.flatnonzero(ok))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows).astype(np.int64) if rows else np.empty(0, dtype=np.int64)
    return indptr, indices


def dbscan_expand(indptr, indices, min_pts):
    n = len(indptr) - 1
    labels = np.full(n, -2, dtype=np.int64)
    core = np.diff(indptr) >= min_pts
    cid = 0
    for i in range(n):
        if labels[i] != -2:
            continue
        if not core[i]:
            labels[i] = -1
            continue
        labels[i] = cid
        queue = [i]
        head = 0
        while head < len(queue):
            p = queue[head]
            head += 1
            for q in indices[indptr[p]:indptr[p + 1]]:
                if labels[q] == -2:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
                elif labels[q] == -1:
                    labels[q] = cid
        cid += 1
    return labels, core


def nearest_in_window(obs_ts, obs_lat, obs_lon, s_ts, s_lat, s_lon, window_ms):
    out = np.full(len(obs_ts), np.inf)
    lo = np.searchsorted(s_ts, obs_ts - window_ms, side="left")
    hi = np.searchsorted(s_ts, obs_ts + window_ms, side="right")
    s_phi = np.radians(s_lat)
    s_lmb = np.radians(s_lon)
    for i in np.flatnonzero(hi > lo):
        a, b = lo[i], hi[i]
        d = _hav(np.radians(obs_lat[i]), np.radians(obs_lon[i]), s_phi[a:b], s_lmb[a:b])
        out[i] = d.min()
    return out
