"""Hot numeric kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Set ``GEOLEAK_PURE_PYTHON=1`` to force the fallback.
Both backends expose the same functions:

``haversine_many(lat0, lon0, lat, lon)``
    distances from one point to many, in meters.
``neighbor_lists(lat, lon, ts, eps_m, eps_t_ms)``
    CSR radius neighbourhoods, self included; ``eps_t_ms < 0`` disables time.
``dbscan_expand(indptr, indices, min_pts)``
    DBSCAN labels (-1 = noise) and core flags from neighbourhoods.
``nearest_in_window(obs_ts, obs_lat, obs_lon, s_ts, s_lat, s_lon, window_ms)``
    per-observation distance to the nearest sample within the time window.
"""
import os

from . import _fallback as fallback

try:
    from . import _core as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("GEOLEAK_PURE_PYTHON", "") in ("", "0"):
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = fallback
    BACKEND = "python"

haversine_many = _impl.haversine_many
neighbor_lists = _impl.neighbor_lists
dbscan_expand = _impl.dbscan_expand
nearest_in_window = _impl.nearest_in_window

__all__ = ["BACKEND", "compiled", "fallback", "haversine_many", "neighbor_lists",
           "dbscan_expand", "nearest_in_window"]
