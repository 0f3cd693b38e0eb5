"""
Caching Layer
In-memory store of FOM trajectories keyed by problem and parameter
"""

from collections import OrderedDict
from typing import Dict, Optional
import threading

from strom.fom import Trajectory
from strom.model import ProblemSpec


def make_key(spec: ProblemSpec, mu) -> str:
    """Cache key for one (discretization, mu) pair"""
    steps = "uniform" if spec.steps is None else ",".join(repr(s) for s in spec.steps)
    return (
        f"{spec.kind.value}:{spec.nx}x{spec.ny}:nt={spec.nt}:T={spec.t_final!r}:"
        f"steps={steps}:mu={float(mu[0])!r},{float(mu[1])!r}"
    )


class TrajectoryCache:
    """Thread-safe LRU cache of FOM trajectories"""

    def __init__(self, max_entries: int = 256):
        self.cache = OrderedDict()
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0
        self.lock = threading.Lock()

    def get(self, spec: ProblemSpec, mu) -> Optional[Trajectory]:
        key = make_key(spec, mu)
        with self.lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                self.hits += 1
                return self.cache[key]

            self.misses += 1
            return None

    def set(self, spec: ProblemSpec, mu, trajectory: Trajectory):
        key = make_key(spec, mu)
        with self.lock:
            self.cache[key] = trajectory
            self.cache.move_to_end(key)
            while len(self.cache) > self.max_entries:
                self.cache.popitem(last=False)

    def clear(self) -> int:
        """Clear all cache entries"""
        with self.lock:
            count = len(self.cache)
            self.cache.clear()
            return count

    def size(self) -> int:
        with self.lock:
            return len(self.cache)

    def get_stats(self) -> Dict:
        """Get cache statistics"""
        total_requests = self.hits + self.misses
        hit_rate = (self.hits / total_requests * 100) if total_requests > 0 else 0.0

        return {
            'size': self.size(),
            'hits': self.hits,
            'misses': self.misses,
            'hit_rate': round(hit_rate, 2),
            'max_entries': self.max_entries
        }
