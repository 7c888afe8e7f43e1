"""
Performance profiling utilities for inkgen
"""

import logging
import threading
import time
from contextlib import contextmanager
from functools import wraps
from typing import Any, Callable, Dict, Iterator, Optional

logger = logging.getLogger(__name__)


class PerformanceProfiler:
    """Records call counts and wall-clock durations per named section"""

    def __init__(self, timer: Callable[[], float] = time.perf_counter):
        self.timer = timer
        self.profiles: Dict[str, Dict[str, Any]] = {}
        self.lock = threading.Lock()

    @contextmanager
    def section(self, name: str) -> Iterator[None]:
        start = self.timer()
        success = True
        try:
            yield
        except Exception:
            success = False
            raise
        finally:
            self._record(name, self.timer() - start, success)

    def profile(self, name: str = None):
        """Decorator for profiling function execution"""
        def decorator(func: Callable) -> Callable:
            profile_name = name or f"{func.__module__}.{func.__name__}"

            @wraps(func)
            def wrapper(*args, **kwargs):
                with self.section(profile_name):
                    return func(*args, **kwargs)

            return wrapper
        return decorator

    def _record(self, name: str, duration: float, success: bool):
        with self.lock:
            profile = self.profiles.setdefault(name, {
                'call_count': 0,
                'total_duration': 0.0,
                'min_duration': float('inf'),
                'max_duration': 0.0,
                'error_count': 0,
            })
            profile['call_count'] += 1
            profile['total_duration'] += duration
            profile['min_duration'] = min(profile['min_duration'], duration)
            profile['max_duration'] = max(profile['max_duration'], duration)
            if not success:
                profile['error_count'] += 1

    def get_profile(self, name: str) -> Optional[Dict[str, Any]]:
        with self.lock:
            if name not in self.profiles:
                return None
            profile = dict(self.profiles[name])
        profile['avg_duration'] = profile['total_duration'] / profile['call_count']
        return profile

    def reset(self):
        with self.lock:
            self.profiles.clear()


profiler = PerformanceProfiler()
