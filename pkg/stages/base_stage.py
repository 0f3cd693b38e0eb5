"""
Base Stage Class
All pipeline stages inherit from this base class
"""

from datetime import datetime
from typing import Dict, List, Optional, Tuple
import logging
import threading
import time

from strom.errors import StageError

logger = logging.getLogger(__name__)


class BaseStage:
    """Bookkeeping shared by the pipeline stages: status, timings, failures"""

    def __init__(self, name: str, metrics_collector=None):
        self.name = name
        self.status = 'initializing'
        self.current_task: Optional[str] = None
        self.tasks_completed = 0
        self.tasks_failed = 0
        self.total_execution_time = 0.0  # milliseconds
        self.last_active = None
        self.last_error: Optional[str] = None
        self.metrics_collector = metrics_collector
        self.capabilities = []
        self._lock = threading.Lock()

    async def initialize(self):
        logger.debug(f"{self.name} ready ({', '.join(self.capabilities)})")
        self.status = 'ready'

    def start_task(self, label: str = "") -> float:
        """Mark task start; returns the perf_counter origin for end_task"""
        with self._lock:
            self.status = 'working'
            self.current_task = label or None
            self.last_active = datetime.now()
        if label:
            logger.debug(f"{self.name}: {label}")
        return time.perf_counter()

    def end_task(self, start_time: float) -> float:
        """Mark task end and report the wall time in ms to the metrics collector"""
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        with self._lock:
            self.tasks_completed += 1
            self.total_execution_time += elapsed_ms
            self.status = 'ready'
            self.current_task = None
            self.last_active = datetime.now()

        if self.metrics_collector:
            self.metrics_collector.record_stage_execution(self.name, elapsed_ms)
        return elapsed_ms

    def fail_task(self, message: str, mu: Optional[Tuple[float, float]] = None) -> StageError:
        """Put the stage in the error state and build the StageError to raise"""
        error = StageError(self.name, message, mu=mu)
        with self._lock:
            self.status = 'error'
            self.tasks_failed += 1
            self.current_task = None
            self.last_error = str(error)
            self.last_active = datetime.now()
        if self.metrics_collector:
            self.metrics_collector.record_error()
        return error

    def get_avg_execution_time(self) -> float:
        if self.tasks_completed == 0:
            return 0.0
        return self.total_execution_time / self.tasks_completed

    def get_capabilities(self) -> List[str]:
        return self.capabilities

    def get_status(self) -> Dict:
        return {
            'name': self.name,
            'status': self.status,
            'current_task': self.current_task,
            'tasks_completed': self.tasks_completed,
            'tasks_failed': self.tasks_failed,
            'avg_execution_time_ms': round(self.get_avg_execution_time(), 3),
            'last_error': self.last_error,
            'last_active': self.last_active.isoformat() if self.last_active else None
        }
