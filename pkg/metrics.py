"""
Metrics Collector
Tracks wall-clock time per pipeline stage and failed cells
"""

from typing import Dict, List
from datetime import datetime
from collections import defaultdict, deque
import threading


class MetricsCollector:
    """Collects stage execution records for one CLI run"""

    def __init__(self):
        self.total_runs = 0
        self.stage_executions = defaultdict(list)
        self.run_history = deque(maxlen=100)  # Keep last 100 runs
        self.error_count = 0
        self.start_time = datetime.now()
        self.lock = threading.Lock()

    def record_run(self, command: str, label: str = ""):
        """Record a command invocation"""
        with self.lock:
            self.total_runs += 1
            self.run_history.append({
                'command': command,
                'label': label,
                'timestamp': datetime.now().isoformat()
            })

    def record_stage_execution(self, stage_name: str, execution_time_ms: float):
        """Record one stage execution"""
        with self.lock:
            self.stage_executions[stage_name].append({
                'execution_time_ms': execution_time_ms,
                'timestamp': datetime.now().isoformat()
            })

    def record_error(self):
        with self.lock:
            self.error_count += 1

    def get_run_history(self, limit: int = 20) -> List[Dict]:
        return list(self.run_history)[-limit:]

    def get_total_time_ms(self, stage_name: str) -> float:
        """Summed execution time of a stage"""
        return sum(e['execution_time_ms'] for e in self.stage_executions.get(stage_name, []))

    def get_stage_metrics(self, stage_name: str) -> Dict:
        """Get metrics for a specific stage"""
        executions = self.stage_executions.get(stage_name, [])

        if not executions:
            return {
                'stage_name': stage_name,
                'total_executions': 0,
                'total_execution_time_ms': 0.0,
                'avg_execution_time_ms': 0.0,
                'min_execution_time_ms': 0.0,
                'max_execution_time_ms': 0.0
            }

        times = [e['execution_time_ms'] for e in executions]

        return {
            'stage_name': stage_name,
            'total_executions': len(executions),
            'total_execution_time_ms': round(sum(times), 3),
            'avg_execution_time_ms': round(sum(times) / len(times), 3),
            'min_execution_time_ms': round(min(times), 3),
            'max_execution_time_ms': round(max(times), 3)
        }

    def get_summary(self) -> Dict:
        """Overall run summary"""
        elapsed = (datetime.now() - self.start_time).total_seconds()

        stage_metrics = {}
        for stage_name in sorted(self.stage_executions.keys()):
            stage_metrics[stage_name] = self.get_stage_metrics(stage_name)

        return {
            'elapsed_seconds': round(elapsed, 3),
            'total_runs': self.total_runs,
            'error_count': self.error_count,
            'stage_metrics': stage_metrics,
            'start_time': self.start_time.isoformat()
        }
