"""
Pipeline Stages
"""

from .base_stage import BaseStage
from .orchestrator import StudyOrchestrator
from .prediction import PredictionStage
from .studies import StudyStage
from .training import TrainingStage
from .verification import VerificationStage

__all__ = [
    'BaseStage',
    'StudyOrchestrator',
    'TrainingStage',
    'PredictionStage',
    'VerificationStage',
    'StudyStage'
]
