"""
Exceptions Module
Error types shared by the model, simulation, estimation and text-metric modules
"""
from typing import Any, Dict, Optional


class CogLoadError(Exception):
    """
    Base class for all laboratory errors

    Each subclass carries the process exit code the command line reports for it.
    """

    exit_code = 1

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = dict(context or {})

    def to_dict(self) -> Dict[str, Any]:
        """Structured form written to stderr by the command line"""
        return {
            'error': type(self).__name__,
            'message': self.message,
            'context': self.context,
        }


class ConfigError(CogLoadError):
    """Invalid or unknown configuration keys and values"""
    exit_code = 2


class NonConvergence(CogLoadError):
    """An iterative routine stopped above its tolerance"""
    exit_code = 3


class RankDeficient(CogLoadError):
    """Design matrix lost full column rank after demeaning"""
    exit_code = 3


class DataError(CogLoadError):
    """Input data is missing columns or has an unusable structure"""
    exit_code = 4


class TooFewClusters(DataError):
    """Cluster-robust inference needs at least two clusters"""


class DegenerateDocument(DataError):
    """Document too short for the requested text metric"""


class DegenerateEvent(CogLoadError):
    """Disclosure event without a price gap to incorporate"""
    exit_code = 4
