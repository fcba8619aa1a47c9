"""Fingerprint-count anomaly detection over web-application method-call traces."""

from tracewatch.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
