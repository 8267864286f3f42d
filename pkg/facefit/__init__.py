"""facefit - multi-level face model fitting with learned corrective layers"""

__version__ = "0.1.0"
