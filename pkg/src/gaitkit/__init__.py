"""Gait-based smartphone user authentication.

Pipeline: raw inertial recordings -> walking cycles -> orientation-invariant
cycle matrices -> CNN features -> PCA + one-class SVM scores -> sequential
probability ratio test.
"""

__version__ = "0.1.0"
