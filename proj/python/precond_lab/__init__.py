"""Preconditioned gradient descent laboratory.

Thin python surface over the C++ core: dense conditioning utilities,
differentiable loss models, the preconditioned optimizer family,
regularization schemes, batch-normalization preconditioning and the
verification suites.
"""

from precond_lab._core import *  # noqa: F401,F403
from precond_lab._core import __doc__  # noqa: F401
