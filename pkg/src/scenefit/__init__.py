"""scenefit: recover physically plausible scene layouts from reference character motion.

A 2D sagittal-plane testbed that couples a physics-based motion-imitation
controller with a stochastic scene-layout generator, optimized jointly with
PPO under contact-gated tracking rewards and unsupervised contact pose priors.
"""

import os as _os
import sys as _sys

# Single-threaded BLAS keeps repeated runs bit-identical; must be set before
# numpy is first imported.
if "numpy" not in _sys.modules:
    _os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    _os.environ.setdefault("OMP_NUM_THREADS", "1")
    _os.environ.setdefault("MKL_NUM_THREADS", "1")

__version__ = "0.1.0"
