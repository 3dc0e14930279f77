"""
The Layered Motion Engine

Predicts future frames of dynamic scenes from past RGB-D frames and known
camera poses by splitting image motion into two parts:
    I.   Global motion - camera movement, known exactly from the poses
    II.  Local motion  - object movement, estimated in a multi-plane image
                         and extrapolated with a linear motion model

Disocclusions opened by the warp are infilled before alpha compositing.
"""

__version__ = "1.0.0"
__license__ = "MIT"

# Hyperparameter defaults used across the pipeline
DEFAULT_NUM_PLANES = 4         # Z
DEFAULT_DEPTH_WINDOW = 1       # s_z
DEFAULT_INFILL_ITERATIONS = 3  # g

__all__ = [
    "__version__",
    "__license__",
    "DEFAULT_NUM_PLANES",
    "DEFAULT_DEPTH_WINDOW",
    "DEFAULT_INFILL_ITERATIONS",
]
