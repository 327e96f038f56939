"""wrcast: decomposition-based forecasting with a learned
constrained-weight recombination stage, plus the theory checks and
benchmark harness around it."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
