from __future__ import annotations

__version__ = "0.1.0"

from detlattice.config import RunConfig, load_config  # noqa: E402

__all__ = ["RunConfig", "__version__", "load_config"]
