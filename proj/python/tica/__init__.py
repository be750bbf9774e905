"""Source separation with empirical population priors.

Thin re-export of the compiled core. Installed builds place the extension
inside this package; in-tree test runs find it on sys.path next to the
build directory.
"""

try:
    from ._tica_core import *  # noqa: F401,F403
    from . import _tica_core as _core  # noqa: F401
except ImportError:
    from _tica_core import *  # noqa: F401,F403
    import _tica_core as _core  # noqa: F401

__version__ = "0.1.0"
