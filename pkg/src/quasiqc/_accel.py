"""Kernel implementation selection: compiled extension if built, NumPy otherwise."""

try:
    from . import _kernels as kernels

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on the build environment
    from . import _kernels_py as kernels

    HAVE_COMPILED = False

IMPLEMENTATION = kernels.IMPLEMENTATION
