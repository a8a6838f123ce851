"""Traveling waves of a coagulation equation with a borderline
homogeneity-one kernel: dispersion roots, a history-marching Volterra
solver, regime asymptotics and the shooting loop around them."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
