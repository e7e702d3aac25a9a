"""Convolutional classifier for irregular clinical time series with a learned
per-instance aleatoric uncertainty head.

Subpackages and modules: ``tensor`` (numerics and RNG), ``layers``,
``bayes`` (corrupted-logit loss and predictive mean), ``model``,
``training``, ``data`` and ``eval``. ``cli`` is the command-line entry point.
"""

__version__ = "0.1.0"
