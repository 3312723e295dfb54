"""
Training-free architecture metrics for RNN and transformer search spaces.

Subpackages: :mod:`tfnas.autodiff` (reverse-mode gradients and Jacobi
eigensolvers), :mod:`tfnas.genome`, :mod:`tfnas.netbuild`,
:mod:`tfnas.metrics`, :mod:`tfnas.stats` and :mod:`tfnas.harness`.
"""
__version__ = "0.1.0"
