"""Low-precision incomplete Cholesky preconditioning for sparse least squares."""

__version__ = "0.1.0"
