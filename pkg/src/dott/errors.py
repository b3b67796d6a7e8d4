"""Numerical failure signals raised by the propagators and adapters."""


class SingularGramError(RuntimeError):
    """Composite Gram matrix is numerically singular; rank adaptation needed."""


class EigenvalueCrossingError(RuntimeError):
    """Two eigenvalue-carrying modes crossed; the BO system is ill-posed here."""


class RankExplosionError(RuntimeError):
    """Tensor core ranks exceeded the configured cap during explicit stepping."""
