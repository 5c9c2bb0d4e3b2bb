"""Training autoregressive forecasters of dynamical systems over multi-step horizons.

Modules: ``dynamics`` (systems, integrators, Lyapunov spectra), ``net``
(residual MLP with flat parameters), ``arloss`` (horizon losses and their
gradients), ``optimize`` (training, curricula, sweeps), ``landscape``
(loss-landscape probes), ``scheduler`` (joint T/eta scheduling) and ``cli``.
"""

__version__ = "0.1.0"
