"""Physical-watermark design and replay-attack detection for nonlinear loops.

The package designs watermark/controller/observer gains by iterative LMI
optimization over incremental L2 gain certificates, simulates the resulting
closed loop under three-phase replay attacks, and evaluates detection
statistics Monte-Carlo style.  See README.md for the CLI entry points.
"""

__version__ = "0.1.0"
