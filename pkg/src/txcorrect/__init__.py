"""txcorrect: learn to detect and correct retail transaction errors.

The pipeline mirrors how corrections happen in production: the transaction
log holds corrected state, the process log holds every change, replaying
changes backwards recovers the erroneous versions, and those become training
data for a multi-label error detector and per-error value recommenders.
"""

__version__ = "0.1.0"
