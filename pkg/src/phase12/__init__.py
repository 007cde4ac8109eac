"""Integrated Phase I-II trial engine.

Continuous MTD re-estimation combined with group-sequential GLR efficacy
testing, in parametric-logistic and order-restricted (isotonic) forms, plus
the traditional Phase I + two-stage benchmark, a Monte Carlo operating
characteristics harness, a threshold calibrator, and a live trial conductor.
"""

__version__ = "0.1.0"
