"""The scale function s and its first three derivatives per family."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainViolation, NonPositive, Overflow, ScaleFamily, as_family

# exp(709.8) overflows float64; stop earlier so downstream Hessian terms
# (which multiply several factors of s) never silently degrade to inf.
EXP_OVERFLOW_T = 700.0


@dataclass(frozen=True)
class ScaleEval:
    """s(t) and derivatives s1, s2, s3, evaluated elementwise."""

    s: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray


def scale_eval(family, t, validate: bool = True) -> ScaleEval:
    """Evaluate (s, s1, s2, s3) at t (scalar or array).

    Linear: (t, 1, 0, 0) on t > 0.  Exponential: all four equal exp(t).

    Raises DomainViolation for the linear family at t <= 0 and Overflow for
    the exponential family at t > 700.
    """
    family = as_family(family)
    t = np.asarray(t, dtype=float)
    if family is ScaleFamily.LINEAR:
        if validate and np.any(t <= 0.0):
            raise DomainViolation("linear scale requires x'gamma > 0 at every point")
        one = np.ones_like(t)
        zero = np.zeros_like(t)
        return ScaleEval(s=t, s1=one, s2=zero, s3=zero)
    if np.any(t > EXP_OVERFLOW_T):
        raise Overflow(f"exp scale index exceeds {EXP_OVERFLOW_T}")
    s = np.exp(t)
    return ScaleEval(s=s, s1=s, s2=s, s3=s)


def scale_inverse(family, s_value):
    """The t with s(t) = s_value: identity for linear, log for exponential."""
    family = as_family(family)
    s_value = np.asarray(s_value, dtype=float)
    if np.any(s_value <= 0.0):
        raise NonPositive("scale values must be strictly positive")
    if family is ScaleFamily.LINEAR:
        return s_value
    return np.log(s_value)
