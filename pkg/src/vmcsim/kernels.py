"""Selects the PWM sampling kernel: compiled extension if built, numpy fallback otherwise."""

from __future__ import annotations

try:
    from . import _pwm_cy as _impl  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on build environment
    from . import _pwm_py as _impl

fill_samples = _impl.fill_samples
BACKEND: str = _impl.BACKEND
