"""Simulated three-wire analog link between neighbouring modules.

A transmitter exposes one scalar in [0, 1] as a PWM duty cycle in
[0.2, 1.0]; a receiver continuously polls the line into a bounded FIFO of
binary samples and decodes the arithmetic mean. The 0.2 duty floor makes
an attached sender detectable above the 0.1 activation threshold no
matter what value it sends; an unplugged line reads constant 0 and decays
the mean until liveness drops.

Sampling is phase-stratified, like polling a real PWM line much faster
than its period: every period of ``spp`` consecutive samples draws one
uniform phase, contributing floor(spp*duty) or ceil(spp*duty) highs. The
long-run frequency of a single sample is exactly the duty cycle, while a
full 5000-sample queue decodes the sent value to within +/-0.01 with
overwhelming probability.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .prng import derive_seed

PWM_FREQUENCY_HZ = 100.0
BASE_DUTY = 0.2
DUTY_SPAN = 0.8
QUEUE_CAPACITY = 5000
ACTIVATION_THRESHOLD = 0.1
DEFAULT_SAMPLE_RATE_HZ = 1000.0

_TIME_FUZZ = 1e-9  # absorbs float noise at exact segment boundaries


class ChannelError(Exception):
    """Structural misuse of the link layer (double plug, unknown pairing)."""


class ChannelRangeError(ValueError):
    """Value outside the wire-encodable interval [0, 1]."""


@dataclass(frozen=True)
class WireSignal:
    duty_cycle: float
    frequency: float = PWM_FREQUENCY_HZ


def encode(value: float) -> WireSignal:
    """Map a [0, 1] scalar onto the [0.2, 1.0] duty-cycle interval."""
    if not 0.0 <= value <= 1.0:
        raise ChannelRangeError(f"wire value must lie in [0, 1], got {value!r}")
    return WireSignal(duty_cycle=BASE_DUTY + DUTY_SPAN * value)


def sample(signal: WireSignal, phase: float) -> int:
    """Instantaneous line level at a phase in [0, 1) of the PWM period."""
    return 1 if (phase % 1.0) < signal.duty_cycle else 0


def decode_mean(mean: float) -> "DecodeResult":
    """Interpret a queue mean: live above the threshold, then unmap the duty."""
    live = mean > ACTIVATION_THRESHOLD
    value = min(1.0, max(0.0, (mean - BASE_DUTY) / DUTY_SPAN)) if live else None
    return DecodeResult(ready=True, live=live, value=value)


@dataclass(frozen=True)
class DecodeResult:
    """ready=False means the queue is still empty (distinct from not live)."""

    ready: bool
    live: bool
    value: Optional[float]


NOT_READY = DecodeResult(ready=False, live=False, value=None)


class TxPort:
    """Single-writer transmitter end; holds the last written value."""

    def __init__(self, fabric: "ChannelFabric", label: str):
        self.fabric = fabric
        self.label = label
        self.value = 0.0
        self.rx: Optional[RxPort] = None

    def set_value(self, value: float, t: float) -> None:
        duty = encode(value).duty_cycle
        self.value = value
        rx = self.rx
        if rx is not None:
            rx._note_duty(t, duty)


class RxPort:
    """Single-reader receiver end with the bounded sample queue."""

    def __init__(self, fabric: "ChannelFabric", label: str, t0: float = 0.0):
        self.fabric = fabric
        self.label = label
        self.t0 = t0
        self.tx: Optional[TxPort] = None
        cap = fabric.queue_capacity
        self._ring = np.zeros(cap, dtype=np.uint8)
        self._head = 0
        self._filled = 0
        self._ones = 0
        self._pos = 0
        self._seed = derive_seed(fabric.seed, "rx", label)
        self._pending: list[tuple[int, float]] = []  # (start sample index, duty*spp)
        self._duty_spp = 0.0
        self._lock = threading.Lock()

    def _sample_index(self, t: float) -> int:
        return max(0, int(math.floor((t - self.t0) * self.fabric.sample_rate + _TIME_FUZZ)))

    def _note_duty(self, t: float, duty: float) -> None:
        start = int(math.ceil((t - self.t0) * self.fabric.sample_rate - _TIME_FUZZ))
        with self._lock:
            self._pending.append((max(start, 0), duty * self.fabric.samples_per_period))

    def advance(self, t: float) -> None:
        """Generate all line samples up to time t (lazy background polling)."""
        if self.fabric.ideal:
            return
        target = self._sample_index(t)
        with self._lock:
            while self._pos < target:
                while self._pending and self._pending[0][0] <= self._pos:
                    self._duty_spp = self._pending.pop(0)[1]
                stop = target
                if self._pending:
                    stop = min(stop, self._pending[0][0])
                self._head, self._filled, self._ones, self._pos = kernels.fill_samples(
                    self._ring,
                    self._head,
                    self._filled,
                    self._ones,
                    self._seed,
                    self._pos,
                    stop - self._pos,
                    self._duty_spp,
                    self.fabric.samples_per_period,
                )

    def decode(self, t: float) -> DecodeResult:
        """Advance polling to t, then average the queue."""
        if self.fabric.ideal:
            tx = self.tx
            if tx is None:
                return DecodeResult(ready=True, live=False, value=None)
            return DecodeResult(ready=True, live=True, value=min(1.0, max(0.0, tx.value)))
        self.advance(t)
        with self._lock:
            if self._filled == 0:
                return NOT_READY
            mean = self._ones / self._filled
        return decode_mean(mean)

    def queue_mean(self, t: float) -> Optional[float]:
        self.advance(t)
        with self._lock:
            if self._filled == 0:
                return None
            return self._ones / self._filled


class ChannelFabric:
    """Registry of ports and live pairings; owns the shared channel config."""

    def __init__(
        self,
        seed: int = 0,
        sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
        ideal: bool = False,
        queue_capacity: int = QUEUE_CAPACITY,
        pwm_frequency_hz: float = PWM_FREQUENCY_HZ,
    ):
        if sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.seed = seed
        self.sample_rate = float(sample_rate_hz)
        self.ideal = ideal
        self.queue_capacity = int(queue_capacity)
        self.samples_per_period = max(1, round(sample_rate_hz / pwm_frequency_hz))
        self.plug_count = 0
        self.unplug_count = 0
        self._lock = threading.Lock()

    def new_tx(self, label: str) -> TxPort:
        return TxPort(self, label)

    def new_rx(self, label: str, t0: float = 0.0) -> RxPort:
        return RxPort(self, label, t0)

    def plug(self, tx: TxPort, rx: RxPort, t: float) -> None:
        with self._lock:
            if tx.rx is not None or rx.tx is not None:
                raise ChannelError(f"double plug: {tx.label} <-> {rx.label}")
            tx.rx = rx
            rx.tx = tx
            self.plug_count += 1
        rx._note_duty(t, encode(tx.value).duty_cycle)

    def unplug(self, rx: RxPort, t: float) -> None:
        with self._lock:
            tx = rx.tx
            if tx is None:
                raise ChannelError(f"unplug of unpaired receiver {rx.label}")
            tx.rx = None
            rx.tx = None
            self.unplug_count += 1
        rx._note_duty(t, 0.0)  # open line reads low
