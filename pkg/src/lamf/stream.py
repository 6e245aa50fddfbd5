"""Double-buffered layer-weight streaming and the transfer/compute schedule model.

Weights are loaded one layer at a time into two slots. In async mode a
dedicated loader thread prefetches layer l+1 while layer l computes, hiding
transfer time behind kernel execution; in sync mode every load happens in
the compute thread, serializing transfer and compute. Either way at most
two layers are resident on top of the persistent tensors.

`plan_schedule` is the analytic counterpart used to predict and compare the
two modes:

    sync  total = sum_l (t_t[l] + t_c[l])
    async total = t_t[0] + sum_l max(t_c[l], t_t[l+1]),  t_t[L] := 0
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValueError, ModelIOError, StateError
from .model import LayerWeights
from .modelfile import ModelFile, per_layer_bytes, persistent_bytes


@dataclass
class ScheduleCosts:
    """Per-layer compute and transfer times, in seconds (or any one unit)."""

    compute: np.ndarray
    transfer: np.ndarray

    def __post_init__(self):
        self.compute = np.asarray(self.compute, dtype=np.float64)
        self.transfer = np.asarray(self.transfer, dtype=np.float64)
        if self.compute.ndim != 1 or self.compute.shape != self.transfer.shape:
            raise InvalidValueError("compute and transfer must be 1-d arrays of equal length")
        if self.compute.size < 1:
            raise InvalidValueError("need at least one layer")
        if (self.compute < 0).any() or (self.transfer < 0).any():
            raise InvalidValueError("costs must be non-negative")

    @property
    def n_layers(self) -> int:
        return self.compute.size


@dataclass
class Timeline:
    """Start/end events per layer for both transfer and compute."""

    mode: str
    transfer_start: np.ndarray
    transfer_end: np.ndarray
    compute_start: np.ndarray
    compute_end: np.ndarray
    total_time: float


def plan_schedule(costs: ScheduleCosts, mode: str) -> Timeline:
    """Build the event timeline for one forward pass in the given mode."""
    tc, tt = costs.compute, costs.transfer
    L = costs.n_layers
    ts = np.zeros(L)
    te = np.zeros(L)
    cs = np.zeros(L)
    ce = np.zeros(L)
    if mode == "sync":
        now = 0.0
        for l in range(L):
            ts[l] = now
            te[l] = ts[l] + tt[l]
            cs[l] = te[l]
            ce[l] = cs[l] + tc[l]
            now = ce[l]
    elif mode == "async":
        # transfer of layer l+1 starts once layer l's compute starts (the
        # loader is serial, so never before the previous transfer finished)
        te[0] = tt[0]
        for l in range(L):
            cs[l] = max(ce[l - 1], te[l]) if l else te[0]
            ce[l] = cs[l] + tc[l]
            if l + 1 < L:
                ts[l + 1] = max(te[l], cs[l])
                te[l + 1] = ts[l + 1] + tt[l + 1]
    else:
        raise InvalidValueError(f"unknown schedule mode {mode!r}")
    return Timeline(mode, ts, te, cs, ce, float(ce[-1]))


_EMPTY, _LOADING, _READY, _IN_USE, _FAILED = "empty", "loading", "ready", "in-use", "failed"


@dataclass
class LayerBuffer:
    """One of the two resident weight slots."""

    slot_id: int
    layer: int = -1
    state: str = _EMPTY
    weights: LayerWeights | None = None
    nbytes: int = 0
    error: Exception | None = None
    load_seconds: float = 0.0

    def clear(self):
        self.layer = -1
        self.state = _EMPTY
        self.weights = None
        self.nbytes = 0
        self.error = None


@dataclass
class TransferRecord:
    layer: int
    seconds: float


class LayerStreamer:
    """Serves layer weights in decode order with one in-flight prefetch.

    Exactly one loader thread and one compute thread touch the slots; all
    state transitions happen under one condition variable. The compute side
    only ever sees slots in the ready state.
    """

    def __init__(self, model_file: ModelFile, prefetch: bool = True,
                 transfer_delay_s: float = 0.0):
        self._mf = model_file
        self.config = model_file.config
        self.prefetch = prefetch
        self.transfer_delay_s = float(transfer_delay_s)
        self._layer_bytes = per_layer_bytes(self.config)
        self.persistent_bytes = persistent_bytes(self.config)
        self._slots = [LayerBuffer(0), LayerBuffer(1)]
        self._cond = threading.Condition()
        self._requests: deque[tuple[LayerBuffer, int]] = deque()
        self._closed = False
        self._in_use: LayerBuffer | None = None
        self.transfers: list[TransferRecord] = []
        self.max_resident_bytes = self.persistent_bytes
        # first layer is loaded at construction, so the first acquire is free
        self._load(self._slots[0], 0)
        self._thread = None
        if prefetch:
            self._thread = threading.Thread(target=self._loader_loop,
                                            name="lamf-loader", daemon=True)
            self._thread.start()

    # -- loading ---------------------------------------------------------

    def _load(self, slot: LayerBuffer, layer: int):
        """Fill a slot (runs in the loader thread, or inline in sync mode)."""
        with self._cond:
            slot.layer = layer
            slot.state = _LOADING
            slot.nbytes = self._layer_bytes  # buffer space is committed up front
            self._note_resident()
        start = time.perf_counter()
        try:
            if self.transfer_delay_s > 0.0:
                time.sleep(self.transfer_delay_s)
            weights = self._mf.load_layer(layer)
        except Exception as exc:  # surfaced to the compute thread on acquire
            with self._cond:
                slot.error = exc
                slot.state = _FAILED
                self._cond.notify_all()
            return
        elapsed = time.perf_counter() - start
        with self._cond:
            slot.weights = weights
            slot.load_seconds = elapsed
            slot.state = _READY
            self.transfers.append(TransferRecord(layer, elapsed))
            self._note_resident()
            self._cond.notify_all()

    def _loader_loop(self):
        while True:
            with self._cond:
                while not self._requests and not self._closed:
                    self._cond.wait()
                if self._closed:
                    return
                slot, layer = self._requests.popleft()
            self._load(slot, layer)

    def _note_resident(self):
        resident = self.resident_weight_bytes_locked()
        if resident > self.max_resident_bytes:
            self.max_resident_bytes = resident

    # -- compute-side API --------------------------------------------------

    def acquire_layer(self, layer: int) -> LayerWeights:
        """Block until layer `layer` is resident; mark it in use and start
        prefetching the next layer into the freed slot."""
        cfg = self.config
        if not 0 <= layer < cfg.n_layers:
            raise StateError(f"layer {layer} outside [0, {cfg.n_layers})")
        inline_load = False
        with self._cond:
            if self._in_use is not None and self._in_use.layer == layer:
                return self._in_use.weights  # single-layer models re-acquire slot 0
            if self._in_use is not None:
                self._in_use.clear()
                self._in_use = None
            slot = next((s for s in self._slots
                         if s.layer == layer and s.state != _EMPTY), None)
            if slot is None:  # out of decode order, or sync mode: load on demand
                slot = next((s for s in self._slots if s.state == _EMPTY), None)
                if slot is None:
                    raise StateError(f"no free slot for layer {layer}")
                if self.prefetch:
                    slot.state = _LOADING
                    slot.layer = layer
                    slot.nbytes = self._layer_bytes
                    self._requests.append((slot, layer))
                    self._cond.notify_all()
                else:
                    inline_load = True
        if inline_load:
            self._load(slot, layer)  # sync mode: transfer blocks the compute thread
        with self._cond:
            while slot.state == _LOADING:
                self._cond.wait()
            if slot.state == _FAILED:
                error = slot.error
                slot.clear()
                raise ModelIOError(f"loading layer {layer} failed: {error}") from error
            if slot.state != _READY or slot.layer != layer:
                raise StateError(
                    f"slot {slot.slot_id} in state {slot.state} holding layer "
                    f"{slot.layer}, wanted ready layer {layer}")
            slot.state = _IN_USE
            self._in_use = slot
            self._note_resident()
            if self.prefetch:
                nxt = (layer + 1) % self.config.n_layers
                other = self._slots[1 - slot.slot_id]
                if other.state == _EMPTY:
                    other.state = _LOADING
                    other.layer = nxt
                    other.nbytes = self._layer_bytes
                    self._requests.append((other, nxt))
                    self._note_resident()
                    self._cond.notify_all()
            return slot.weights

    def resident_weight_bytes_locked(self) -> int:
        slots = sum(s.nbytes for s in self._slots if s.state != _EMPTY)
        return self.persistent_bytes + slots

    def resident_weight_bytes(self) -> int:
        """Persistent tensors plus every slot currently holding (or filling
        with) a layer; never exceeds persistent + 2 layers."""
        with self._cond:
            return self.resident_weight_bytes_locked()

    def mean_transfer_seconds(self) -> np.ndarray:
        """Observed average transfer time per layer index."""
        sums = np.zeros(self.config.n_layers)
        counts = np.zeros(self.config.n_layers)
        for rec in self.transfers:
            sums[rec.layer] += rec.seconds
            counts[rec.layer] += 1
        counts[counts == 0] = 1
        return sums / counts

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
