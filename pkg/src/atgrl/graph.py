"""Dynamic weighted graphs: data model, JSON container I/O, coherence connectivity."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from . import jsonio

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SYMMETRY_TOL = 1e-9
ASYMMETRY_WARN = 1e-6


class GraphFormatError(ValueError):
    """A graph or signal file could not be parsed."""


class GraphValidationError(ValueError):
    """Graph contents violate the data-model invariants."""


class CoherenceError(ValueError):
    """Coherence parameters are invalid or the estimate would be degenerate."""


@dataclass(frozen=True)
class GraphSnapshot:
    adjacency: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=np.float64)
        feat = np.array(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise GraphValidationError(f"adjacency must be square, got shape {adj.shape}")
        if feat.ndim != 2 or feat.shape[0] != adj.shape[0]:
            raise GraphValidationError(f"features shape {feat.shape} does not match {adj.shape[0]} nodes")
        if not (np.isfinite(adj).all() and np.isfinite(feat).all()):
            raise GraphValidationError("adjacency and features must be finite")
        if np.any(adj < 0):
            raise GraphValidationError("adjacency entries must be non-negative")
        if np.abs(adj - adj.T).max(initial=0.0) > SYMMETRY_TOL:
            raise GraphValidationError("adjacency is not symmetric")
        if np.any(np.diag(adj) != 0):
            raise GraphValidationError("adjacency diagonal must be zero")
        adj.setflags(write=False)
        feat.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feat)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DynamicGraph:
    snapshots: tuple[GraphSnapshot, ...]
    labels: np.ndarray | None = None

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if not snaps:
            raise GraphValidationError("a dynamic graph needs at least one snapshot")
        n, d = snaps[0].n, snaps[0].d
        for t, s in enumerate(snaps):
            if s.n != n or s.d != d:
                raise GraphValidationError(
                    f"snapshot {t + 1} has n={s.n}, d={s.d}; expected n={n}, d={d} as in snapshot 1"
                )
        object.__setattr__(self, "snapshots", snaps)
        if self.labels is not None:
            labels = np.array(self.labels)
            if labels.shape != (len(snaps), n):
                raise GraphValidationError(f"labels shape {labels.shape} != (t={len(snaps)}, n={n})")
            if not np.issubdtype(labels.dtype, np.integer) and not np.all(labels == np.round(labels)):
                raise GraphValidationError("labels must be integers")
            labels = labels.astype(np.int64)
            if labels.size and labels.min() < 0:
                raise GraphValidationError("labels must be non-negative community ids")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def t(self) -> int:
        return len(self.snapshots)

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    @property
    def d(self) -> int:
        return self.snapshots[0].d

    @property
    def adjacencies(self) -> list[np.ndarray]:
        return [s.adjacency for s in self.snapshots]

    @property
    def features(self) -> list[np.ndarray]:
        return [s.features for s in self.snapshots]

    def permuted(self, perm: np.ndarray) -> "DynamicGraph":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        snaps = [GraphSnapshot(s.adjacency[np.ix_(perm, perm)], s.features[perm]) for s in self.snapshots]
        labels = None if self.labels is None else self.labels[:, perm]
        return DynamicGraph(tuple(snaps), labels)

    def with_labels(self, labels: np.ndarray | None) -> "DynamicGraph":
        return DynamicGraph(self.snapshots, labels)


@dataclass(frozen=True)
class RawSignalSet:
    signals: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        sig = np.array(self.signals, dtype=np.float64)
        if sig.ndim != 2:
            raise GraphValidationError(f"signals must be an N x L matrix, got shape {sig.shape}")
        if not np.isfinite(sig).all():
            raise GraphValidationError("signals must be finite")
        if not self.sample_rate > 0:
            raise GraphValidationError("sample_rate must be positive")
        sig.setflags(write=False)
        object.__setattr__(self, "signals", sig)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def n(self) -> int:
        return self.signals.shape[0]

    @property
    def length(self) -> int:
        return self.signals.shape[1]


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def graph_to_dict(g: DynamicGraph) -> dict:
    out = {
        "version": FORMAT_VERSION,
        "n": g.n,
        "d": g.d,
        "t": g.t,
        "snapshots": [{"adjacency": s.adjacency, "features": s.features} for s in g.snapshots],
    }
    if g.labels is not None:
        out["labels"] = g.labels.tolist()
    return out


def _load_text(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise GraphFormatError(f"{path}: top-level value must be an object")
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"{path}: field 'version' must be {FORMAT_VERSION}, got {version!r}")
    return payload


def _matrix(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"{where}: not a numeric matrix ({exc})") from exc
    if arr.ndim != 2:
        raise GraphFormatError(f"{where}: expected a 2-D matrix, got {arr.ndim}-D")
    return arr


def graph_from_dict(payload: dict, source: str = "<memory>") -> DynamicGraph:
    snaps_raw = payload.get("snapshots")
    if not isinstance(snaps_raw, list) or not snaps_raw:
        raise GraphValidationError(f"{source}: field 'snapshots' must be a non-empty list")
    snaps = []
    ref_shape = None
    for t, raw in enumerate(snaps_raw, start=1):
        if not isinstance(raw, dict) or "adjacency" not in raw or "features" not in raw:
            raise GraphFormatError(f"{source}: snapshots[{t - 1}] needs 'adjacency' and 'features'")
        adj = _matrix(raw["adjacency"], f"{source}: snapshots[{t - 1}].adjacency")
        feat = _matrix(raw["features"], f"{source}: snapshots[{t - 1}].features")
        shape = (adj.shape[0], feat.shape[1] if feat.ndim == 2 else -1)
        if ref_shape is None:
            ref_shape = shape
        elif shape != ref_shape:
            raise GraphValidationError(
                f"{source}: snapshot {t} has n={shape[0]}, d={shape[1]}; snapshot 1 has n={ref_shape[0]}, d={ref_shape[1]}"
            )
        if adj.shape[0] == adj.shape[1]:
            asym = np.abs(adj - adj.T).max(initial=0.0)
            if asym > ASYMMETRY_WARN:
                log.warning("%s: snapshot %d asymmetric by %.3g; symmetrising as (A + A^T)/2", source, t, asym)
            if asym > 0:
                adj = (adj + adj.T) / 2.0
            if np.any(np.diag(adj) != 0):
                log.warning("%s: snapshot %d has self-loops; zeroing the diagonal", source, t)
                adj = adj.copy()
                np.fill_diagonal(adj, 0.0)
        try:
            snaps.append(GraphSnapshot(adj, feat))
        except GraphValidationError as exc:
            raise GraphValidationError(f"{source}: snapshot {t}: {exc}") from None
    for key, actual in (("n", snaps[0].n), ("d", snaps[0].d), ("t", len(snaps))):
        if key in payload and payload[key] != actual:
            raise GraphValidationError(f"{source}: header field '{key}'={payload[key]!r} but data has {actual}")
    labels = payload.get("labels")
    return DynamicGraph(tuple(snaps), None if labels is None else np.array(labels, dtype=np.int64))


def load_dynamic_graph(path: str | os.PathLike) -> DynamicGraph:
    return graph_from_dict(_load_text(path), str(path))


def save_dynamic_graph(g: DynamicGraph, path: str | os.PathLike) -> None:
    if not g.snapshots:
        raise GraphValidationError("refusing to save a graph without snapshots")
    try:
        jsonio.write_json(path, graph_to_dict(g))
    except OSError as exc:
        raise OSError(f"cannot write graph to {path}: {exc}") from exc


def load_raw_signals(path: str | os.PathLike) -> RawSignalSet:
    payload = _load_text(path)
    if "signals" not in payload or "sample_rate" not in payload:
        raise GraphFormatError(f"{path}: raw-signal file needs 'signals' and 'sample_rate'")
    return RawSignalSet(_matrix(payload["signals"], f"{path}: signals"), float(payload["sample_rate"]))


def save_raw_signals(raw: RawSignalSet, path: str | os.PathLike) -> None:
    jsonio.write_json(path, {"version": FORMAT_VERSION, "sample_rate": raw.sample_rate, "signals": raw.signals})


def adjacency_csv(adj: np.ndarray) -> str:
    return "".join(",".join(jsonio._format_float(float(v)) for v in row) + "\n" for row in np.asarray(adj))


def save_adjacency_csv(adj: np.ndarray, path: str | os.PathLike) -> None:
    jsonio.atomic_write_text(Path(path), adjacency_csv(adj))


# ---------------------------------------------------------------------------
# magnitude-squared coherence
# ---------------------------------------------------------------------------


def _welch_segments(signals: np.ndarray, segment_len: int, overlap: float) -> np.ndarray:
    step = segment_len - int(np.floor(overlap * segment_len))
    count = 1 + (signals.shape[1] - segment_len) // step
    if count < 2:
        raise CoherenceError(
            f"only {count} Welch segment(s) fit; single-segment coherence is identically 1"
        )
    starts = np.arange(count) * step
    idx = starts[:, None] + np.arange(segment_len)[None, :]
    segs = signals[:, idx]  # N x S x segment_len
    segs = segs - segs.mean(axis=2, keepdims=True)
    window = get_window("hann", segment_len)
    return np.fft.rfft(segs * window, axis=2)  # N x S x F


def coherence_connectivity(
    raw: RawSignalSet,
    segment_len: int,
    overlap: float = 0.5,
    band: tuple[float, float] | None = None,
) -> np.ndarray:
    """Band-averaged magnitude-squared coherence between every pair of signals.

    Cross-spectra come from Welch averaging over Hann-windowed, mean-removed
    segments. Frequency bins where either auto-spectrum vanishes are left out
    of the band average. The result is symmetric with a zero diagonal.
    """
    n, length = raw.signals.shape
    if not 2 <= segment_len <= length:
        raise CoherenceError(f"segment_len={segment_len} must lie in [2, {length}]")
    if not 0 <= overlap < 1:
        raise CoherenceError(f"overlap={overlap} must lie in [0, 1)")
    nyquist = raw.sample_rate / 2.0
    f_lo, f_hi = (0.0, nyquist) if band is None else band
    if not (0 <= f_lo < f_hi <= nyquist):
        raise CoherenceError(f"band ({f_lo}, {f_hi}) must satisfy 0 <= f_lo < f_hi <= {nyquist}")

    spectra = _welch_segments(raw.signals, segment_len, overlap)
    freqs = np.fft.rfftfreq(segment_len, d=1.0 / raw.sample_rate)
    in_band = (freqs >= f_lo) & (freqs <= f_hi)
    if not in_band.any():
        raise CoherenceError(f"no frequency bins fall inside band ({f_lo}, {f_hi})")
    spectra = spectra[:, :, in_band]

    # Welch scaling constants cancel in the ratio; segment means suffice.
    auto = np.mean(np.abs(spectra) ** 2, axis=1)  # N x F
    cross = np.einsum("isf,jsf->ijf", spectra, np.conj(spectra)) / spectra.shape[1]  # N x N x F
    denom = auto[:, None, :] * auto[None, :, :]
    scale = np.max(auto, initial=0.0) ** 2
    valid = denom > 1e-24 * max(scale, np.finfo(float).tiny)
    ratio = np.where(valid, np.abs(cross) ** 2 / np.where(valid, denom, 1.0), 0.0)
    counts = valid.sum(axis=2)
    coh = np.where(counts > 0, ratio.sum(axis=2) / np.maximum(counts, 1), 0.0)
    coh = np.clip((coh + coh.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(coh, 0.0)
    return coh


def threshold_adjacency(adj: np.ndarray, threshold: float) -> np.ndarray:
    out = (np.asarray(adj) > threshold).astype(np.float64)
    np.fill_diagonal(out, 0.0)
    return out


def snapshot_windows(
    raw: RawSignalSet,
    window_len: int,
    stride: int,
    segment_len: int,
    overlap: float = 0.5,
    band: tuple[float, float] | None = None,
    threshold: float | None = None,
) -> DynamicGraph:
    """Slide a window over the signals and build one coherence snapshot per window.

    Features of snapshot ``t`` are the raw samples ``[t*stride, t*stride + window_len)``.
    """
    length = raw.length
    if window_len < 1 or stride < 1:
        raise CoherenceError("window_len and stride must be positive")
    if window_len > length:
        raise CoherenceError(f"window_len={window_len} exceeds the signal length {length}")
    count = (length - window_len) // stride + 1
    snaps = []
    for t in range(count):
        window = raw.signals[:, t * stride : t * stride + window_len]
        adj = coherence_connectivity(RawSignalSet(window, raw.sample_rate), segment_len, overlap, band)
        if threshold is not None:
            adj = threshold_adjacency(adj, threshold)
        snaps.append(GraphSnapshot(adj, window))
    return DynamicGraph(tuple(snaps))
