"""Dirichlet process mixture over binary vectors, collapsed Gibbs sampling.

Cluster parameters are integrated out under a per-pixel Beta(beta_on,
beta_off) prior, so the sampler state is just the partition plus sufficient
statistics (member count and per-pixel on-counts). Reassignment energies
follow the Chinese restaurant process: an existing cluster k weighs
n_k * prod_p predictive(x_p), a new cluster weighs alpha * prior
predictive, with predictive(x=1) = (c + beta_on) / (n + beta_on + beta_off).
Energies are quantized to fixed point and drawn through the same
discrete-sample gate as every other sampler here; the default format is
wider than the global (8, 4) because partition posteriors are sensitive to
sub-percent weight ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import EntropyStream
from .errors import ConfigError, ShapeError
from .lowprec import EnergyFormat, EnergyVector, discrete_sample

DPMM_FORMAT = EnergyFormat(16, 8)


@dataclass
class ClusterStats:
    count: int
    on_counts: np.ndarray


class DpmmState:
    """Partition state plus per-cluster sufficient statistics."""

    def __init__(self, dim: int, alpha: float = 1.0,
                 beta_on: float = 0.5, beta_off: float = 0.5):
        if alpha <= 0:
            raise ConfigError(f"concentration must be positive, got {alpha}")
        if beta_on <= 0 or beta_off <= 0:
            raise ConfigError("beta pseudo-counts must be positive")
        if dim < 0:
            raise ConfigError(f"dimension must be nonnegative, got {dim}")
        self.dim = dim
        self.alpha = alpha
        self.beta_on = beta_on
        self.beta_off = beta_off
        self.data: list[np.ndarray] = []
        self.assignments: list[int | None] = []
        self.clusters: dict[int, ClusterStats] = {}
        self.founding: dict[int, int] = {}
        self.ingest_log: list[int] = []
        self._next_cluster = 0

    def check_datum(self, datum) -> np.ndarray:
        datum = np.asarray(datum, dtype=np.int8).reshape(-1)
        if datum.size != self.dim:
            raise ShapeError(f"datum has {datum.size} pixels, expected {self.dim}")
        if datum.size and (datum.min() < 0 or datum.max() > 1):
            raise ShapeError("datum must be binary")
        return datum

    def n_data(self) -> int:
        return len(self.data)

    def add_datum(self, datum) -> int:
        """Register a datum without assigning it; returns its index."""
        datum = self.check_datum(datum)
        self.data.append(datum)
        self.assignments.append(None)
        idx = len(self.data) - 1
        self.ingest_log.append(idx)
        return idx

    def _found_cluster(self) -> int:
        cid = self._next_cluster
        self._next_cluster += 1
        self.clusters[cid] = ClusterStats(0, np.zeros(self.dim, dtype=np.int64))
        self.founding[cid] = cid
        return cid

    def assign(self, idx: int, cid: int | None):
        """Place datum idx into cluster cid (None founds a new cluster)."""
        if self.assignments[idx] is not None:
            raise ConfigError(f"datum {idx} is already assigned")
        if cid is None:
            cid = self._found_cluster()
        stats = self.clusters[cid]
        stats.count += 1
        stats.on_counts += self.data[idx]
        self.assignments[idx] = cid
        return cid

    def remove(self, idx: int):
        """Detach datum idx from its cluster, deleting the cluster if emptied."""
        cid = self.assignments[idx]
        if cid is None:
            return
        stats = self.clusters[cid]
        stats.count -= 1
        stats.on_counts -= self.data[idx]
        self.assignments[idx] = None
        if stats.count == 0:
            del self.clusters[cid]
            del self.founding[cid]

    def cluster_ids(self) -> list[int]:
        return sorted(self.clusters)

    def partition(self) -> tuple:
        """Canonical label-free partition of datum indices."""
        groups: dict[int, list[int]] = {}
        for idx, cid in enumerate(self.assignments):
            if cid is not None:
                groups.setdefault(cid, []).append(idx)
        return tuple(sorted(tuple(g) for g in groups.values()))

    def audit(self):
        """Recompute statistics from scratch and compare (debug invariant)."""
        fresh: dict[int, ClusterStats] = {}
        for idx, cid in enumerate(self.assignments):
            if cid is None:
                continue
            stats = fresh.setdefault(
                cid, ClusterStats(0, np.zeros(self.dim, dtype=np.int64)))
            stats.count += 1
            stats.on_counts += self.data[idx]
        assert set(fresh) == set(self.clusters), "stale or missing clusters"
        for cid, stats in fresh.items():
            kept = self.clusters[cid]
            assert kept.count == stats.count, f"cluster {cid}: bad count"
            assert np.array_equal(kept.on_counts, stats.on_counts), \
                f"cluster {cid}: bad on-counts"
        total = sum(s.count for s in self.clusters.values())
        assigned = sum(1 for a in self.assignments if a is not None)
        assert total == assigned, "count conservation violated"


def assignment_energies(state: DpmmState, datum) -> tuple[list[float], list[int | None]]:
    """Energies over existing clusters plus one new-cluster slot.

    The datum must not currently be counted in any cluster. The common CRP
    denominator is dropped: only energy differences matter to the gate.
    """
    datum = state.check_datum(datum)
    on = datum == 1
    b_on, b_off = state.beta_on, state.beta_off
    energies: list[float] = []
    slots: list[int | None] = []
    for cid in state.cluster_ids():
        stats = state.clusters[cid]
        c = stats.on_counts
        denom = stats.count + b_on + b_off
        pred = np.where(on, (c + b_on) / denom, (stats.count - c + b_off) / denom)
        energies.append(float(-np.log2(stats.count) - np.log2(pred).sum()))
        slots.append(cid)
    prior = np.where(on, b_on, b_off) / (b_on + b_off)
    energies.append(float(-np.log2(state.alpha) - np.log2(prior).sum()))
    slots.append(None)
    return energies, slots


def _draw_assignment(state: DpmmState, idx: int, stream: EntropyStream,
                     fmt: EnergyFormat):
    energies, slots = assignment_energies(state, state.data[idx])
    shift = min(energies)
    vec = EnergyVector.from_energies([e - shift for e in energies], fmt)
    choice = discrete_sample(vec, stream)
    state.assign(idx, slots[choice])


def gibbs_sweep(state: DpmmState, stream: EntropyStream,
                fmt: EnergyFormat = DPMM_FORMAT) -> DpmmState:
    """One full pass: reassign every datum in ascending index order."""
    if state.n_data() < 1:
        raise ConfigError("no data to sweep")
    for idx in range(state.n_data()):
        state.remove(idx)
        _draw_assignment(state, idx, stream, fmt)
    return state


def stream_datum(state: DpmmState, datum, inner_sweeps: int,
                 stream: EntropyStream, fmt: EnergyFormat = DPMM_FORMAT) -> DpmmState:
    """Online ingestion: one conditional draw for the newcomer, then sweeps."""
    idx = state.add_datum(datum)
    _draw_assignment(state, idx, stream, fmt)
    for _ in range(inner_sweeps):
        gibbs_sweep(state, stream, fmt)
    return state


def cluster_summaries(state: DpmmState) -> list[tuple[int, np.ndarray]]:
    """(count, per-pixel on-probability) per cluster, largest first."""
    order = sorted(state.clusters,
                   key=lambda cid: (-state.clusters[cid].count, state.founding[cid]))
    out = []
    for cid in order:
        stats = state.clusters[cid]
        denom = stats.count + state.beta_on + state.beta_off
        out.append((stats.count, (stats.on_counts + state.beta_on) / denom))
    return out


def read_idx_images(path, threshold: int = 128):
    """Binarized vectors from an IDX ubyte image file (demo ingestion path).

    Returns (vectors, (height, width)). The IDX header is big-endian:
    two zero bytes, type code 0x08 (unsigned byte), dimension count, then
    one 4-byte size per dimension.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[0] != 0 or blob[1] != 0 or blob[2] != 0x08:
        raise ConfigError(f"{path}: not an unsigned-byte IDX file")
    ndim = blob[3]
    if ndim != 3:
        raise ConfigError(f"{path}: expected 3 dimensions (count, height, width)")
    dims = [int.from_bytes(blob[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    n, h, w = dims
    pixels = np.frombuffer(blob[4 + 4 * ndim:], dtype=np.uint8)
    if pixels.size != n * h * w:
        raise ConfigError(f"{path}: truncated pixel data")
    vectors = (pixels.reshape(n, h * w) >= threshold).astype(np.int8)
    return [vectors[i] for i in range(n)], (h, w)


def run_batch(data, sweeps: int, stream: EntropyStream, alpha: float = 1.0,
              beta_on: float = 0.5, beta_off: float = 0.5,
              burn_in: int | None = None, fmt: EnergyFormat = DPMM_FORMAT):
    """Batch Gibbs over a dataset; returns (state, partition trace).

    Data are seeded into one cluster per datum's first conditional draw
    (streamed in without inner sweeps), then swept. The trace holds the
    canonical partition after each retained sweep.
    """
    data = list(data)
    if not data:
        raise ConfigError("empty dataset")
    dim = np.asarray(data[0]).size
    state = DpmmState(dim, alpha=alpha, beta_on=beta_on, beta_off=beta_off)
    for datum in data:
        idx = state.add_datum(datum)
        _draw_assignment(state, idx, stream, fmt)
    if burn_in is None:
        burn_in = max(10, len(data))
    partitions = []
    for sweep in range(burn_in + sweeps):
        gibbs_sweep(state, stream, fmt)
        if sweep >= burn_in:
            partitions.append(state.partition())
    return state, partitions
