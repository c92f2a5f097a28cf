"""Dynamic networks: edge-list I/O, holdout splits and summary statistics.

Edge-list format::

    N T directed|undirected
    t i j
    ...

with 0-based integers.  Undirected edges are stored in both orientations.
"""
from dataclasses import dataclass, field
from functools import cached_property
import csv
import math

import numpy as np

from .errors import DataError, ParameterError


@dataclass(frozen=True)
class DynamicNetwork:
    n_nodes: int
    n_steps: int
    edges: np.ndarray  # (E, 3) int64 rows (t, i, j), sorted, unique
    directed: bool = True

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        if self.n_nodes < 1 or self.n_steps < 1:
            raise DataError("n_nodes and n_steps must be positive")
        if e.size:
            if e[:, 0].min() < 0 or e[:, 0].max() >= self.n_steps:
                raise DataError("time index out of range")
            if e[:, 1:].min() < 0 or e[:, 1:].max() >= self.n_nodes:
                raise DataError("node index out of range")
            if np.any(e[:, 1] == e[:, 2]):
                raise DataError("self-links are not allowed")
        if not self.directed and e.size:
            e = np.concatenate([e, e[:, [0, 2, 1]]])
        e = np.unique(e, axis=0) if e.size else e
        object.__setattr__(self, "edges", e)

    @property
    def n_links(self):
        """Positive links: ordered pairs if directed, unordered pairs otherwise."""
        return int(len(self.edges) if self.directed else len(self.edges) // 2)

    def edges_at(self, t):
        return self.edges[self.edges[:, 0] == t, 1:]

    def modeled_edges(self):
        """Edges once per modelled dyad (i < j for undirected data)."""
        if self.directed:
            return self.edges
        return self.edges[self.edges[:, 1] < self.edges[:, 2]]

    def adjacency(self, t):
        A = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int8)
        e = self.edges_at(t)
        A[e[:, 0], e[:, 1]] = 1
        return A


@dataclass(frozen=True)
class HoldoutMask:
    entries: np.ndarray  # (H, 4) int64 rows (t, i, j, label)
    fraction: float

    def __len__(self):
        return len(self.entries)

    @property
    def dyads(self):
        return self.entries[:, :3]

    @property
    def labels(self):
        return self.entries[:, 3]


@dataclass(frozen=True)
class TrainingView:
    """The observed network with held-out dyads removed.

    ``links`` holds each positive training dyad once (``i < j`` when
    undirected); ``heldout`` lists the hidden dyads in the same orientation.
    """

    n_nodes: int
    n_steps: int
    directed: bool
    links: np.ndarray
    heldout: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def from_network(cls, net, mask=None):
        links = net.modeled_edges()
        held = np.zeros((0, 3), dtype=np.int64) if mask is None else mask.dyads.astype(np.int64)
        if len(held):
            keys = _dyad_keys(links, net.n_nodes)
            hkeys = _dyad_keys(held, net.n_nodes)
            links = links[~np.isin(keys, hkeys)]
            held = held[np.argsort(hkeys, kind="stable")]
        return cls(net.n_nodes, net.n_steps, net.directed, np.ascontiguousarray(links), held)

    @cached_property
    def heldout_partners(self):
        """Per time step CSR lists of held-out partners used by the X update.

        Returns ``[(out_ptr, out_idx, in_ptr, in_idx)]`` where ``out`` lists
        ``b`` for held-out ``(i, b)`` and ``in`` lists ``a`` for ``(a, i)``.
        """
        res = []
        N = self.n_nodes
        for t in range(self.n_steps):
            h = self.heldout[self.heldout[:, 0] == t]
            res.append(_csr(h[:, 1], h[:, 2], N) + _csr(h[:, 2], h[:, 1], N))
        return res

    @property
    def n_dyads_per_step(self):
        N = self.n_nodes
        return N * (N - 1) if self.directed else N * (N - 1) // 2


def _csr(rows, cols, n):
    order = np.lexsort((cols, rows))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=ptr[1:])
    return ptr, np.ascontiguousarray(cols[order], dtype=np.int64)


def _dyad_keys(tij, n_nodes):
    tij = np.asarray(tij, dtype=np.int64)
    return (tij[:, 0] * n_nodes + tij[:, 1]) * n_nodes + tij[:, 2]


def load_edge_list(path):
    """Parse an edge-list file into a validated :class:`DynamicNetwork`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header_no, header = None, None
    for no, line in enumerate(lines, 1):
        if line.strip() and not line.lstrip().startswith("#"):
            header_no, header = no, line.split()
            break
    if header is None:
        raise DataError(f"{path}: empty file, expected header 'N T directed|undirected'")
    if len(header) != 3 or header[2] not in ("directed", "undirected"):
        raise DataError(f"{path}:{header_no}: header must be 'N T directed|undirected'")
    try:
        N, T = int(header[0]), int(header[1])
    except ValueError:
        raise DataError(f"{path}:{header_no}: N and T must be integers") from None
    if N < 1 or T < 1:
        raise DataError(f"{path}:{header_no}: N and T must be positive")
    directed = header[2] == "directed"
    rows = []
    for no, line in enumerate(lines[header_no:], header_no + 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 3:
            raise DataError(f"{path}:{no}: expected 't i j', got {line!r}")
        try:
            t, i, j = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"{path}:{no}: non-integer field in {line!r}") from None
        if not 0 <= t < T:
            raise DataError(f"{path}:{no}: time {t} outside [0, {T})")
        if not (0 <= i < N and 0 <= j < N):
            raise DataError(f"{path}:{no}: node index outside [0, {N}) in {line!r}")
        if i == j:
            raise DataError(f"{path}:{no}: self-link {i}->{j} is not allowed")
        rows.append((t, i, j))
    edges = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return DynamicNetwork(N, T, edges, directed)


def save_edge_list(net, path):
    with open(path, "w") as fh:
        fh.write(f"{net.n_nodes} {net.n_steps} {'directed' if net.directed else 'undirected'}\n")
        for t, i, j in net.modeled_edges():
            fh.write(f"{t} {i} {j}\n")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_holdout(net, fraction, rng):
    """Hide ``round(fraction * candidates)`` random dyads at every step.

    Candidates are all ordered pairs ``i != j`` (directed) or unordered
    pairs (undirected), links and non-links alike.
    """
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"holdout fraction must lie in (0, 1), got {fraction}")
    N = net.n_nodes
    if net.directed:
        n_cand = N * (N - 1)
    else:
        n_cand = N * (N - 1) // 2
    if n_cand == 0:
        raise ParameterError("network has no candidate dyads")
    per_step = _round_half_up(fraction * n_cand)
    if net.directed:
        iu, ju = np.nonzero(~np.eye(N, dtype=bool))
    else:
        iu, ju = np.triu_indices(N, k=1)
    rows = []
    for t in range(net.n_steps):
        pick = np.sort(rng.choice(n_cand, size=per_step, replace=False))
        i, j = iu[pick], ju[pick]
        A = net.adjacency(t)
        label = A[i, j].astype(np.int64)
        rows.append(np.column_stack([np.full(per_step, t), i, j, label]))
    entries = np.concatenate(rows).astype(np.int64) if rows else np.zeros((0, 4), np.int64)
    mask = HoldoutMask(entries, float(fraction))
    return TrainingView.from_network(net, mask), mask


def save_mask(mask, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "label"])
        w.writerows(mask.entries.tolist())


def load_mask(path, fraction=float("nan")):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "i", "j", "label"]:
            raise DataError(f"{path}: expected header t,i,j,label")
        rows = []
        for no, rec in enumerate(reader, 2):
            try:
                rows.append([int(v) for v in rec])
            except ValueError:
                raise DataError(f"{path}:{no}: non-integer field") from None
            if len(rows[-1]) != 4:
                raise DataError(f"{path}:{no}: expected 4 fields")
    return HoldoutMask(np.array(rows, dtype=np.int64).reshape(-1, 4), fraction)


def dataset_stats(net):
    """(N, T, positive-link count, sparsity percent)."""
    N, T = net.n_nodes, net.n_steps
    n_e = net.n_links
    dyads = N * (N - 1) * T if net.directed else N * (N - 1) * T // 2
    sparsity = 100.0 * n_e / dyads if dyads else 0.0
    return N, T, n_e, sparsity
