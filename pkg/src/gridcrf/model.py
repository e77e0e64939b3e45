"""Grid CRF energy model.

The energy of a labeling decomposes into per-site unary potentials plus
shared pairwise tables, one L x L table per pixel-offset class.  An offset
class (dx, dy) connects every site (row, col) to (row + dy, col + dx) when
both endpoints lie inside the grid; the reversed offset denotes the same
edge, never a second one, so opposite shifts share one table by
construction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class GridGeometry:
    """Rectangular site grid; site index is row-major: n = row * width + col."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ContractViolation(f"grid must be non-empty, got {self.height}x{self.width}")

    @property
    def num_sites(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class OffsetClass:
    """One pixel displacement (dx = column shift, dy = row shift)."""

    dx: int
    dy: int

    def __post_init__(self):
        if self.dx == 0 and self.dy == 0:
            raise ContractViolation("offset class (0, 0) is not a pair")


def check_offset_classes(classes):
    """Reject duplicate offsets and offsets that are exact negations."""
    seen = set()
    for oc in classes:
        key = (oc.dx, oc.dy)
        neg = (-oc.dx, -oc.dy)
        if key in seen or neg in seen:
            raise ContractViolation(f"offset {key} duplicates or negates an earlier class")
        seen.add(key)


@dataclass
class GradientBundle:
    """Per-parameter gradient entries: an (N, L) unary block plus one
    L x L accumulation per offset class."""

    unary: np.ndarray
    tables: list


class GridCrfModel:
    """Label count, grid geometry, offset classes and their shared tables.

    Tables are plain float64 arrays in energy units; all zeros means the
    distribution is the product of the per-site unary softmaxes.  An optional
    fixed unary field can be attached for models whose unaries do not come
    from a network.
    """

    def __init__(self, num_labels, geometry, classes, tables=None, fixed_unaries=None):
        if num_labels < 1:
            raise ContractViolation(f"label count must be >= 1, got {num_labels}")
        check_offset_classes(classes)
        self.num_labels = int(num_labels)
        self.geometry = geometry
        self.classes = list(classes)
        if tables is None:
            tables = [np.zeros((num_labels, num_labels)) for _ in self.classes]
        if len(tables) != len(self.classes):
            raise ContractViolation("one table per offset class required")
        for t in tables:
            if t.shape != (num_labels, num_labels):
                raise ContractViolation(f"table shape {t.shape} != ({num_labels}, {num_labels})")
            if not np.isfinite(t).all():
                raise ContractViolation("pairwise table has non-finite entries")
        self.tables = [np.asarray(t, dtype=np.float64) for t in tables]
        self.fixed_unaries = None
        if fixed_unaries is not None:
            self.fixed_unaries = self.check_unaries(fixed_unaries)
        self._build_edges()

    def _build_edges(self):
        h, w = self.geometry.height, self.geometry.width
        n = h * w
        rows, cols = np.divmod(np.arange(n), w)
        fwd = np.full((len(self.classes), n), -1, dtype=np.int64)
        bwd = np.full((len(self.classes), n), -1, dtype=np.int64)
        for c, oc in enumerate(self.classes):
            r2, c2 = rows + oc.dy, cols + oc.dx
            ok = (r2 >= 0) & (r2 < h) & (c2 >= 0) & (c2 < w)
            fwd[c, ok] = r2[ok] * w + c2[ok]
            r3, c3 = rows - oc.dy, cols - oc.dx
            ok = (r3 >= 0) & (r3 < h) & (c3 >= 0) & (c3 < w)
            bwd[c, ok] = r3[ok] * w + c3[ok]
        # neighbor of site i at +offset (edge base) and at -offset (edge end)
        self.fwd_neighbor = fwd
        self.bwd_neighbor = bwd
        # edge list per class: (base, base + offset), each edge stored once
        self.edge_base = [np.nonzero(fwd[c] >= 0)[0] for c in range(len(self.classes))]
        self.edge_end = [fwd[c][self.edge_base[c]] for c in range(len(self.classes))]

    @property
    def num_sites(self) -> int:
        return self.geometry.num_sites

    def num_edges(self, class_index: int) -> int:
        return len(self.edge_base[class_index])

    def with_geometry(self, geometry: GridGeometry) -> "GridCrfModel":
        """Rebind to a different grid; tables are shared, not copied."""
        m = GridCrfModel.__new__(GridCrfModel)
        m.num_labels = self.num_labels
        m.geometry = geometry
        m.classes = self.classes
        m.tables = self.tables
        m.fixed_unaries = None
        m._build_edges()
        return m

    def check_labeling(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (self.num_sites,):
            raise ContractViolation(f"labeling shape {y.shape} != ({self.num_sites},)")
        if y.min() < 0 or y.max() >= self.num_labels:
            raise ContractViolation("labeling contains out-of-range label")
        return y

    def check_unaries(self, unaries) -> np.ndarray:
        unaries = np.asarray(unaries, dtype=np.float64)
        if unaries.shape != (self.num_sites, self.num_labels):
            raise ContractViolation(
                f"unary field shape {unaries.shape} != ({self.num_sites}, {self.num_labels})")
        if not np.isfinite(unaries).all():
            raise ContractViolation("unary field has non-finite entries")
        return unaries


def energy(model: GridCrfModel, unaries: np.ndarray, y: np.ndarray) -> float:
    """Total energy: per-site unaries plus each pairwise edge counted once."""
    y = model.check_labeling(y)
    unaries = model.check_unaries(unaries)
    total = float(unaries[np.arange(model.num_sites), y].sum())
    for c in range(len(model.classes)):
        base, end = model.edge_base[c], model.edge_end[c]
        total += float(model.tables[c][y[base], y[end]].sum())
    return total


def energy_delta(model: GridCrfModel, unaries: np.ndarray, y: np.ndarray,
                 site: int, new_label: int) -> float:
    """Energy change from setting one site to new_label, via local terms only."""
    old = int(y[site])
    if new_label == old:
        return 0.0
    d = float(unaries[site, new_label] - unaries[site, old])
    for c in range(len(model.classes)):
        j = model.fwd_neighbor[c, site]
        if j >= 0:
            t = model.tables[c]
            d += float(t[new_label, y[j]] - t[old, y[j]])
        j = model.bwd_neighbor[c, site]
        if j >= 0:
            t = model.tables[c]
            d += float(t[y[j], new_label] - t[y[j], old])
    return d


def indicator_error(model: GridCrfModel, y_data: np.ndarray,
                    y_sample: np.ndarray) -> GradientBundle:
    """Indicator difference -[data] + [sample], accumulated per parameter.

    The unary block is the error to push through the unary provider; each
    class table accumulates the signed edge counts of its label pairs.
    """
    y_data = model.check_labeling(y_data)
    y_sample = model.check_labeling(y_sample)
    n, L = model.num_sites, model.num_labels
    unary = np.zeros((n, L))
    sites = np.arange(n)
    np.add.at(unary, (sites, y_data), -1.0)
    np.add.at(unary, (sites, y_sample), 1.0)
    tables = []
    for c in range(len(model.classes)):
        base, end = model.edge_base[c], model.edge_end[c]
        t = np.zeros((L, L))
        np.add.at(t, (y_data[base], y_data[end]), -1.0)
        np.add.at(t, (y_sample[base], y_sample[end]), 1.0)
        tables.append(t)
    return GradientBundle(unary=unary, tables=tables)


# Named offset presets.  "desk" is the small-scale default; "paper64" is a
# 32-class / 64-neighbor layout approximating a dense mixed-range
# neighborhood (the exact published pattern is pictorial only, so this list
# is an approximation, padded to exactly 32 classes).
_DESK_OFFSETS = [
    (1, 0), (0, 1), (1, 1), (-1, 1),
    (3, 0), (0, 3), (3, 3), (-3, 3),
    (6, 0), (0, 6), (10, 0), (0, 10),
]

_PAPER64_OFFSETS = [
    (1, 0), (0, 1), (1, 1), (-1, 1),
    (2, 0), (0, 2), (2, 2), (-2, 2),
    (3, 0), (0, 3), (3, 3), (-3, 3),
    (5, 0), (0, 5), (5, 5), (-5, 5),
    (5, 10), (-5, 10), (10, 5), (-10, 5),
    (10, 0), (0, 10), (10, 10), (-10, 10),
    (15, 0), (0, 15), (15, 15), (-15, 15),
    (20, 0), (0, 20), (20, 20), (-20, 20),
]

OFFSET_PRESETS = {
    "desk": _DESK_OFFSETS,
    "paper64": _PAPER64_OFFSETS,
}


def offsets_from_spec(spec: str):
    """Parse an offset list: a preset name or 'dx,dy;dx,dy;...'."""
    if spec in OFFSET_PRESETS:
        pairs = OFFSET_PRESETS[spec]
    else:
        pairs = []
        for item in spec.split(";"):
            item = item.strip()
            if not item:
                continue
            parts = item.split(",")
            if len(parts) != 2:
                raise ContractViolation(f"bad offset entry {item!r}, expected 'dx,dy'")
            pairs.append((int(parts[0]), int(parts[1])))
        if not pairs:
            raise ContractViolation(f"offset spec {spec!r} is empty")
    classes = [OffsetClass(dx, dy) for dx, dy in pairs]
    check_offset_classes(classes)
    return classes
