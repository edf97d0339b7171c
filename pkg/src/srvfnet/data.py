"""Synthetic bump functions, CSV profile corpora and train/test splits."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, PreconditionError
from .functional import grid, to_srvf
from .io import read_rows, write_json, write_rows


@dataclass(frozen=True)
class BumpSpec:
    """Sum of ``num_peaks`` raised-cosine bumps.

    Bump ``k`` is centred at ``(k - 1/2) / K`` plus uniform jitter in
    ``[-center_jitter, center_jitter]`` (default ``0.3 / K``); amplitudes and
    half-widths are uniform over their ranges.
    """

    num_peaks: int = 2
    amplitude_range: tuple = (0.5, 1.5)
    center_jitter: float = None
    width_range: tuple = (0.08, 0.15)
    T: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.num_peaks < 1 or self.T < 3:
            raise PreconditionError("need num_peaks >= 1 and T >= 3")
        if self.center_jitter is None:
            object.__setattr__(self, "center_jitter", 0.3 / self.num_peaks)
        for lo, hi in (self.amplitude_range, self.width_range):
            if lo > hi:
                raise PreconditionError(f"invalid range ({lo}, {hi})")
        if self.width_range[0] <= 0 or self.center_jitter < 0:
            raise PreconditionError("widths must be positive and jitter non-negative")


@dataclass
class Dataset:
    raw: np.ndarray
    srvfs: np.ndarray
    split: np.ndarray = None
    excluded: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split is None:
            self.split = np.array(["train"] * len(self.raw))

    def __len__(self):
        return len(self.raw)

    @property
    def T(self):
        return self.raw.shape[1]

    def subset(self, idx, tag=None):
        split = self.split[idx] if tag is None else np.array([tag] * len(idx))
        return Dataset(self.raw[idx], self.srvfs[idx], split, meta=dict(self.meta))

    def manifest(self):
        return {"count": len(self), "T": self.T, "splits": {s: int(np.sum(self.split == s)) for s in set(self.split)},
                "excluded_rows": list(self.excluded), **self.meta}


def raised_cosine(t, center, amplitude, width):
    r = np.minimum(1.0, np.abs(t - center) / width)
    return amplitude * 0.5 * (1.0 + np.cos(np.pi * r))


def generate_bumps(spec, n):
    """``n`` random bump functions on the ``spec.T`` grid, with their unit SRVFs."""
    rng = np.random.default_rng(spec.seed)
    K = spec.num_peaks
    base = (np.arange(K) + 0.5) / K
    centers = base + rng.uniform(-spec.center_jitter, spec.center_jitter, size=(n, K))
    amplitudes = rng.uniform(*spec.amplitude_range, size=(n, K))
    widths = rng.uniform(*spec.width_range, size=(n, K))
    t = grid(spec.T)
    raw = raised_cosine(t[None, None, :], centers[..., None], amplitudes[..., None], widths[..., None]).sum(axis=1)
    meta = {"source": "bumps", "spec": asdict(spec), "n": n}
    return Dataset(raw, to_srvf(raw), meta=meta)


def from_functions(raw, meta=None):
    """Convert rows of sampled functions, excluding rows whose derivative vanishes."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    keep, excluded = [], []
    for i, f in enumerate(raw):
        try:
            to_srvf(f)
            keep.append(i)
        except DegenerateInputError:
            excluded.append(i + 1)
    raw = raw[keep]
    srvfs = to_srvf(raw) if len(raw) else np.empty_like(raw)
    return Dataset(raw, srvfs, excluded=excluded, meta=dict(meta or {}))


def load_profiles_csv(path, T=None, header=False):
    """Load a CSV of profiles (one per row). Constant rows are excluded and listed by row number."""
    raw = read_rows(path, header=header, expected_length=T)
    return from_functions(raw, meta={"source": str(path)})


def save_dataset(path, dataset, header=False):
    write_rows(path, dataset.raw, header=[f"t{i}" for i in range(dataset.T)] if header else None)


def write_manifest(path, dataset):
    write_json(path, dataset.manifest())


def split_dataset(dataset, test_fraction=0.1, seed=0):
    """Seeded shuffle, then the last ``round(test_fraction * n)`` items form the test set."""
    if not 0 <= test_fraction < 1:
        raise PreconditionError("test_fraction must lie in [0, 1)")
    n = len(dataset)
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return dataset.subset(np.sort(perm[: n - n_test]), "train"), dataset.subset(np.sort(perm[n - n_test:]), "test")
