"""Datasets: sparse TSV loading and writing, stratified k-fold splitting,
and a synthetic Gaussian scenario generator.

On-disk layout is one directory per domain holding ``labeled.tsv`` (lines
``<label>\\t<idx>:<count> ...``) and ``unlabeled.tsv`` (feature list only).
Indices are strictly increasing within a line; counts are nonnegative
numbers. Values round-trip exactly through repr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, UsageError

Features = dict[int, float]


@dataclass
class DomainDataset:
    name: str
    labeled: list[tuple[Features, int]]
    unlabeled: list[Features]
    input_dim: int

    def labeled_matrix(self, indices=None, log1p: bool = False):
        rows = self.labeled if indices is None else [self.labeled[i] for i in indices]
        x = _densify([f for f, _ in rows], self.input_dim, log1p)
        y = np.array([label for _, label in rows], dtype=np.int64)
        return x, y

    def unlabeled_matrix(self, log1p: bool = False) -> np.ndarray:
        return _densify(self.unlabeled, self.input_dim, log1p)

    @property
    def num_labeled(self) -> int:
        return len(self.labeled)

    @property
    def num_unlabeled(self) -> int:
        return len(self.unlabeled)


def _densify(samples: list[Features], input_dim: int, log1p: bool) -> np.ndarray:
    x = np.zeros((len(samples), input_dim))
    for i, feats in enumerate(samples):
        for idx, count in feats.items():
            x[i, idx] = count
    return np.log1p(x) if log1p else x


# ---------------------------------------------------------------------------
# TSV parsing and writing


def _parse_features(text: str, input_dim: int, where: str) -> Features:
    feats: Features = {}
    last_idx = -1
    for token in text.split():
        idx_str, sep, count_str = token.partition(":")
        if not sep:
            raise DataError(f"{where}: feature token {token!r} lacks ':'")
        try:
            idx = int(idx_str)
        except ValueError:
            raise DataError(f"{where}: non-integer feature index {idx_str!r}") from None
        if idx < 0 or idx >= input_dim:
            raise DataError(f"{where}: feature index {idx} outside [0, {input_dim})")
        if idx <= last_idx:
            raise DataError(f"{where}: feature indices not strictly increasing at {idx}")
        try:
            count = float(count_str)
        except ValueError:
            raise DataError(f"{where}: non-numeric count {count_str!r}") from None
        if not math.isfinite(count) or count < 0:
            raise DataError(f"{where}: count must be finite and >= 0, got {count_str!r}")
        feats[idx] = count
        last_idx = idx
    return feats


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from None


def parse_labeled_file(path: Path, input_dim: int) -> list[tuple[Features, int]]:
    samples = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        where = f"{path}:{lineno}"
        label_str, _, feature_part = line.partition("\t")
        label_str = label_str.strip()
        if label_str not in ("0", "1"):
            raise DataError(f"{where}: label must be 0 or 1, got {label_str!r}")
        samples.append((_parse_features(feature_part, input_dim, where), int(label_str)))
    return samples


def parse_unlabeled_file(path: Path, input_dim: int) -> list[Features]:
    return [
        _parse_features(line, input_dim, f"{path}:{lineno}")
        for lineno, line in enumerate(_read_lines(path), start=1)
    ]


def load_domain(path, input_dim: int) -> DomainDataset:
    """Load one domain directory (labeled.tsv + unlabeled.tsv)."""
    path = Path(path)
    labeled = parse_labeled_file(path / "labeled.tsv", input_dim)
    unlabeled = parse_unlabeled_file(path / "unlabeled.tsv", input_dim)
    return DomainDataset(name=path.name, labeled=labeled, unlabeled=unlabeled,
                         input_dim=input_dim)


def load_domain_dirs(data_dir, input_dim: int) -> list[DomainDataset]:
    """All domain subdirectories of data_dir, sorted by name."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"data directory not found: {data_dir}")
    dirs = sorted(p for p in data_dir.iterdir() if p.is_dir())
    if not dirs:
        raise DataError(f"no domain directories under {data_dir}")
    return [load_domain(p, input_dim) for p in dirs]


def load_eval_split(path, input_dim: int) -> DomainDataset | None:
    """Optional held-out test.tsv in a domain directory (labeled format)."""
    path = Path(path)
    test_file = path / "test.tsv"
    if not test_file.is_file():
        return None
    return DomainDataset(name=path.name, labeled=parse_labeled_file(test_file, input_dim),
                         unlabeled=[], input_dim=input_dim)


def format_features(feats: Features) -> str:
    return " ".join(f"{idx}:{repr(float(feats[idx]))}" for idx in sorted(feats))


def save_domain(dataset: DomainDataset, path, test: DomainDataset | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    labeled_lines = [f"{label}\t{format_features(f)}" for f, label in dataset.labeled]
    (path / "labeled.tsv").write_text(
        "".join(line + "\n" for line in labeled_lines), encoding="utf-8")
    unlabeled_lines = [format_features(f) for f in dataset.unlabeled]
    (path / "unlabeled.tsv").write_text(
        "".join(line + "\n" for line in unlabeled_lines), encoding="utf-8")
    if test is not None:
        test_lines = [f"{label}\t{format_features(f)}" for f, label in test.labeled]
        (path / "test.tsv").write_text(
            "".join(line + "\n" for line in test_lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# Cross-validation folds


@dataclass
class FoldSpec:
    k: int = 5
    seed: int = 0
    assignments: np.ndarray | None = None


def _canonical_order(dataset: DomainDataset) -> list[int]:
    # Content-based sort so fold assignment ignores row order on disk.
    keys = [
        (label, tuple(sorted(f.items())))
        for f, label in dataset.labeled
    ]
    return sorted(range(len(keys)), key=lambda i: keys[i])


def kfold_split(dataset: DomainDataset, spec: FoldSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified folds, deterministic under seed, disjoint and covering."""
    n = dataset.num_labeled
    if n < spec.k:
        raise UsageError(f"{dataset.name}: {n} labeled samples < {spec.k} folds")
    if spec.k < 2:
        raise UsageError(f"fold count must be >= 2, got {spec.k}")
    rng = np.random.default_rng(spec.seed)
    order = np.array(_canonical_order(dataset))
    shuffled = order[rng.permutation(n)]

    assignments = np.empty(n, dtype=np.int64)
    cursor = 0
    for cls in (0, 1):
        for i in shuffled:
            if dataset.labeled[i][1] == cls:
                assignments[i] = cursor % spec.k
                cursor += 1
    spec.assignments = assignments

    folds = []
    everything = np.arange(n)
    for f in range(spec.k):
        test = everything[assignments == f]
        train = everything[assignments != f]
        folds.append((train, test))
    return folds


# ---------------------------------------------------------------------------
# Synthetic scenarios


@dataclass
class SyntheticScenario:
    """Class-conditional spherical Gaussians, one pair of means per domain.

    The default misalignment layout reverses the class order of one domain
    along the class axis and shifts it, so the marginal feature mixtures
    align under the cheap class-flipping shift. Per-class sample counts may
    differ across domains; a class-prior mismatch makes marginal alignment
    costly at equilibrium regardless of optimization luck, since matching
    mixtures with unequal priors must place majority mass on wrong-class
    regions.
    """

    means: list[tuple[np.ndarray, np.ndarray]]
    sigmas: list[float]
    samples_per_class: list[tuple[int, int]]
    test_per_class: list[int]
    labeled_fraction: float
    seed: int = 0
    domain_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        m = self.num_domains
        if m < 1:
            raise ConfigError("scenario needs at least one domain")
        dims = {mu.shape for pair in self.means for mu in pair}
        if len(dims) != 1:
            raise ConfigError(f"inconsistent mean dimensions: {dims}")
        if len(self.sigmas) != m or len(self.samples_per_class) != m \
                or len(self.test_per_class) != m:
            raise ConfigError("per-domain parameter lists must all have one entry per domain")
        if any(s <= 0 for s in self.sigmas):
            raise ConfigError("degenerate covariance: sigma must be positive")
        if not 0 < self.labeled_fraction <= 1:
            raise ConfigError(f"labeled_fraction must be in (0, 1], got {self.labeled_fraction}")
        self.samples_per_class = [
            (n, n) if isinstance(n, int) else (int(n[0]), int(n[1]))
            for n in self.samples_per_class
        ]
        if any(n0 < 1 or n1 < 1 for n0, n1 in self.samples_per_class):
            raise ConfigError("samples_per_class must be positive")
        for n0, n1 in self.samples_per_class:
            if round(self.labeled_fraction * n0) < 1 or round(self.labeled_fraction * n1) < 1:
                raise ConfigError("labeled_fraction leaves a class without labeled samples")
        if not self.domain_names:
            self.domain_names = [f"d{i}" for i in range(m)]

    @property
    def num_domains(self) -> int:
        return len(self.means)

    @property
    def input_dim(self) -> int:
        return int(self.means[0][0].shape[0])

    @property
    def encoded_dim(self) -> int:
        """Emitted feature width: each signed axis becomes a nonnegative
        positive-part / negative-part pair so the count format holds."""
        return 2 * self.input_dim

    def bayes_accuracy(self) -> tuple[list[float], float]:
        """Closed-form likelihood-ratio accuracy per domain and its mean.

        Equal priors and equal spherical covariance within a domain reduce
        the optimal rule to a hyperplane, with accuracy
        Phi(||mu0 - mu1|| / (2 sigma)).
        """
        per_domain = []
        for (mu0, mu1), sigma in zip(self.means, self.sigmas):
            z = float(np.linalg.norm(mu0 - mu1)) / (2.0 * sigma)
            per_domain.append(0.5 * (1.0 + math.erf(z / math.sqrt(2.0))))
        return per_domain, float(np.mean(per_domain))


@dataclass
class SyntheticBundle:
    train: list[DomainDataset]
    test: list[DomainDataset]
    scenario: SyntheticScenario


def _encode_row(row: np.ndarray) -> Features:
    """Split-sign encoding: value v on axis i lands on feature 2i when
    positive and 2i+1 when negative, keeping every count nonnegative.
    The map is linearly invertible (v = x[2i] - x[2i+1])."""
    feats: Features = {}
    for i, v in enumerate(row):
        if v > 0:
            feats[2 * i] = float(v)
        elif v < 0:
            feats[2 * i + 1] = float(-v)
    return feats


def generate_synthetic(scenario: SyntheticScenario) -> SyntheticBundle:
    """Deterministic sample draw; labeled split is the leading fraction of
    each class draw, the rest becomes unlabeled. Test sets are drawn fresh.
    """
    rng = np.random.default_rng(scenario.seed)
    dim = scenario.input_dim
    train, test = [], []
    for d in range(scenario.num_domains):
        sigma = scenario.sigmas[d]
        labeled: list[tuple[Features, int]] = []
        unlabeled: list[Features] = []
        test_rows: list[tuple[Features, int]] = []
        # Labeled subsets are drawn balanced across classes; any class-prior
        # skew in the pool lands entirely in the unlabeled part.
        total = sum(scenario.samples_per_class[d])
        per_class_lab = int(round(scenario.labeled_fraction * total / 2.0))
        for cls, mu in enumerate(scenario.means[d]):
            n = scenario.samples_per_class[d][cls]
            n_lab = min(n, max(1, per_class_lab))
            draws = rng.normal(mu, sigma, size=(n, dim))
            for row in draws[:n_lab]:
                labeled.append((_encode_row(row), cls))
            for row in draws[n_lab:]:
                unlabeled.append(_encode_row(row))
            for row in rng.normal(mu, sigma, size=(scenario.test_per_class[d], dim)):
                test_rows.append((_encode_row(row), cls))
        name = scenario.domain_names[d]
        width = scenario.encoded_dim
        train.append(DomainDataset(name, labeled, unlabeled, width))
        test.append(DomainDataset(name, test_rows, [], width))
    return SyntheticBundle(train=train, test=test, scenario=scenario)


def misalignment_scenario(num_domains: int = 2, dim: int = 2,
                          class_separation: float = 2.0, flip_shift: float = 3.0,
                          domain_offset: float = 4.0, noise_sigma: float = 0.55,
                          samples_per_class=((500, 500), (500, 500)),
                          test_per_class=(1000, 1000),
                          labeled_fraction: float = 0.04,
                          seed: int = 0) -> SyntheticScenario:
    """Default scenario: a translation trap along the class axis.

    Domain 0 puts class 0 at x=0 and class 1 at x=g (the separation). Every
    further domain reverses the class order and shifts it by its own
    multiple of flip_shift, with a domain cue on the second axis. The two
    marginal feature mixtures then match exactly under the cheap
    orientation-preserving shift, which pairs opposite classes across
    domains; the class-correct match needs a reflection of the class axis.
    Trained with a narrow shared feature and a strong discriminator, the
    domains-only alignment game sometimes locks onto the flipped match and
    collapses the reversed domain, while the joint game stays stable.
    """
    if dim < 2:
        raise ConfigError("misalignment scenario needs dim >= 2")
    g = class_separation
    means = []
    for d in range(num_domains):
        mu0 = np.zeros(dim)
        mu1 = np.zeros(dim)
        if d == 0:
            mu0[0], mu1[0] = 0.0, g
        else:
            mu1[0] = d * flip_shift
            mu0[0] = d * flip_shift + g
        mu0[1] = mu1[1] = d * domain_offset
        means.append((mu0, mu1))
    spc = list(samples_per_class)[:num_domains]
    tpc = list(test_per_class)[:num_domains]
    while len(spc) < num_domains:
        spc.append(spc[-1])
    while len(tpc) < num_domains:
        tpc.append(tpc[-1])
    return SyntheticScenario(
        means=means, sigmas=[noise_sigma] * num_domains,
        samples_per_class=spc, test_per_class=tpc,
        labeled_fraction=labeled_fraction, seed=seed)
