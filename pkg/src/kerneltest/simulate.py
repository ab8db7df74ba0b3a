"""Zero-inflated negative binomial scenarios and a calibration/power harness.

A scenario holds one gene category per Korthauer-type alternative
(``DE``, ``DM``, ``DP``, ``DB``) plus two null categories (``H0_unimodal``,
``H0_bimodal``).  Each category gives, for both conditions, a mixture of
negative binomials; a per-gene dropout probability drawn uniformly in
``dropout_range`` zeroes counts on top of the mixture and is shared by the
two conditions.

Presets are TOML files::

    name = "desk"
    n_per_condition = [50, 50]
    dropout_range = [0.7, 0.9]

    [genes]                 # genes per category
    DE = 100
    H0_unimodal = 100

    [categories.DE]         # list of NB components per condition
    cond1 = [{mu = 15.0, theta = 10.0, weight = 1.0}]
    cond2 = [{mu = 35.0, theta = 10.0, weight = 1.0}]

Shipped presets live in ``kerneltest/presets`` and are loaded by name.
"""

from __future__ import annotations

import io
import sys
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy import stats as sps

from .ingest import Dataset
from .inference import bh_adjust
from .kernels import KernelSpec
from .testing import feature_statistics

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ALTERNATIVES",
    "NULLS",
    "CATEGORIES",
    "SimulationError",
    "NBComponent",
    "ZinbParams",
    "CategorySpec",
    "ScenarioSpec",
    "load_preset",
    "available_presets",
    "sample_zinb",
    "generate_scenario",
    "KernelTestConfig",
    "BaselineTest",
    "BenchmarkReport",
    "metrics_from_pvalues",
    "benchmark_pvalues",
    "run_benchmark",
]

ALTERNATIVES = ("DE", "DM", "DP", "DB")
NULLS = ("H0_unimodal", "H0_bimodal")
CATEGORIES = ALTERNATIVES + NULLS

CONDITIONS = ("cond1", "cond2")


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class NBComponent:
    mu: float
    theta: float
    weight: float = 1.0


@dataclass(frozen=True)
class ZinbParams:
    """Mixture of negative binomials with extra zeros (probability ``dropout``)."""

    components: tuple[NBComponent, ...]
    dropout: float = 0.0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, NBComponent) else NBComponent(**c)
                      for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise SimulationError("mixture needs at least one component")
        for c in comps:
            if not (c.mu > 0 and c.theta > 0 and c.weight > 0):
                raise SimulationError(f"invalid NB component {c}")
        if abs(sum(c.weight for c in comps) - 1.0) > 1e-9:
            raise SimulationError("mixture weights must sum to 1")
        if not 0.0 <= self.dropout <= 1.0:
            raise SimulationError(f"dropout must lie in [0, 1], got {self.dropout}")

    @property
    def nb_mean(self) -> float:
        return sum(c.weight * c.mu for c in self.components)

    @property
    def mean(self) -> float:
        return self.nb_mean * (1.0 - self.dropout)

    def with_dropout(self, dropout: float) -> "ZinbParams":
        return replace(self, dropout=dropout)


def sample_zinb(params: ZinbParams, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` counts: pick a component by weight, draw NB(mu, theta),
    then zero the draw with probability ``dropout``.

    ``seed`` may be an int, a sequence of ints or a ``numpy`` Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comps = params.components
    weights = np.array([c.weight for c in comps])
    which = rng.choice(len(comps), size=n, p=weights / weights.sum())
    mu = np.array([c.mu for c in comps])[which]
    theta = np.array([c.theta for c in comps])[which]
    counts = rng.negative_binomial(theta, theta / (theta + mu)).astype(np.float64)
    counts[rng.random(n) < params.dropout] = 0.0
    return counts


@dataclass(frozen=True)
class CategorySpec:
    cond1: ZinbParams
    cond2: ZinbParams

    def mean_gap(self) -> float:
        return abs(self.cond1.nb_mean - self.cond2.nb_mean)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    n_per_condition: tuple[int, int]
    genes: Mapping[str, int]
    categories: Mapping[str, CategorySpec]
    dropout_range: tuple[float, float] = (0.7, 0.9)
    description: str = ""
    replicates: int = 100

    def __post_init__(self):
        for key in self.genes:
            if key not in CATEGORIES:
                raise SimulationError(f"unknown category {key!r}")
            if key not in self.categories:
                raise SimulationError(f"no mixture parameters for category {key!r}")
        if any(int(v) < 0 for v in self.genes.values()):
            raise SimulationError("gene counts must be nonnegative")
        if self.n_genes < 1:
            raise SimulationError("scenario has no genes")
        lo, hi = self.dropout_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise SimulationError(f"invalid dropout range {self.dropout_range}")
        if self.replicates < 1:
            raise SimulationError("default replicate count must be >= 1")
        if min(self.n_per_condition) < 2:
            raise SimulationError("each condition needs at least 2 cells")
        for key, cat in self.categories.items():
            gap = cat.mean_gap()
            if key == "DB" and gap > 1e-9:
                raise SimulationError(f"DB means differ by {gap}")
            if key in NULLS and cat.cond1 != cat.cond2:
                raise SimulationError(f"{key} must use the same law in both conditions")
            if key in ("DE", "DP") and gap == 0:
                raise SimulationError(f"{key} needs different means")
            if key == "DM" and len(cat.cond1.components) == len(cat.cond2.components):
                raise SimulationError("DM needs different numbers of modes")

    @property
    def n_genes(self) -> int:
        return sum(int(v) for v in self.genes.values())

    def layout(self) -> list[str]:
        """Ground-truth category of every gene, in output order."""
        return [c for c in CATEGORIES for _ in range(int(self.genes.get(c, 0)))]

    def with_sizes(self, n1: int | None = None, n2: int | None = None,
                   genes: Mapping[str, int] | None = None) -> "ScenarioSpec":
        sizes = (n1 or self.n_per_condition[0], n2 or self.n_per_condition[1])
        return replace(self, n_per_condition=sizes,
                       genes=dict(self.genes) if genes is None else dict(genes))


def _parse_preset(data: dict) -> ScenarioSpec:
    try:
        cats = {}
        for key, body in data["categories"].items():
            cats[key] = CategorySpec(
                ZinbParams(tuple(NBComponent(**c) for c in body["cond1"])),
                ZinbParams(tuple(NBComponent(**c) for c in body["cond2"])),
            )
        n1, n2 = data["n_per_condition"]
        genes = {k: int(v) for k, v in data["genes"].items()}
        return ScenarioSpec(
            name=data.get("name", "custom"),
            n_per_condition=(int(n1), int(n2)),
            genes=genes,
            categories=cats,
            dropout_range=tuple(data.get("dropout_range", (0.7, 0.9))),
            description=data.get("description", ""),
            replicates=int(data.get("replicates", 100)),
        )
    except (KeyError, TypeError) as exc:
        raise SimulationError(f"malformed preset: {exc}") from exc


def available_presets() -> list[str]:
    root = resources.files("kerneltest") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name_or_path: str | Path) -> ScenarioSpec:
    """Load a shipped preset by name or a TOML file by path."""
    path = Path(name_or_path)
    if path.suffix == ".toml" and path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        res = resources.files("kerneltest") / "presets" / f"{name_or_path}.toml"
        if not res.is_file():
            raise SimulationError(
                f"unknown preset {name_or_path!r}; available: {available_presets()}"
            )
        text = res.read_text(encoding="utf-8")
    return _parse_preset(tomllib.loads(text))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_scenario(spec: ScenarioSpec, seed=0) -> Dataset:
    """Simulate one dataset: cells of ``cond1`` first, genes grouped by category.

    ``feature_categories`` holds the ground truth and ``feature_dropout`` the
    dropout probability used for each gene.
    """
    rng = _rng(seed)
    n1, n2 = spec.n_per_condition
    layout = spec.layout()
    if len(layout) != spec.n_genes:
        raise SimulationError("inconsistent gene-count bookkeeping")
    lo, hi = spec.dropout_range
    dropout = rng.uniform(lo, hi, size=len(layout))
    values = np.empty((n1 + n2, len(layout)))
    for g, cat in enumerate(layout):
        c = spec.categories[cat]
        values[:n1, g] = sample_zinb(c.cond1.with_dropout(dropout[g]), n1, rng)
        values[n1:, g] = sample_zinb(c.cond2.with_dropout(dropout[g]), n2, rng)
    width = len(str(len(layout)))
    names = [f"{cat}_{g:0{width}d}" for g, cat in enumerate(layout)]
    cells = [f"c{i:0{len(str(n1 + n2))}d}" for i in range(n1 + n2)]
    labels = [CONDITIONS[0]] * n1 + [CONDITIONS[1]] * n2
    return Dataset(values, cells, names, labels, feature_categories=layout,
                   feature_dropout=dropout, meta={"scenario": spec.name})


# --------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class KernelTestConfig:
    """Univariate asymptotic KFDA test used by the benchmark."""

    kernel: str = "gauss"
    T: int = 4
    bandwidth: Union[float, str] = "median"
    known_dropout: bool = True

    @property
    def label(self) -> str:
        return f"kfda-{self.kernel}-T{self.T}"


@dataclass(frozen=True)
class BaselineTest:
    """Per-gene classical test: ``"welch"`` (t-test) or ``"ks"``."""

    name: str

    def __post_init__(self):
        if self.name not in ("welch", "ks"):
            raise SimulationError(f"unknown baseline {self.name!r}")

    @property
    def label(self) -> str:
        return self.name

    def pvalues(self, x: np.ndarray, n1: int) -> np.ndarray:
        a, b = x[:n1], x[n1:]
        out = np.ones(x.shape[1])
        live = np.ptp(x, axis=0) > 0
        if self.name == "welch":
            with np.errstate(all="ignore"):
                p = sps.ttest_ind(a[:, live], b[:, live], equal_var=False).pvalue
        else:
            # tied counts make the exact null fail; scipy then uses the asymptotic one
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                p = np.array([sps.ks_2samp(a[:, g], b[:, g]).pvalue
                              for g in np.flatnonzero(live)])
        out[live] = np.nan_to_num(p, nan=1.0)
        return out


TestLike = Union[KernelTestConfig, BaselineTest, Callable[[np.ndarray, int], np.ndarray]]


@dataclass
class BenchmarkReport:
    """Rates at level ``alpha`` over ``replicates`` simulated datasets.

    ``type1`` and ``power`` use raw p-values; ``fdr`` and ``tdr`` use
    BH-adjusted p-values computed over all genes of a replicate.
    """

    test: str
    alpha: float
    replicates: int
    seed: int
    type1: dict[str, float] = field(default_factory=dict)
    power: dict[str, float] = field(default_factory=dict)
    fdr: float = 0.0
    tdr: dict[str, float] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, float]]:
        out = [("type1", k, v) for k, v in self.type1.items()]
        out += [("power", k, v) for k, v in self.power.items()]
        out.append(("fdr", "all", self.fdr))
        out += [("tdr", k, v) for k, v in self.tdr.items()]
        return out

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("test\tmetric\tcategory\tvalue\treplicates\talpha\tseed\n")
        for metric, cat, v in self.rows():
            buf.write(f"{self.test}\t{metric}\t{cat}\t{v:.17g}\t{self.replicates}"
                      f"\t{self.alpha:.17g}\t{self.seed}\n")
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{self.test}: {self.replicates} replicates, alpha={self.alpha}, seed={self.seed}"]
        if self.type1:
            lines.append("  type-I  " + "  ".join(f"{k}={v:.4f}" for k, v in self.type1.items()))
        if self.power:
            lines.append("  power   " + "  ".join(f"{k}={v:.4f}" for k, v in self.power.items()))
        lines.append(f"  FDR     {self.fdr:.4f}")
        if self.tdr:
            lines.append("  TDR     " + "  ".join(f"{k}={v:.4f}" for k, v in self.tdr.items()))
        return "\n".join(lines)


def metrics_from_pvalues(
    pvalues: np.ndarray,
    categories: Sequence[str],
    alpha: float = 0.05,
    test: str = "test",
    seed: int = 0,
) -> BenchmarkReport:
    """Score a replicates x genes p-value matrix against ground truth.

    NaN p-values (untestable genes) count as non-rejections.
    """
    p = np.atleast_2d(np.asarray(pvalues, dtype=np.float64))
    p = np.where(np.isfinite(p), p, 1.0)
    cats = np.asarray(categories)
    if p.shape[1] != cats.size:
        raise SimulationError("p-value columns do not match the category layout")
    reject = p <= alpha
    padj = np.vstack([bh_adjust(row) for row in p])
    discover = padj <= alpha
    report = BenchmarkReport(test, alpha, p.shape[0], seed)
    null_mask = np.isin(cats, NULLS)
    for c in CATEGORIES:
        mask = cats == c
        if not mask.any():
            continue
        if c in NULLS:
            report.type1[c] = float(reject[:, mask].mean())
        else:
            report.power[c] = float(reject[:, mask].mean())
            report.tdr[c] = float(discover[:, mask].mean())
    if null_mask.any():
        report.type1["H0"] = float(reject[:, null_mask].mean())
    alt_mask = ~null_mask
    if alt_mask.any():
        report.power["all"] = float(reject[:, alt_mask].mean())
        report.tdr["all"] = float(discover[:, alt_mask].mean())
    false = discover[:, null_mask].sum(axis=1)
    total = discover.sum(axis=1)
    report.fdr = float(np.mean(false / np.maximum(total, 1)))
    return report


def _replicate_pvalues(spec, tests, seed, b, threads):
    data = generate_scenario(spec, np.random.default_rng([seed, b]))
    n1 = spec.n_per_condition[0]
    x = data.values
    out: list[np.ndarray | None] = [None] * len(tests)
    # kernel configs sharing a kernel share one spectrum per gene
    groups: dict[tuple, list[int]] = {}
    for i, t in enumerate(tests):
        if isinstance(t, KernelTestConfig):
            groups.setdefault((t.kernel, t.bandwidth, t.known_dropout), []).append(i)
        elif isinstance(t, BaselineTest):
            out[i] = t.pvalues(x, n1)
        else:
            out[i] = np.asarray(t(x, n1), dtype=np.float64)
    for (kern, bw, known), idx in groups.items():
        truncs = sorted({tests[i].T for i in idx})
        dropout = data.feature_dropout if (kern.replace("-", "_") == "zi_gauss" and known) else None
        fs = feature_statistics(x, n1, KernelSpec(kern, bw), truncs, dropout, threads)
        pv = fs.pvalues()
        for i in idx:
            out[i] = pv[:, truncs.index(tests[i].T)]
    return out


def benchmark_pvalues(
    spec: ScenarioSpec,
    tests: Sequence[TestLike],
    replicates: int,
    seed: int = 0,
    threads: int | None = None,
) -> list[np.ndarray]:
    """Raw p-value matrices (replicates x genes), one per test.

    Replicate ``b`` is simulated from a generator seeded by ``(seed, b)``.
    """
    if replicates < 1:
        raise SimulationError("need at least one replicate")
    mats = [np.empty((replicates, spec.n_genes)) for _ in tests]
    for b in range(replicates):
        for m, p in zip(mats, _replicate_pvalues(spec, list(tests), seed, b, threads)):
            m[b] = p
    return mats


def _label(t: TestLike) -> str:
    return getattr(t, "label", getattr(t, "__name__", "custom"))


def run_benchmark(
    spec: ScenarioSpec,
    tests: TestLike | Sequence[TestLike] = KernelTestConfig(),
    replicates: int | None = None,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int | None = None,
    dump: dict | None = None,
) -> BenchmarkReport | list[BenchmarkReport]:
    """Simulate ``replicates`` datasets, test every gene, and score the tests.

    ``tests`` is one test or a list of them: :class:`KernelTestConfig`,
    :class:`BaselineTest`, or a callable ``f(x, n1) -> p-values per column``.
    If ``dump`` is a dict it receives the raw p-value matrices by test label.
    ``replicates`` defaults to the preset's own count.
    """
    if replicates is None:
        replicates = spec.replicates
    single = not isinstance(tests, (list, tuple))
    tests = [tests] if single else list(tests)
    mats = benchmark_pvalues(spec, tests, replicates, seed, threads)
    layout = spec.layout()
    reports = []
    for t, m in zip(tests, mats):
        label = _label(t)
        if dump is not None:
            dump[label] = m
        reports.append(metrics_from_pvalues(m, layout, alpha, label, seed))
    return reports[0] if single else reports
