"""Experiment harness: single runs, sweeps, metric CSVs and PGM sample grids."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import math
import re
import statistics
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import Dataset, default_mnist_dir, denormalize, load_mnist
from .estimators import DEFAULT_LR, HyperbolicGAN, TrainingDiverged
from .evaluator import MnistEvaluator, train_evaluator
from .metrics import GaussianSummary
from .networks import Variant, parse_config, render_config
from .rng import Rng

CSV_FIELDS = ("epoch", "variant", "arch", "c_d", "c_g", "seed", "loss_d", "loss_g", "fid", "is", "status")
STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_FAILED = "failed"

# offsets for rng streams derived from the run seed; training uses HyperbolicGAN's own streams
_EVAL_STREAM = 1000
_GRID_STREAM = 2000


# -- configuration ---------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything that determines a run. ``arch`` may carry ``cd=``/``cg=``;
    the ``c_d``/``c_g`` fields, when set, take precedence.
    """

    variant: str = "gan"
    arch: str = "D_eeee G_eeee"
    c_d: float | None = None
    c_g: float | None = None
    seed: int = 0
    epochs: int = 100
    batch_size: int = 64
    d_steps: int = 1
    gp_lambda: float = 10.0
    lr: float | None = None
    beta1: float = 0.5
    beta2: float = 0.999
    eval_samples: int = 10000
    eval_every: int = 5
    is_splits: int = 10
    train_subset: int | None = None
    data_dir: str | None = None
    evaluator_path: str | None = None
    out_dir: str = "runs/default"
    grid_rows: int = 8
    grid_cols: int = 8

    def resolved_arch(self) -> str:
        """Canonical architecture string with curvatures attached.

        ``c_d``/``c_g`` apply only to networks that have hyperbolic layers.
        """
        m = _ARCH_RE.match(self.arch)
        if m is None:
            raise ValueError(f"malformed architecture string: {self.arch!r}")
        curv = {k.lower(): float(v) for k, v in _CURV_RE.findall(m["rest"])}
        if self.c_d is not None:
            curv["cd"] = float(self.c_d)
        if self.c_g is not None:
            curv["cg"] = float(self.c_g)
        parts = [f"D_{m['d']} G_{m['g']}"]
        if "h" in m["d"].lower() and "cd" in curv:
            parts.append(f"cd={curv['cd']!r}")
        if "h" in m["g"].lower() and "cg" in curv:
            parts.append(f"cg={curv['cg']!r}")
        return render_config(parse_config(" ".join(parts), self.variant, layers=None))

    @property
    def effective_lr(self) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR[Variant.parse(self.variant)]

    def curvatures(self) -> tuple[float | None, float | None]:
        cfg = parse_config(self.resolved_arch(), self.variant, layers=None)
        return (cfg.c_d.c if cfg.c_d else None, cfg.c_g.c if cfg.c_g else None)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- text form --

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            values[key.strip().replace("-", "_")] = value.strip()
        return cls().with_overrides(values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def with_overrides(self, values: dict) -> "ExperimentConfig":
        """Apply string or typed values by field name; ``None`` values are skipped."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        changes = {}
        for key, value in values.items():
            if value is None:
                continue
            if key not in fields:
                raise ValueError(f"unknown configuration key {key!r}")
            changes[key] = _coerce(fields[key], value) if isinstance(value, str) else value
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"


_ARCH_RE = re.compile(r"^\s*D_(?P<d>[eh]+)\s+G_(?P<g>[eh]+)(?P<rest>.*)$", re.IGNORECASE)
_CURV_RE = re.compile(r"(c[dg])\s*=\s*([^\s]+)", re.IGNORECASE)


def _has_curvature(arch: str) -> bool:
    m = _ARCH_RE.match(arch)
    return bool(m and _CURV_RE.search(m["rest"]))


def _strip_curvatures(arch: str) -> str:
    m = _ARCH_RE.match(arch)
    if m is None:
        raise ValueError(f"malformed architecture string: {arch!r}")
    return f"D_{m['d']} G_{m['g']}"


def _coerce(f: dataclasses.Field, text: str):
    if text.lower() in ("none", "null", ""):
        return None
    kind = str(f.type)
    if "int" in kind:
        return int(text)
    if "float" in kind:
        return float(text)
    return text


def write_run_meta(cfg: ExperimentConfig, path, extra: dict | None = None) -> None:
    """Echo every effective setting, one ``key = value`` line each."""
    lines = [cfg.to_text().rstrip("\n")]
    derived = {
        "resolved_arch": cfg.resolved_arch(),
        "effective_lr": cfg.effective_lr,
        "note": "epochs, batch_size and d_steps defaults are package choices",
    }
    derived.update(extra or {})
    lines += [f"{k} = {v}" for k, v in derived.items()]
    Path(path).write_text("\n".join(lines) + "\n")


# -- metrics records --------------------------------------------------------------


@dataclass
class MetricsRecord:
    epoch: int
    variant: str
    arch: str
    c_d: float | None
    c_g: float | None
    seed: int
    loss_d: float = math.nan
    loss_g: float = math.nan
    fid: float | None = None
    is_: float | None = None
    status: str = STATUS_OK

    def row(self) -> dict:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return repr(x)
            return str(x)

        values = dataclasses.astuple(self)
        return {k: fmt(v) for k, v in zip(CSV_FIELDS, values)}

    @classmethod
    def from_row(cls, row: dict) -> "MetricsRecord":
        def num(s):
            return float(s) if s != "" else None

        return cls(
            int(row["epoch"]), row["variant"], row["arch"], num(row["c_d"]), num(row["c_g"]),
            int(row["seed"]), float(row["loss_d"]), float(row["loss_g"]), num(row["fid"]),
            num(row["is"]), row["status"],
        )


def write_metrics_csv(path, records: Iterable[MetricsRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(r.row())


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path} does not have the metrics header")
        return [MetricsRecord.from_row(r) for r in reader]


# -- sample grids -----------------------------------------------------------------------


def tile_images(images: np.ndarray, rows: int, cols: int, side: int = 28, gap: int = 2) -> np.ndarray:
    """Row-major tiling of ``rows*cols`` images in ``[-1, 1]`` into a uint8 canvas.

    Separators are black (0).
    """
    images = np.asarray(images)
    if len(images) != rows * cols:
        raise ValueError(f"need {rows * cols} images, got {len(images)}")
    pix = denormalize(images).reshape(-1, side, side)
    canvas = np.zeros((rows * side + (rows - 1) * gap, cols * side + (cols - 1) * gap), dtype=np.uint8)
    for k, img in enumerate(pix):
        r, c = divmod(k, cols)
        top, left = r * (side + gap), c * (side + gap)
        canvas[top : top + side, left : left + side] = img
    return canvas


def write_pgm(path, canvas: np.ndarray) -> None:
    canvas = np.asarray(canvas, dtype=np.uint8)
    h, w = canvas.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(canvas.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path} is not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    body = raw[pos + 1 : pos + 1 + w * h]
    if len(body) != w * h:
        raise ValueError(f"{path} is truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def emit_sample_grid(generator: HyperbolicGAN, rng: Rng, rows: int, cols: int, path) -> np.ndarray:
    """Sample ``rows*cols`` images from a trained model and write them as a PGM."""
    canvas = tile_images(generator.sample(rows * cols, rng=rng), rows, cols)
    write_pgm(path, canvas)
    return canvas


# -- single experiment -------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[MetricsRecord]
    status: str
    model: HyperbolicGAN | None = None
    error: str | None = None

    def evaluations(self) -> list[MetricsRecord]:
        return [r for r in self.records if r.fid is not None]

    @property
    def final_fid(self) -> float | None:
        evals = self.evaluations()
        return evals[-1].fid if evals else None

    @property
    def final_is(self) -> float | None:
        evals = self.evaluations()
        return evals[-1].is_ if evals else None


def load_training_data(cfg: ExperimentConfig) -> Dataset:
    directory = cfg.data_dir or default_mnist_dir()
    if directory is None:
        raise FileNotFoundError("no MNIST directory configured; set data_dir or HYPGAN_MNIST_DIR")
    ds = load_mnist(directory, "train")
    return ds.subset(cfg.train_subset) if cfg.train_subset else ds


def load_or_train_evaluator(cfg: ExperimentConfig) -> MnistEvaluator:
    if cfg.evaluator_path and Path(cfg.evaluator_path).exists():
        return MnistEvaluator.load(cfg.evaluator_path)
    directory = cfg.data_dir or default_mnist_dir()
    train, test = load_mnist(directory, "train"), load_mnist(directory, "test")
    evaluator = train_evaluator(train, test, seed=0)
    if cfg.evaluator_path:
        evaluator.save(cfg.evaluator_path)
    return evaluator


def _evaluate(model: HyperbolicGAN, evaluator: MnistEvaluator, reference: GaussianSummary, cfg, epoch: int):
    rng = Rng(cfg.seed).spawn(_EVAL_STREAM + epoch)
    fake = model.sample(cfg.eval_samples, rng=rng)
    is_mean, _ = evaluator.inception_score(fake, cfg.is_splits)
    return evaluator.fid(reference, fake), is_mean


def run_experiment(
    cfg: ExperimentConfig,
    train: Dataset | None = None,
    evaluator: MnistEvaluator | None = None,
    reference: GaussianSummary | None = None,
    resume: bool = False,
) -> ExperimentResult:
    """Train one configuration, evaluating at epoch 0, every ``eval_every``
    epochs and at the end.

    A run whose training produces a non-finite value ends with a
    ``diverged`` row instead of raising. Outputs in ``cfg.out_dir``:
    ``metrics.csv``, ``run.meta``, ``model.ckpt`` and ``samples.pgm``.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = train if train is not None else load_training_data(cfg)
    evaluator = evaluator if evaluator is not None else load_or_train_evaluator(cfg)
    reference = reference if reference is not None else evaluator.summarize(train.images)
    arch = cfg.resolved_arch()
    c_d, c_g = cfg.curvatures()
    variant = Variant.parse(cfg.variant).value
    write_run_meta(cfg, out / "run.meta", {"train_images": len(train)})

    def record(epoch, loss_d=math.nan, loss_g=math.nan, fid=None, is_=None, status=STATUS_OK):
        return MetricsRecord(epoch, variant, arch, c_d, c_g, cfg.seed, loss_d, loss_g, fid, is_, status)

    ckpt = out / "model.ckpt"
    csv_path = out / "metrics.csv"
    records: list[MetricsRecord] = []
    if resume and ckpt.exists():
        model = HyperbolicGAN.load(ckpt)
        if csv_path.exists():
            records = [r for r in read_metrics_csv(csv_path) if r.epoch <= model.epoch_]
    else:
        model = HyperbolicGAN(
            arch=arch, variant=variant, epochs=cfg.epochs, batch_size=cfg.batch_size, d_steps=cfg.d_steps,
            lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, gp_lambda=cfg.gp_lambda, random_state=cfg.seed,
        ).initialize()
        fid0, is0 = _evaluate(model, evaluator, reference, cfg, 0)
        records.append(record(0, fid=fid0, is_=is0))
    write_metrics_csv(csv_path, records)

    y = train.labels if variant == Variant.CGAN.value else None
    status = STATUS_OK
    error = None
    while model.epoch_ < cfg.epochs:
        try:
            model.partial_fit(train.images, y)
        except TrainingDiverged as exc:
            status, error = STATUS_DIVERGED, str(exc)
            records.append(record(exc.epoch, status=STATUS_DIVERGED))
            break
        h = model.history_[-1]
        rec = record(model.epoch_, h["loss_d"], h["loss_g"])
        if model.epoch_ % cfg.eval_every == 0 or model.epoch_ == cfg.epochs:
            rec.fid, rec.is_ = _evaluate(model, evaluator, reference, cfg, model.epoch_)
            model.save(ckpt)
        records.append(rec)
        write_metrics_csv(csv_path, records)

    write_metrics_csv(csv_path, records)
    if status == STATUS_OK:
        emit_sample_grid(model, Rng(cfg.seed).spawn(_GRID_STREAM), cfg.grid_rows, cfg.grid_cols, out / "samples.pgm")
    return ExperimentResult(cfg, records, status, model, error)


# -- sweeps -------------------------------------------------------------------------------------


@dataclass
class SweepSpec:
    """Cartesian grid over variants, architectures, curvatures and seeds.

    Each curvature is applied to every hyperbolic network of an
    architecture. The all-euclidean baseline is always added once per
    variant.
    """

    variants: list[str] = field(default_factory=lambda: ["gan"])
    archs: list[str] = field(default_factory=lambda: ["D_eeee G_eeee"])
    curvatures: list[float] = field(default_factory=lambda: [10.0, 1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5])
    seeds: list[int] = field(default_factory=lambda: [0])
    include_baseline: bool = True

    def cells(self) -> list[tuple[str, str]]:
        """Unique ``(variant, resolved arch)`` pairs in a stable order."""
        out: list[tuple[str, str]] = []
        for variant in self.variants:
            variant = Variant.parse(variant).value
            archs = list(self.archs)
            if self.include_baseline and "D_eeee G_eeee" not in [_strip_curvatures(a) for a in archs]:
                archs.insert(0, "D_eeee G_eeee")
            for arch in archs:
                tags = _strip_curvatures(arch)
                if _has_curvature(arch) or "h" not in tags.lower():
                    candidates = [ExperimentConfig(variant=variant, arch=arch).resolved_arch()]
                else:
                    candidates = [
                        ExperimentConfig(variant=variant, arch=tags, c_d=c, c_g=c).resolved_arch()
                        for c in self.curvatures
                    ]
                for a in candidates:
                    if (variant, a) not in out:
                        out.append((variant, a))
        return out


@dataclass
class CellSummary:
    variant: str
    arch: str
    c_d: float | None
    c_g: float | None
    seeds: list[int]
    fids: list[float | None]
    scores: list[float | None]
    statuses: list[str]

    def _stats(self, values):
        vals = [v for v in values if v is not None]
        if not vals:
            return None, None
        return statistics.fmean(vals), (statistics.pstdev(vals) if len(vals) > 1 else 0.0)

    @property
    def fid_stats(self):
        return self._stats(self.fids)

    @property
    def is_stats(self):
        return self._stats(self.scores)


SUMMARY_FIELDS = (
    "variant", "arch", "c_d", "c_g", "n_seeds", "n_ok", "fid_mean", "fid_std", "is_mean", "is_std",
    "seeds", "fid_per_seed", "is_per_seed", "statuses",
)


@dataclass
class SweepResult:
    cells: list[CellSummary]
    results: list[ExperimentResult]

    @property
    def all_clean(self) -> bool:
        """True when every run finished or was cleanly marked diverged."""
        return all(r.status in (STATUS_OK, STATUS_DIVERGED) for r in self.results)

    def write_summary(self, path) -> None:
        def fmt(x):
            return "" if x is None else (repr(x) if isinstance(x, float) else str(x))

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(SUMMARY_FIELDS)
            for c in self.cells:
                fm, fs = c.fid_stats
                im, is_ = c.is_stats
                writer.writerow([
                    c.variant, c.arch, fmt(c.c_d), fmt(c.c_g), len(c.seeds), c.statuses.count(STATUS_OK),
                    fmt(fm), fmt(fs), fmt(im), fmt(is_),
                    ";".join(map(str, c.seeds)), ";".join(fmt(v) for v in c.fids),
                    ";".join(fmt(v) for v in c.scores), ";".join(c.statuses),
                ])

    def pivot(self, metric: str = "fid") -> str:
        """Text table: one row per (variant, architecture tags), one column per curvature."""
        idx = 0 if metric == "fid" else 1
        columns: list[str] = []
        table: dict[tuple[str, str], dict[str, str]] = {}
        for c in self.cells:
            curv = c.c_d if c.c_d is not None else c.c_g
            col = "euclid" if curv is None else f"{curv:g}"
            if c.c_d is not None and c.c_g is not None and c.c_d != c.c_g:
                col = f"{c.c_d:g}/{c.c_g:g}"
            if col not in columns:
                columns.append(col)
            mean, std = (c.fid_stats, c.is_stats)[idx]
            cell = "diverged" if mean is None else f"{mean:.3f}+-{std:.3f}"
            table.setdefault((c.variant, _strip_curvatures(c.arch)), {})[col] = cell
        header = ["variant", "arch", *columns]
        rows = [header] + [[v, a, *(cells.get(col, "") for col in columns)] for (v, a), cells in table.items()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def _run_cell(args):
    cfg, train, evaluator, reference = args
    try:
        result = run_experiment(cfg, train, evaluator, reference)
        result.model = None  # keep results light when they cross process boundaries
        return result
    except Exception:
        return ExperimentResult(cfg, [], STATUS_FAILED, None, traceback.format_exc())


def run_sweep(
    spec: SweepSpec,
    base: ExperimentConfig,
    train: Dataset | None = None,
    evaluator: MnistEvaluator | None = None,
    workers: int = 1,
) -> SweepResult:
    """Run every (cell, seed) pair; failures are recorded and the sweep
    continues. Writes ``summary.csv``, ``all_metrics.csv`` and pivot tables
    under ``base.out_dir``.
    """
    root = Path(base.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    train = train if train is not None else load_training_data(base)
    evaluator = evaluator if evaluator is not None else load_or_train_evaluator(base)
    reference = evaluator.summarize(train.images)

    jobs = []
    for (variant, arch), seed in itertools.product(spec.cells(), spec.seeds):
        tag = f"{variant}__{arch.replace(' ', '_').replace('=', '')}__seed{seed}"
        cfg = base.replace(variant=variant, arch=arch, c_d=None, c_g=None, seed=seed, out_dir=str(root / tag))
        jobs.append((cfg, train, evaluator, reference))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    cells = []
    for variant, arch in spec.cells():
        mine = [r for r in results if r.config.variant == variant and r.config.arch == arch]
        c_d, c_g = mine[0].config.curvatures()
        cells.append(CellSummary(
            variant, arch, c_d, c_g,
            [r.config.seed for r in mine],
            [r.final_fid if r.status == STATUS_OK else None for r in mine],
            [r.final_is if r.status == STATUS_OK else None for r in mine],
            [r.status for r in mine],
        ))
    sweep = SweepResult(cells, results)
    sweep.write_summary(root / "summary.csv")
    write_metrics_csv(root / "all_metrics.csv", [rec for r in results for rec in r.records])
    (root / "pivot_fid.txt").write_text(sweep.pivot("fid"))
    (root / "pivot_is.txt").write_text(sweep.pivot("is"))
    failures = [r for r in results if r.status == STATUS_FAILED]
    if failures:
        (root / "failures.txt").write_text("\n\n".join(f"{r.config.out_dir}\n{r.error}" for r in failures))
    return sweep
