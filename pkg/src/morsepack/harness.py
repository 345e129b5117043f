"""Synthetic grids and signals, experiment orchestration and reports."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .complex import BasedChainComplex, Signal, load, simplicial
from .hodge import hodge_basis
from .optimize import OptimizerConfig, Trajectory, run_trajectory, trajectory_csv

SIGNAL_KINDS = ("uniform", "normal", "height", "radial")
SEED_ENV = "MORSEPACK_SEED"
DIFF_TOL = 1e-8


# ---------------------------------------------------------------------------
# generators


def generate_grid_complex(rows: int, cols: int, jitter_seed: int = 0,
                          jitter: float | None = None) -> tuple[BasedChainComplex, np.ndarray]:
    """Triangulated unit square with rows x cols squares, each cut along its rising diagonal.

    Vertices sit on the lattice up to a seeded uniform shift of at most ``jitter`` per
    coordinate (default 0.3 / max(rows, cols)).  Returns the complex and vertex coordinates.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid needs rows, cols >= 1")
    jitter = 0.3 / max(rows, cols) if jitter is None else jitter
    vid = lambda i, j: i * (cols + 1) + j   # noqa: E731
    ys, xs = np.meshgrid(np.arange(rows + 1) / rows, np.arange(cols + 1) / cols, indexing="ij")
    coords = np.column_stack([xs.ravel(), ys.ravel()])
    if jitter:
        rng = np.random.default_rng(jitter_seed)
        coords = coords + rng.uniform(-jitter, jitter, size=coords.shape)
    edges, tris = set(), []
    for i in range(rows):
        for j in range(cols):
            a, b, c, d = vid(i, j), vid(i, j + 1), vid(i + 1, j), vid(i + 1, j + 1)
            for t in ((a, b, d), (a, c, d)):
                tris.append(t)
                edges.update({(t[0], t[1]), (t[0], t[2]), (t[1], t[2])})
    names = [f"v{k}" for k in range(len(coords))]
    return simplicial(names, sorted(edges), sorted(tris)), coords


def _edge_endpoints(complex: BasedChainComplex) -> np.ndarray:
    d1 = complex.boundary[1].tocsc()
    ends = np.empty((d1.shape[1], 2), dtype=int)
    for c in range(d1.shape[1]):
        ends[c] = np.sort(d1.indices[d1.indptr[c]:d1.indptr[c + 1]])
    return ends


def generate_signal(complex: BasedChainComplex, coords: np.ndarray | None, kind: str, seed: int = 0,
                    mean: float = 0.5, sd: float = 0.1) -> Signal:
    """Signal on the edges: height, radial distance, uniform [0, 1] or normal(mean, sd)."""
    m = complex.dim(1)
    if kind == "uniform":
        return Signal(1, np.random.default_rng(seed).uniform(0.0, 1.0, m))
    if kind == "normal":
        return Signal(1, np.random.default_rng(seed).normal(mean, sd, m))
    if kind not in ("height", "radial"):
        raise ValueError(f"unknown signal kind {kind!r}; expected one of {SIGNAL_KINDS}")
    if coords is None:
        raise ValueError(f"{kind} signals need vertex coordinates")
    mid = coords[_edge_endpoints(complex)].mean(axis=1)
    if kind == "height":
        return Signal(1, mid[:, 1].copy())
    return Signal(1, np.hypot(mid[:, 0] - 0.5, mid[:, 1] - 0.5))


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentSpec:
    grid_rows: int = 8
    grid_cols: int = 8
    jitter_seed: int = 0
    file: str | None = None               # complex JSON; may carry "coords"
    signal_kind: str = "height"
    signal_mean: float = 0.5
    signal_sd: float = 0.1
    degree: int = 1
    k_max: int = 10
    n_trials: int = 10
    seed: int = 0
    seeds: tuple[int, ...] | None = None  # default: seed, seed + 1, ...
    modes: tuple[str, ...] = ("optimal", "random")

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.signal_kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.signal_kind!r}")
        if self.seeds is not None and len(self.seeds) != self.n_trials:
            raise ValueError("seeds must list n_trials entries")
        for m in self.modes:
            if m not in ("optimal", "random"):
                raise ValueError(f"unknown mode {m!r}")

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        gen = data.pop("generator", None)
        if isinstance(gen, dict):
            data.update(gen)
        elif isinstance(gen, str):
            data["file"] = gen
        kind = data.get("signal_kind")
        if isinstance(kind, dict):
            data["signal_kind"] = kind["kind"]
            data["signal_mean"] = kind.get("mean", 0.5)
            data["signal_sd"] = kind.get("sd", 0.1)
        for key in ("seeds", "modes"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment fields {sorted(unknown)}")
        return cls(**data)

    def trial_seeds(self) -> tuple[int, ...]:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            base = int(env)
            return tuple(base + i for i in range(self.n_trials))
        if self.seeds is not None:
            return self.seeds
        return tuple(self.seed + i for i in range(self.n_trials))

    def to_json(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.trial_seeds())
        out["modes"] = list(self.modes)
        return out


@dataclass
class ModeResult:
    mean: list[float]
    stderr: list[float]
    curves: dict[int, list[float]]
    stopped_early: dict[int, bool]


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    modes: dict[str, ModeResult]
    versions: dict[str, str]
    wall_time: float = 0.0
    trajectories: dict[tuple[str, int], Trajectory] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        """Deterministic content only; wall time lives in timing.json."""
        return {
            "spec": self.spec.to_json(),
            "versions": self.versions,
            "modes": {m: {"mean": r.mean, "stderr": r.stderr,
                          "curves": {str(s): c for s, c in r.curves.items()},
                          "stopped_early": {str(s): v for s, v in r.stopped_early.items()}}
                      for m, r in self.modes.items()},
        }


def _versions() -> dict[str, str]:
    import scipy

    from . import __version__
    return {"morsepack": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def build_inputs(spec: ExperimentSpec, seed: int) -> tuple[BasedChainComplex, Signal]:
    if spec.file:
        path = Path(spec.file)
        try:
            complex = load(path)
            raw = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read complex from {path}: {exc}") from exc
        coords = np.asarray(raw["coords"], dtype=float) if "coords" in raw else None
    else:
        complex, coords = generate_grid_complex(spec.grid_rows, spec.grid_cols, spec.jitter_seed)
    return complex, generate_signal(complex, coords, spec.signal_kind, seed, spec.signal_mean, spec.signal_sd)


def aggregate(curves: dict[int, list[float]]) -> tuple[list[float], list[float]]:
    """Per-step mean and standard error over seeds, up to the shortest curve."""
    if not curves:
        return [], []
    length = min(len(c) for c in curves.values())
    arr = np.array([c[:length] for _, c in sorted(curves.items())]).reshape(len(curves), length)
    mean = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0]) if arr.shape[0] > 1 else np.zeros(length)
    return [float(x) for x in mean], [float(x) for x in se]


def run_experiment(spec: ExperimentSpec, outdir: str | Path | None = None) -> ExperimentReport:
    """Run every (mode, seed) trajectory, aggregate, and optionally write the outputs."""
    t0 = time.perf_counter()
    seeds = spec.trial_seeds()
    results, trajs = {}, {}
    for mode in spec.modes:
        curves, stopped = {}, {}
        for seed in seeds:
            complex, s = build_inputs(spec, seed)
            cfg = OptimizerConfig(spec.degree, spec.k_max, seed, mode)
            t = run_trajectory(complex, s, cfg)
            trajs[(mode, seed)] = t
            curves[seed] = [r.loss_total for r in t.records]
            stopped[seed] = t.stopped_early
        mean, se = aggregate(curves)
        results[mode] = ModeResult(mean, se, curves, stopped)
    report = ExperimentReport(spec, results, _versions(), time.perf_counter() - t0, trajs)
    if outdir is not None:
        write_report(report, outdir)
    return report


def write_report(report: ExperimentReport, outdir: str | Path) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"wall_time_s": report.wall_time}, indent=2) + "\n")
    first = {}
    for (mode, seed), t in sorted(report.trajectories.items()):
        (out / f"trajectory_{mode}_seed{seed}.csv").write_text(trajectory_csv(t.source, t.records))
        first.setdefault(mode, (seed, t))
    for mode, (seed, t) in first.items():
        _, s = build_inputs(report.spec, seed)
        rows = project_report(t.source, s, t)
        (out / f"hodge_projection_{mode}_seed{seed}.csv").write_text(projection_csv(rows))


# ---------------------------------------------------------------------------
# Hodge projection table


@dataclass(frozen=True)
class ProjectionRow:
    component: str        # im_d | ker | im_dt
    index: int
    signal: float
    reconstructed: float
    differs: bool


def _reconstruct(complex: BasedChainComplex, s: Signal, retraction) -> np.ndarray:
    if isinstance(retraction, Trajectory):
        t = retraction
        if t.retraction is not None:
            retraction = t.retraction
        else:
            pairs = t.matching.pairs
            if any(a.degree == s.degree for a, _ in pairs):
                raise ValueError("trajectory pairs degree-n cells down; rerun with track_maps")
            # only (n+1, n)-pairs: phi_n is the inclusion of the surviving n-cells
            dead = {b.index for _, b in pairs if b.degree == s.degree}
            keep = [i for i in range(complex.dim(s.degree)) if i not in dead]
            out = np.zeros(complex.dim(s.degree))
            out[keep] = t.signal.values
            return out
    n = s.degree
    return retraction.phi[n] @ (retraction.psi[n] @ s.values)


def project_report(complex: BasedChainComplex, s: Signal, retraction) -> list[ProjectionRow]:
    """Coefficients of s and of phi psi s against each Hodge basis vector of degree n."""
    n = s.degree
    rec = _reconstruct(complex, s, retraction)
    b = hodge_basis(complex)[n]
    W = complex.W(n)
    scale = max(1.0, float(np.sqrt(s.values @ W @ s.values)))
    rows = []
    for label, mat in (("im_d", b.L_plus), ("ker", b.kernel), ("im_dt", b.R_plus)):
        cs, cr = mat.T @ W @ s.values, mat.T @ W @ rec
        for i in range(mat.shape[1]):
            rows.append(ProjectionRow(label, i, float(cs[i]), float(cr[i]),
                                      bool(abs(cs[i] - cr[i]) > DIFF_TOL * scale)))
    return rows


def projection_csv(rows: list[ProjectionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "index", "signal", "reconstructed", "differs"])
    for r in rows:
        w.writerow([r.component, r.index, repr(r.signal), repr(r.reconstructed), int(r.differs)])
    return buf.getvalue()
