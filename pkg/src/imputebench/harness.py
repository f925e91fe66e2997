"""Experiment grid: signal level x imputation method x missingness.

One cell = one (population, method, mechanism) triple, replicated
t_rep times: draw a sample, mask it, impute it, estimate the downstream
parameters, then average field-wise. Every replication owns three
private random streams (sampling, amputation, imputation) derived from
the base seed, the cell's canonical index, and the replication number,
so any cell or replication can be recomputed in isolation and results
do not depend on execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ampute import (
    CompletedDataset,
    Mechanism,
    MissingnessSpec,
    ampute,
)
from .datagen import Dataset, PopulationSpec, draw_sample, generate_population
from .downstream import ParamSet, estimate_params
from .imputers import (
    IMPUTE_DESIGN,
    Draw,
    Forest,
    ImputationMethod,
    Pmm,
    Predict,
    SoftImpute,
    impute_dispatch,
    impute_draw,
    impute_predict,
)
from .linmodel import fit_ols
from .stochastics import Purpose, SeedSpec, make_stream, substream_id

TRUTH_LABEL = "truth"
NO_MECHANISM_LABEL = "none"
_N_FIELDS = len(ParamSet.field_names())
# the first eight fields estimate population parameters and can be biased;
# the mse fields measure error against a zero truth and are never flagged
_FLAGGABLE_FIELDS = 8
_FIGURE_CELL = 2**24 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of an experiment grid."""

    populations: tuple[PopulationSpec, ...] = (
        PopulationSpec(r_squared=0.8),
        PopulationSpec(r_squared=0.2),
    )
    mechanisms: tuple[MissingnessSpec, ...] = (
        MissingnessSpec(Mechanism.MCAR),
        MissingnessSpec(Mechanism.MAR_RIGHT),
    )
    methods: tuple[ImputationMethod, ...] = ()
    n_sample: int = 1000
    t_rep: int = 200
    base_seed: int = 123
    pop_size: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "populations", tuple(self.populations))
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.t_rep < 1:
            raise ValueError(f"t_rep must be at least 1, got {self.t_rep}")
        if self.n_sample < 1:
            raise ValueError(f"n_sample must be at least 1, got {self.n_sample}")
        if self.n_sample > self.pop_size:
            raise ValueError(
                f"n_sample={self.n_sample} exceeds pop_size={self.pop_size}"
            )
        if self.base_seed < 0:
            raise ValueError(f"base_seed must be non-negative, got {self.base_seed}")
        labels = [signal_label(p) for p in self.populations]
        if len(set(labels)) != len(labels):
            raise ValueError(f"populations must have distinct signal labels, got {labels}")
        mechs = [m.mechanism.label for m in self.mechanisms]
        if len(set(mechs)) != len(mechs):
            raise ValueError(f"mechanisms must have distinct labels, got {mechs}")


@dataclass(frozen=True)
class TableRow:
    signal: str
    method: str
    mechanism: str
    params: ParamSet
    stderr: np.ndarray | None = None

    def __post_init__(self):
        if self.stderr is not None:
            arr = np.array(self.stderr, dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, "stderr", arr)


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[TableRow, ...]

    def truth_params(self, signal: str) -> ParamSet | None:
        for row in self.rows:
            if row.signal == signal and row.method == TRUTH_LABEL:
                return row.params
        return None


def signal_label(spec: PopulationSpec) -> str:
    """Short name of a population's signal level."""
    key = round(spec.r_squared, 9)
    if key == 0.8:
        return "high"
    if key == 0.2:
        return "low"
    return f"r2={spec.r_squared:g}"


# =====================================================================
# stream allocation
# =====================================================================

def _population_stream_ids(cfg: ExperimentConfig) -> dict[str, int]:
    """Signal label -> stream id, from the canonical (sorted) label order."""
    ordered = sorted(signal_label(p) for p in cfg.populations)
    return {
        label: substream_id(index, 0, Purpose.POPULATION)
        for index, label in enumerate(ordered)
    }


def _build_population(cfg: ExperimentConfig, spec: PopulationSpec) -> Dataset:
    sid = _population_stream_ids(cfg)[signal_label(spec)]
    stream = make_stream(SeedSpec(cfg.base_seed, sid))
    return generate_population(replace(spec, size=cfg.pop_size), stream)


def _rep_stream(cfg: ExperimentConfig, cell_id: int, t: int, purpose: Purpose):
    return make_stream(SeedSpec(cfg.base_seed, substream_id(cell_id, t, purpose)))


# =====================================================================
# cells
# =====================================================================

def _replicate(
    pop: Dataset,
    mech: MissingnessSpec,
    method: ImputationMethod,
    cfg: ExperimentConfig,
    cell_id: int,
    t: int,
) -> ParamSet:
    sample = draw_sample(pop, cfg.n_sample, _rep_stream(cfg, cell_id, t, Purpose.SAMPLING))
    inc = ampute(sample, mech, _rep_stream(cfg, cell_id, t, Purpose.AMPUTATION))
    completed = impute_dispatch(inc, method, _rep_stream(cfg, cell_id, t, Purpose.IMPUTATION))
    return estimate_params(completed, sample)


def _cell_stats(
    pop: Dataset,
    spec: PopulationSpec,
    mech: MissingnessSpec,
    method: ImputationMethod,
    cfg: ExperimentConfig,
    cell_id: int,
) -> tuple[ParamSet, np.ndarray]:
    """Field-wise mean and Monte Carlo standard error over replications."""
    reps = np.empty((cfg.t_rep, _N_FIELDS))
    for t in range(1, cfg.t_rep + 1):
        try:
            reps[t - 1] = _replicate(pop, mech, method, cfg, cell_id, t).as_array()
        except Exception as exc:
            raise RuntimeError(
                f"cell (signal={signal_label(spec)}, method={method.label}, "
                f"mechanism={mech.mechanism.label}) failed at replication {t}: {exc}"
            ) from exc
    mean = reps.mean(axis=0)
    if cfg.t_rep > 1:
        stderr = reps.std(axis=0, ddof=1) / math.sqrt(cfg.t_rep)
    else:
        stderr = np.full(_N_FIELDS, np.nan)
    return ParamSet.from_array(mean), stderr


def run_cell(
    pop: Dataset,
    spec: PopulationSpec,
    mech: MissingnessSpec,
    method: ImputationMethod,
    cfg: ExperimentConfig,
    cell_id: int,
) -> ParamSet:
    """Average downstream parameters of one grid cell."""
    mean, _ = _cell_stats(pop, spec, mech, method, cfg, cell_id)
    return mean


@dataclass(frozen=True)
class _Cell:
    cell_id: int
    signal: str
    spec: PopulationSpec
    method: ImputationMethod
    mech: MissingnessSpec


def _assign_cells(cfg: ExperimentConfig, methods: Sequence[ImputationMethod]) -> list[_Cell]:
    """Cells in presentation order, ids from the canonical sorted key order.

    The id of a cell depends only on the set of (signal, method,
    mechanism) keys, never on the ordering of cfg lists, so reordering a
    config cannot silently change any cell's random streams.
    """
    triples = []
    for spec in cfg.populations:
        for method in methods:
            for mech in cfg.mechanisms:
                triples.append((signal_label(spec), spec, method, mech))
    keys = [(sig, method.label, mech.mechanism.label) for sig, _, method, mech in triples]
    if len(set(keys)) != len(keys):
        raise ValueError("experiment grid contains duplicate cells")
    id_of = {key: i for i, key in enumerate(sorted(keys))}
    return [
        _Cell(id_of[key], sig, spec, method, mech)
        for key, (sig, spec, method, mech) in zip(keys, triples)
    ]


def _cell_worker(args: tuple[ExperimentConfig, _Cell]) -> tuple[int, ParamSet, np.ndarray]:
    """Process-pool entry point: rebuilds the population deterministically."""
    cfg, cell = args
    pop = _build_population(cfg, cell.spec)
    mean, stderr = _cell_stats(pop, cell.spec, cell.mech, cell.method, cfg, cell.cell_id)
    return cell.cell_id, mean, stderr


def _truth_row(pop: Dataset, signal: str) -> TableRow:
    completed = CompletedDataset(
        data=pop, imputed_mask=np.zeros(len(pop), dtype=bool), method=None
    )
    return TableRow(signal, TRUTH_LABEL, NO_MECHANISM_LABEL, estimate_params(completed, pop))


def _run_grid(
    cfg: ExperimentConfig, methods: Sequence[ImputationMethod], threads: int
) -> SummaryTable:
    cells = _assign_cells(cfg, methods)
    results: dict[int, tuple[ParamSet, np.ndarray]] = {}
    populations: dict[str, Dataset] = {}
    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(cells))) as pool:
            for cell_id, mean, stderr in pool.map(
                _cell_worker, [(cfg, cell) for cell in cells]
            ):
                results[cell_id] = (mean, stderr)
        for spec in cfg.populations:
            populations[signal_label(spec)] = _build_population(cfg, spec)
    else:
        for spec in cfg.populations:
            populations[signal_label(spec)] = _build_population(cfg, spec)
        for cell in cells:
            results[cell.cell_id] = _cell_stats(
                populations[cell.signal], cell.spec, cell.mech, cell.method, cfg, cell.cell_id
            )

    rows: list[TableRow] = []
    for spec in cfg.populations:
        signal = signal_label(spec)
        rows.append(_truth_row(populations[signal], signal))
        for cell in cells:
            if cell.signal != signal:
                continue
            mean, stderr = results[cell.cell_id]
            rows.append(
                TableRow(signal, cell.method.label, cell.mech.mechanism.label, mean, stderr)
            )
    return SummaryTable(rows=tuple(rows))


def _select_methods(
    cfg: ExperimentConfig, defaults: tuple[ImputationMethod, ...]
) -> tuple[ImputationMethod, ...]:
    if not cfg.methods:
        return defaults
    expected = {m.label for m in defaults}
    got = {m.label for m in cfg.methods}
    if got != expected:
        raise ValueError(f"this table expects methods {sorted(expected)}, got {sorted(got)}")
    return cfg.methods


def run_table1(cfg: ExperimentConfig, threads: int = 1) -> SummaryTable:
    """Ground truth plus the predict and draw cells, in report order."""
    methods = _select_methods(cfg, (Predict(), Draw()))
    return _run_grid(cfg, methods, threads)


def run_table2(cfg: ExperimentConfig, threads: int = 1) -> SummaryTable:
    """Ground truth plus the forest, softimpute and pmm cells."""
    methods = _select_methods(cfg, (Forest(), SoftImpute(), Pmm()))
    return _run_grid(cfg, methods, threads)


# =====================================================================
# output
# =====================================================================

CSV_HEADER = "signal,method,mechanism," + ",".join(ParamSet.field_names())


def format_table(table: SummaryTable, style: str = "csv") -> str:
    """Render a summary table as csv or markdown text.

    Markdown marks a parameter cell with an asterisk when it lies more
    than two Monte Carlo standard errors from the same signal level's
    ground-truth value; the two mse columns measure imputation error
    rather than a population parameter and are never marked.
    """
    if style == "csv":
        lines = [CSV_HEADER]
        for row in table.rows:
            values = ",".join(f"{v:.3f}" for v in row.params.as_array())
            lines.append(f"{row.signal},{row.method},{row.mechanism},{values}")
        return "\n".join(lines) + "\n"
    if style == "markdown":
        names = ("signal", "method", "mechanism") + ParamSet.field_names()
        lines = [
            "| " + " | ".join(names) + " |",
            "|" + "|".join([" --- "] * len(names)) + "|",
        ]
        for row in table.rows:
            flags = _bias_flags(table, row)
            cells = [
                f"{v:.3f}{'*' if flagged else ''}"
                for v, flagged in zip(row.params.as_array(), flags)
            ]
            lines.append(
                "| " + " | ".join([row.signal, row.method, row.mechanism] + cells) + " |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown style {style!r}; expected 'csv' or 'markdown'")


def _bias_flags(table: SummaryTable, row: TableRow) -> np.ndarray:
    flags = np.zeros(_N_FIELDS, dtype=bool)
    if row.method == TRUTH_LABEL or row.stderr is None:
        return flags
    truth = table.truth_params(row.signal)
    if truth is None:
        return flags
    dev = np.abs(row.params.as_array() - truth.as_array())
    with np.errstate(invalid="ignore"):
        flags[:_FLAGGABLE_FIELDS] = (
            dev[:_FLAGGABLE_FIELDS] > 2.0 * row.stderr[:_FLAGGABLE_FIELDS]
        )
    return flags


def _figure_incomplete(cfg: ExperimentConfig):
    """The figure's shared amputed sample: lowest signal, right-censoring."""
    spec = min(cfg.populations, key=lambda p: p.r_squared)
    mech = next(
        (m for m in cfg.mechanisms if m.mechanism is Mechanism.MAR_RIGHT),
        MissingnessSpec(Mechanism.MAR_RIGHT),
    )
    pop = _build_population(cfg, spec)
    sample = draw_sample(
        pop,
        cfg.n_sample,
        make_stream(SeedSpec(cfg.base_seed, substream_id(_FIGURE_CELL, 1, Purpose.SAMPLING))),
    )
    return ampute(
        sample,
        mech,
        make_stream(SeedSpec(cfg.base_seed, substream_id(_FIGURE_CELL, 1, Purpose.AMPUTATION))),
    )


def export_figure_data(cfg: ExperimentConfig, out) -> int:
    """Write one amputed sample completed by predict and by draw.

    Uses the lowest-signal population and a right-censoring mechanism:
    the setting where the two methods look most different. Emits one CSV
    row per (row, method) pair with columns x1,y,status,method and
    returns the number of data rows written.
    """
    inc = _figure_incomplete(cfg)
    completions = [
        impute_predict(inc),
        impute_draw(
            inc,
            make_stream(
                SeedSpec(cfg.base_seed, substream_id(_FIGURE_CELL, 2, Purpose.IMPUTATION))
            ),
        ),
    ]

    lines = ["x1,y,status,method"]
    for completed in completions:
        label = completed.method.label
        for x1, y, masked in zip(completed.data.x1, completed.data.y, completed.imputed_mask):
            status = "imputed" if masked else "observed"
            lines.append(f"{x1:.17g},{y:.17g},{status},{label}")
    text = "\n".join(lines) + "\n"
    if hasattr(out, "write"):
        out.write(text)
    else:
        with open(out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    return len(lines) - 1


def figure_sample_fit(cfg: ExperimentConfig):
    """The OLS fit behind the figure's predict completion (for checking)."""
    inc = _figure_incomplete(cfg)
    return fit_ols(inc.observed_rows(), IMPUTE_DESIGN), inc


def run_decomposition(
    cfg: ExperimentConfig, method: ImputationMethod, repeats: int
) -> list[tuple[str, str, "DecompositionResult"]]:
    """Bias/variance/noise split of one method across the signal grid.

    For each (population, mechanism) cell: one sample, one amputation
    (replication-1 streams of a single-method grid), then repeated
    imputation inside decompose_mse.
    """
    from .downstream import DecompositionResult, decompose_mse  # noqa: F401

    cells = _assign_cells(cfg, (method,))
    populations: dict[str, Dataset] = {}
    out = []
    for cell in cells:
        if cell.signal not in populations:
            populations[cell.signal] = _build_population(cfg, cell.spec)
        pop = populations[cell.signal]
        sample = draw_sample(pop, cfg.n_sample, _rep_stream(cfg, cell.cell_id, 1, Purpose.SAMPLING))
        inc = ampute(sample, cell.mech, _rep_stream(cfg, cell.cell_id, 1, Purpose.AMPUTATION))
        result = decompose_mse(
            inc,
            sample,
            method,
            repeats,
            _rep_stream(cfg, cell.cell_id, 1, Purpose.IMPUTATION),
            cell.spec,
        )
        out.append((cell.signal, cell.mech.mechanism.label, result))
    return out
