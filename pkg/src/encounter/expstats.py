"""Shape-recognition study harness: trial plans, confusion matrices and a
one-way repeated-measures ANOVA."""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .errors import DegenerateInput, EmptyCondition, ParseError, ZeroErrorVariance
from .geometry import SHAPE_KINDS
from .planner import Phase
from .runtime import Session, run, write_trace
from .robot import RobotModel
from .trajectories import canonical_touch, load_study_scene

RESPONSE_HEADER = ["subject", "trial", "presented", "answered"]


# ---------------------------------------------------------------------------
# Trial plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    index: int
    kind: str
    repetition: int


@dataclass(frozen=True)
class TrialPlan:
    subject: str
    trials: tuple
    seed: int

    @property
    def kinds(self) -> list[str]:
        return [tr.kind for tr in self.trials]


def make_trial_plan(shapes, trials_per_shape: int, seed: int, subject: str = "S1") -> TrialPlan:
    """Balanced trial list in a seeded Fisher-Yates order."""
    if trials_per_shape < 1:
        raise ValueError("trials_per_shape must be >= 1")
    shapes = list(shapes)
    if not shapes:
        raise ValueError("need at least one shape")
    items = [(s, r) for s in shapes for r in range(trials_per_shape)]
    random.Random(seed).shuffle(items)
    return TrialPlan(subject, tuple(Trial(i, s, r) for i, (s, r) in enumerate(items)), seed)


# ---------------------------------------------------------------------------
# Responses and confusion matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Response:
    subject: str
    trial: int
    presented: str
    answered: str


class ResponseTable:
    def __init__(self, rows=(), kinds=SHAPE_KINDS):
        self.kinds = tuple(kinds)
        self.rows: list[Response] = []
        self._keys = set()
        for r in rows:
            if isinstance(r, Response):
                r = (r.subject, r.trial, r.presented, r.answered)
            self.add(*r)

    def add(self, subject, trial, presented, answered) -> None:
        for name in (presented, answered):
            if name not in self.kinds:
                raise ValueError(f"unknown shape {name!r}")
        key = (str(subject), int(trial))
        if key in self._keys:
            raise ValueError(f"duplicate response for subject {key[0]!r}, trial {key[1]}")
        self._keys.add(key)
        self.rows.append(Response(key[0], key[1], presented, answered))

    def __len__(self):
        return len(self.rows)

    @property
    def subjects(self) -> list[str]:
        return sorted({r.subject for r in self.rows})

    @classmethod
    def read_csv(cls, path, kinds=SHAPE_KINDS) -> "ResponseTable":
        table = cls(kinds=kinds)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != RESPONSE_HEADER:
                raise ParseError(f"expected header {','.join(RESPONSE_HEADER)}", 1)
            for lineno, row in enumerate(reader, 2):
                if not row or not any(c.strip() for c in row):
                    continue
                if len(row) != 4:
                    raise ParseError("expected 4 columns", lineno)
                subject, trial, presented, answered = (c.strip() for c in row)
                try:
                    table.add(subject, int(trial), presented.lower(), answered.lower())
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
        return table


@dataclass(frozen=True, eq=False)
class Confusion:
    conditions: tuple
    kinds: tuple
    matrix: np.ndarray  # rows: presented conditions, cols: answered kinds
    counts: np.ndarray

    @property
    def rates(self) -> dict:
        """Recognition rate per presented shape (the diagonal)."""
        return {c: float(self.matrix[i, self.kinds.index(c)]) for i, c in enumerate(self.conditions)}


def confusion_matrix(responses: ResponseTable, conditions=None) -> Confusion:
    """``P(answered | presented)``; rows default to every shape kind."""
    kinds = responses.kinds
    conditions = tuple(kinds if conditions is None else conditions)
    if not len(responses):
        raise EmptyCondition("no responses")
    counts = np.zeros((len(conditions), len(kinds)))
    for r in responses.rows:
        if r.presented in conditions:
            counts[conditions.index(r.presented), kinds.index(r.answered)] += 1
    totals = counts.sum(axis=1)
    empty = [c for c, n in zip(conditions, totals) if n == 0]
    if empty:
        raise EmptyCondition(f"no responses for presented shape(s): {', '.join(empty)}")
    return Confusion(conditions, kinds, counts / totals[:, None], counts)


def per_subject_rates(responses: ResponseTable, conditions=None) -> tuple[list[str], np.ndarray]:
    """Recognition rate for every (subject, presented shape) cell."""
    conditions = tuple(responses.kinds if conditions is None else conditions)
    subjects = responses.subjects
    hits = np.zeros((len(subjects), len(conditions)))
    total = np.zeros_like(hits)
    for r in responses.rows:
        if r.presented in conditions:
            i, j = subjects.index(r.subject), conditions.index(r.presented)
            total[i, j] += 1
            hits[i, j] += r.presented == r.answered
    if np.any(total == 0):
        raise EmptyCondition("every subject needs at least one trial per shape")
    return subjects, hits / total


# ---------------------------------------------------------------------------
# Repeated-measures ANOVA
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnovaResult:
    F: float
    df1: int
    df2: int
    p: float
    means: np.ndarray
    ss_conditions: float
    ss_subjects: float
    ss_error: float
    ss_total: float

    def __str__(self):
        return f"F({self.df1},{self.df2}) = {self.F:.2f}, p = {self.p:.3g}"

    def to_dict(self) -> dict:
        return {"F": self.F, "df1": self.df1, "df2": self.df2, "p": self.p, "means": self.means.tolist(),
                "ss_conditions": self.ss_conditions, "ss_subjects": self.ss_subjects,
                "ss_error": self.ss_error, "ss_total": self.ss_total}


def f_sf(F: float, df1: float, df2: float) -> float:
    """Upper tail of the F distribution via the regularized incomplete beta."""
    if F <= 0:
        return 1.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F)))


def rm_anova(Y) -> AnovaResult:
    """One-way repeated-measures ANOVA on an (n subjects, k conditions) array."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2 or Y.shape[1] < 2:
        raise ValueError("need an n x k matrix with n >= 2 and k >= 2")
    if not np.all(np.isfinite(Y)):
        raise ValueError("missing or non-finite cells")
    n, k = Y.shape
    if np.ptp(Y) == 0:
        raise DegenerateInput("all cells identical; F is 0/0")
    grand = Y.mean()
    col = Y.mean(axis=0)
    row = Y.mean(axis=1)
    # residuals computed directly rather than by subtraction, so a constant
    # offset on every cell cannot leak into SS_error through cancellation
    ss_cond = n * float(np.sum((col - grand) ** 2))
    ss_subj = k * float(np.sum((row - grand) ** 2))
    ss_err = float(np.sum((Y - row[:, None] - col[None, :] + grand) ** 2))
    ss_tot = float(np.sum((Y - grand) ** 2))
    df1, df2 = k - 1, (k - 1) * (n - 1)
    scale = max(ss_tot, np.finfo(float).tiny)
    err_zero = ss_err <= 1e-24 * scale
    cond_zero = ss_cond <= 1e-24 * scale
    if err_zero and cond_zero:
        raise DegenerateInput("no condition or error variance; F is 0/0")
    if err_zero:
        raise ZeroErrorVariance("MS_error is zero while condition means differ")
    F = (ss_cond / df1) / (ss_err / df2)
    return AnovaResult(F, df1, df2, f_sf(F, df1, df2), col, ss_cond, ss_subj, ss_err, ss_tot)


def read_wide_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """``subject,<cond1>,<cond2>,...`` -> (subjects, conditions, matrix)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "subject" or len(header) < 3:
            raise ParseError("expected header subject,<cond1>,<cond2>,...", 1)
        conditions = [h.strip() for h in header[1:]]
        subjects, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns", lineno)
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise ParseError("non-numeric or missing cell", lineno) from None
            subjects.append(row[0].strip())
            rows.append(values)
    return subjects, conditions, np.array(rows).reshape(len(rows), len(conditions))


def read_anova_input(path) -> tuple[list[str], list[str], np.ndarray]:
    """Accept either the wide format or a long response table."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip().split(",")
    if [h.strip() for h in first] == RESPONSE_HEADER:
        table = ResponseTable.read_csv(path)
        subjects, Y = per_subject_rates(table)
        return subjects, list(table.kinds), Y
    return read_wide_csv(path)


# ---------------------------------------------------------------------------
# Experiment replay
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    out_dir: str
    shapes: tuple = SHAPE_KINDS
    trials_per_shape: int = 5
    seed: int = 0
    subject: str = "S1"
    rate: float = 125.0
    robot: RobotModel = field(default_factory=RobotModel)
    touch: dict = field(default_factory=lambda: {"approach": 1.0, "dwell": 0.5, "slide": 1.0, "retreat": 1.0,
                                                  "slide_amplitude": 0.005, "slide_period": 0.5})


@dataclass
class ExperimentResult:
    plan: TrialPlan
    traces: list
    summaries: list
    diagnostics: dict
    responses_csv: Path


def _contact_summary(outputs) -> dict:
    contact = [o for o in outputs if o.phase is Phase.CONTACT]
    if not contact:
        return {"contact_ticks": 0, "rms_max": None, "rms_mean": None, "pins_mean": None}
    rms = np.array([o.rms_error for o in contact])
    return {"contact_ticks": len(contact), "rms_max": float(rms.max()), "rms_mean": float(rms.mean()),
            "pins_mean": np.mean([o.pins.h for o in contact], axis=0).tolist()}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Replay every planned trial, write traces plus an unanswered response sheet."""
    missing = set(config.shapes) - set(SHAPE_KINDS)
    if missing:
        raise ValueError(f"unknown shapes: {sorted(missing)}")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = make_trial_plan(config.shapes, config.trials_per_shape, config.seed, config.subject)
    traces, summaries = [], []
    for trial in plan.trials:
        scene = load_study_scene(trial.kind)
        outputs = run(Session(scene, config.robot, rate=config.rate), canonical_touch(scene, **config.touch))
        path = out / f"trial_{trial.index:02d}_{trial.kind}.jsonl"
        write_trace(path, outputs)
        traces.append(path)
        summaries.append({"trial": trial.index, "kind": trial.kind, **_contact_summary(outputs)})

    responses = out / "responses.csv"
    with open(responses, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESPONSE_HEADER)
        for trial in plan.trials:
            w.writerow([plan.subject, trial.index, trial.kind, ""])

    diagnostics = {"trials": summaries, "pins_mean": {}}
    for kind in config.shapes:
        pins = [s["pins_mean"] for s in summaries if s["kind"] == kind and s["pins_mean"] is not None]
        if pins:
            diagnostics["pins_mean"][kind] = np.mean(pins, axis=0).tolist()
    pm = diagnostics["pins_mean"]
    if all(k in pm for k in ("sphere", "pyramid", "cube")):
        d_sp = float(np.linalg.norm(np.subtract(pm["sphere"], pm["pyramid"])))
        d_sc = float(np.linalg.norm(np.subtract(pm["sphere"], pm["cube"])))
        diagnostics["pin_distance"] = {"sphere-pyramid": d_sp, "sphere-cube": d_sc,
                                       "sphere_closer_to_pyramid": d_sp < d_sc}
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2) + "\n", encoding="utf-8")
    return ExperimentResult(plan, traces, summaries, diagnostics, responses)
