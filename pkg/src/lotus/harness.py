"""Experiment runner: drives an optimizer over a problem and records a per-step trace."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NonFiniteGradientError
from .optimizer import Adam, LotusHyperparams, Lotus
from .policy import SwitchConfig
from .problems import ProblemKind, ProblemSpec, make_problem

TRACE_FIELDS = (
    "step",
    "loss",
    "grad_norm",
    "criterion_value",
    "switched",
    "step_wall_time_us",
    "cumulative_switches",
)
TOLERANCE_WINDOW = 50
DIVERGENCE_LOSS = 1e6


class RunStatus(enum.Enum):
    CONVERGED = 0
    BUDGET_EXHAUSTED = 2
    NUMERICAL_FAILURE = 3

    @property
    def exit_code(self) -> int:
        return self.value


class ToleranceMode(enum.Enum):
    WINDOW = "window"  # mean of ||g_t||^2 over the last TOLERANCE_WINDOW steps < eps
    CUMULATIVE = "cumulative"  # sum_{t<N} ||g_t||^2 <= eps, read literally


@dataclass(frozen=True)
class TraceRecord:
    step: int
    loss: float
    grad_norm: float
    criterion_value: float
    switched: bool
    step_wall_time_us: int
    cumulative_switches: int


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    status: RunStatus = RunStatus.BUDGET_EXHAUSTED
    steps_to_tolerance: int | None = None
    failed_step: int | None = None
    message: str = ""
    projector_builds: int = 0
    wall_time_s: float = 0.0
    accuracy: float | None = None
    final_params: dict | None = field(default=None, repr=False)

    @property
    def switch_count(self) -> int:
        return self.records[-1].cumulative_switches if self.records else 0

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else math.nan

    def summary(self) -> dict:
        return {
            "status": self.status.name.lower(),
            "steps": len(self.records),
            "steps_to_tolerance": self.steps_to_tolerance,
            "failed_step": self.failed_step,
            "switches": self.switch_count,
            "projector_builds": self.projector_builds,
            "final_loss": self.final_loss,
            "accuracy": self.accuracy,
            "wall_time_s": self.wall_time_s,
            "message": self.message,
        }


def _sq_norm(grads: dict) -> float:
    return float(sum(np.sum(g * g) for g in grads.values()))


def run_experiment(
    problem: ProblemSpec,
    hp: LotusHyperparams,
    max_steps: int,
    grad_tolerance: float | None,
    tolerance_mode: ToleranceMode = ToleranceMode.WINDOW,
    record_timing: bool = False,
    optimizer: str = "lotus",
) -> RunTrace:
    """Optimize ``problem`` until the gradient tolerance is met or ``max_steps`` run out.

    ``grad_tolerance=None`` disables the stopping rule.
    ``optimizer="adam"`` swaps Lotus for dense Adam with the same learning
    rate and betas. Step wall times are written to the trace only when
    ``record_timing`` is set; otherwise the column is zero so repeated runs
    produce identical files.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if grad_tolerance is not None and not grad_tolerance > 0:
        raise ValueError("grad_tolerance must be positive")
    tolerance_mode = ToleranceMode(tolerance_mode)
    prob = make_problem(problem)
    params = prob.init_params()
    if optimizer == "lotus":
        opt = Lotus(hp)
    elif optimizer == "adam":
        opt = Adam(hp.learning_rate, hp.beta1, hp.beta2, hp.eps)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")

    trace = RunTrace()
    window: list[float] = []
    cumulative = 0.0
    switches = 0
    begin = time.perf_counter()
    for t in range(1, max_steps + 1):
        tick = time.perf_counter_ns()
        loss, grads = prob.loss_and_grad(params, t)
        sq = _sq_norm(grads)
        try:
            if not math.isfinite(loss) or not math.isfinite(sq):
                raise NonFiniteGradientError(f"non-finite loss or gradient at step {t}", t)
            if loss > DIVERGENCE_LOSS:
                raise NonFiniteGradientError(f"diverged: loss {loss:.3e} at step {t}", t)
            if isinstance(opt, Lotus):
                diags = opt.step(params, grads, t)
            else:
                opt.step(params, grads)
                diags = {}
        except NonFiniteGradientError as exc:
            trace.status = RunStatus.NUMERICAL_FAILURE
            trace.failed_step = t
            trace.message = str(exc)
            break
        switched = any(d.switched for d in diags.values())
        switches += sum(d.switched for d in diags.values())
        crit = float(np.mean([d.criterion for d in diags.values()])) if diags else 0.0
        elapsed = (time.perf_counter_ns() - tick) // 1000 if record_timing else 0
        trace.records.append(
            TraceRecord(t, float(loss), math.sqrt(sq), crit, switched, int(elapsed), switches)
        )

        if grad_tolerance is None:
            continue
        if tolerance_mode is ToleranceMode.WINDOW:
            window.append(sq)
            if len(window) > TOLERANCE_WINDOW:
                window.pop(0)
            done = len(window) == TOLERANCE_WINDOW and sum(window) / TOLERANCE_WINDOW < grad_tolerance
        else:
            cumulative += sq
            done = cumulative <= grad_tolerance
        if done:
            trace.status = RunStatus.CONVERGED
            trace.steps_to_tolerance = t
            break

    trace.wall_time_s = time.perf_counter() - begin
    if isinstance(opt, Lotus):
        trace.projector_builds = opt.projector_builds
    if hasattr(prob, "accuracy"):
        trace.accuracy = prob.accuracy(params)
    trace.final_params = params
    return trace


@dataclass
class PolicyOutcome:
    name: str
    config: SwitchConfig
    trace: RunTrace

    @property
    def steps(self) -> int | None:
        return self.trace.steps_to_tolerance


@dataclass
class ComparisonReport:
    outcomes: list

    def by_name(self, name) -> PolicyOutcome:
        return next(o for o in self.outcomes if o.name == name)

    def rows(self) -> list[dict]:
        return [
            {
                "policy": o.name,
                "status": o.trace.status.name.lower(),
                "steps_to_tolerance": o.steps,
                "steps_run": len(o.trace.records),
                "switches": o.trace.switch_count,
                "projector_builds": o.trace.projector_builds,
                "wall_time_s": round(o.trace.wall_time_s, 4),
                "final_loss": o.trace.final_loss,
            }
            for o in self.outcomes
        ]

    def table(self) -> str:
        rows = self.rows()
        cols = list(rows[0])
        widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
        lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
        lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in cols) for r in rows]
        return "\n".join(lines)


def policy_name(cfg: SwitchConfig) -> str:
    if cfg.kind.value == "fixed":
        return f"fixed({cfg.fixed_interval})"
    return f"{cfg.kind.value}(gamma={cfg.gamma},eta={cfg.verify_gap},t_min={cfg.t_min})"


def compare_policies(
    problem: ProblemSpec,
    hp_base: LotusHyperparams,
    policies,
    max_steps: int,
    grad_tolerance: float,
    workers: int = 1,
    **run_kwargs,
) -> ComparisonReport:
    """Run each switching policy on the same problem, seed and noise stream."""
    policies = list(policies)
    if len(policies) < 2:
        raise ValueError("compare_policies needs at least two policies")

    def run(cfg):
        return run_experiment(problem, replace(hp_base, switch=cfg), max_steps, grad_tolerance, **run_kwargs)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            traces = list(pool.map(run, policies))
    else:
        traces = [run(cfg) for cfg in policies]
    return ComparisonReport([PolicyOutcome(policy_name(c), c, t) for c, t in zip(policies, traces)])


def mlp_train(spec: ProblemSpec, hp: LotusHyperparams, epochs: int, optimizer: str = "lotus", **run_kwargs) -> RunTrace:
    """Train the teacher-student MLP for ``epochs`` passes over the training set.

    The gradient tolerance is disabled; the run always uses the whole budget.
    """
    if spec.kind is not ProblemKind.MLP:
        raise ValueError("mlp_train needs an MLP problem spec")
    batch = spec.options.get("batch_size", 0)
    samples = spec.options.get("train_samples", 512)
    per_epoch = samples // batch if batch and batch < samples else 1
    return run_experiment(spec, hp, epochs * per_epoch, None, optimizer=optimizer, **run_kwargs)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def emit_trace(trace: RunTrace, path, fmt: str = "csv") -> None:
    """Write ``trace`` as CSV or JSON with round-trip exact floats."""
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for rec in trace.records:
            writer.writerow([_fmt(getattr(rec, f)) for f in TRACE_FIELDS])
        text = buf.getvalue()
    elif fmt == "json":
        items = []
        for rec in trace.records:
            pairs = []
            for f in TRACE_FIELDS:
                v = getattr(rec, f)
                if isinstance(v, bool):
                    tok = "true" if v else "false"
                elif isinstance(v, float) and not math.isfinite(v):
                    tok = json.dumps(v)
                else:
                    tok = _fmt(v)
                pairs.append(f'"{f}": {tok}')
            items.append("  {" + ", ".join(pairs) + "}")
        text = "[\n" + ",\n".join(items) + ("\n" if items else "") + "]\n"
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path, fmt: str = "csv") -> list[TraceRecord]:
    path = Path(path)
    if fmt == "csv":
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        raw = [{k: r[k] for k in TRACE_FIELDS} for r in rows]
        switched = [r["switched"] == "1" for r in raw]
    else:
        raw = json.loads(path.read_text())
        switched = [bool(r["switched"]) for r in raw]
    return [
        TraceRecord(
            int(r["step"]),
            float(r["loss"]),
            float(r["grad_norm"]),
            float(r["criterion_value"]),
            s,
            int(r["step_wall_time_us"]),
            int(r["cumulative_switches"]),
        )
        for r, s in zip(raw, switched)
    ]
