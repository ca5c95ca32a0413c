"""The perceive -> select -> restore -> evaluate -> (rollback | advance) loop.

MultiStep mode re-perceives after every committed step and rolls back
failed attempts; OneStep mode freezes the initial plan and executes it in
one pass (the ablation baseline).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .bank import InsightBank
from .core import (
    DegradationReport,
    Detection,
    ExecutionHistory,
    HistoryStep,
    ImageBuf,
    RestorationTask,
)
from .iqa import QualityVector, evaluate_quality
from .retrieval import (
    EmbeddingBackend,
    HashEmbedding,
    RetrievalQuery,
    SelectorBackend,
    build_index,
    select_tool,
)
from .tools import ToolRegistry, invoke

# Perception thresholds, calibrated once against the synthetic fixtures.
LOW_LIGHT_LUMA = 0.25
HAZE_DENSITY = 0.35
NOISE_SIGMA = 0.02
BLUR_SHARPNESS = 0.0005

# Physical ordering: remove occluders first, then haze, then noise,
# then exposure, then sharpening.
TASK_PRIORITY = (
    RestorationTask.Derain,
    RestorationTask.Desnow,
    RestorationTask.Dehaze,
    RestorationTask.Denoise,
    RestorationTask.LowLightEnhance,
    RestorationTask.Deblur,
    RestorationTask.CompositeEnhance,
)


def _pick_recommended(detections) -> Optional[RestorationTask]:
    present = {d.task for d in detections}
    for task in TASK_PRIORITY:
        if task in present:
            return task
    return None


def _report_from_detections(detections, parts) -> DegradationReport:
    detections = tuple(detections)
    if not detections:
        return DegradationReport(
            detections=(),
            description="no residual degradation detected",
            recommended_next=None,
            terminate=True,
        )
    return DegradationReport(
        detections=detections,
        description="; ".join(parts),
        recommended_next=_pick_recommended(detections),
        terminate=False,
    )


class PerceptionBackend:
    """(ImageBuf, QualityVector, ExecutionHistory) -> DegradationReport."""

    def perceive(
        self, img: ImageBuf, qv: QualityVector, history: ExecutionHistory
    ) -> DegradationReport:
        raise NotImplementedError


class HeuristicPerception(PerceptionBackend):
    """Threshold rules over the quality vector; full input context."""

    def perceive(self, img, qv, history):
        done = history.tasks_with_reward(1)
        detections = []
        parts = []
        lum = qv["mean_luminance"]
        if lum < LOW_LIGHT_LUMA and RestorationTask.LowLightEnhance not in done:
            sev = min(1.0, 1.0 - lum / LOW_LIGHT_LUMA)
            detections.append(Detection(RestorationTask.LowLightEnhance, sev))
            parts.append(f"underexposed scene, mean luminance {lum:.3f}")
        dcd = qv["dark_channel_density"]
        if dcd > HAZE_DENSITY and RestorationTask.Dehaze not in done:
            sev = min(1.0, (dcd - HAZE_DENSITY) / (1.0 - HAZE_DENSITY))
            detections.append(Detection(RestorationTask.Dehaze, sev))
            parts.append(f"hazy veil, dark channel density {dcd:.3f}")
        ns = qv["noise_sigma"]
        if ns > NOISE_SIGMA and RestorationTask.Denoise not in done:
            sev = min(1.0, (ns - NOISE_SIGMA) / 0.1)
            detections.append(Detection(RestorationTask.Denoise, sev))
            parts.append(f"sensor noise, sigma estimate {ns:.3f}")
        sh = qv["sharpness"]
        if sh < BLUR_SHARPNESS and RestorationTask.Deblur not in done:
            sev = min(1.0, (BLUR_SHARPNESS - sh) / BLUR_SHARPNESS)
            detections.append(Detection(RestorationTask.Deblur, sev))
            parts.append(f"soft detail, laplacian variance {sh:.6f}")
        return _report_from_detections(detections, parts)


class NoMetricsPerception(PerceptionBackend):
    """Ablation: ignores the quality vector; guesses from brightness alone."""

    def perceive(self, img, qv, history):
        done = history.tasks_with_reward(1)
        m = float(img.data.mean())
        detections = []
        parts = []
        if m > 0.5 and RestorationTask.Dehaze not in done:
            detections.append(Detection(RestorationTask.Dehaze, min(1.0, (m - 0.5) / 0.5)))
            parts.append(f"bright washed-out scene, mean intensity {m:.3f}")
        elif m < LOW_LIGHT_LUMA and RestorationTask.LowLightEnhance not in done:
            detections.append(
                Detection(RestorationTask.LowLightEnhance, min(1.0, 1.0 - m / LOW_LIGHT_LUMA))
            )
            parts.append(f"dark scene, mean intensity {m:.3f}")
        return _report_from_detections(detections, parts)


class RewardGenerator:
    """Strictly binary verdict on one restoration attempt."""

    def generate(
        self,
        before: ImageBuf,
        before_qv: QualityVector,
        task: RestorationTask,
        tool_id: str,
        after: ImageBuf,
        after_qv: QualityVector,
        eval_text: str,
    ) -> int:
        raise NotImplementedError


_SIGNATURE_CHECKS = {
    RestorationTask.Dehaze: lambda b, a: a["dark_channel_density"] < b["dark_channel_density"],
    RestorationTask.LowLightEnhance: lambda b, a: abs(a["mean_luminance"] - 0.5)
    < abs(b["mean_luminance"] - 0.5),
    RestorationTask.Denoise: lambda b, a: a["noise_sigma"] < b["noise_sigma"],
    RestorationTask.Deblur: lambda b, a: a["sharpness"] > b["sharpness"],
}


def reference_reward(
    before_qv: QualityVector,
    task: RestorationTask,
    after_qv: QualityVector,
    reward_delta: float = 0.0,
) -> int:
    """1 iff the aggregate strictly improved (past reward_delta) and the
    task's signature metric moved the right way; Derain/Desnow/Composite
    are judged on the aggregate alone."""
    if not after_qv.aggregate > before_qv.aggregate + reward_delta:
        return 0
    check = _SIGNATURE_CHECKS.get(task)
    if check is not None and not check(before_qv, after_qv):
        return 0
    return 1


class ReferenceReward(RewardGenerator):
    def __init__(self, reward_delta: float = 0.0):
        self.reward_delta = reward_delta

    def generate(self, before, before_qv, task, tool_id, after, after_qv, eval_text):
        return reference_reward(before_qv, task, after_qv, self.reward_delta)


@dataclass
class OrchestratorConfig:
    max_steps: int = 5
    max_retries_per_step: int = 3
    decision_mode: str = "MultiStep"  # "MultiStep" | "OneStep"
    k: int = 5
    reward_delta: float = 0.0
    evolution_enabled: bool = True
    # optional metric-name -> weight mapping for the quality aggregate
    metric_weights: Optional[dict] = None

    def __post_init__(self):
        if self.metric_weights is not None:
            self.metric_weights = {
                str(k): float(v) for k, v in dict(self.metric_weights).items()
            }
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_retries_per_step < 0:
            raise ValueError("max_retries_per_step must be >= 0")
        if self.decision_mode not in ("MultiStep", "OneStep"):
            raise ValueError(f"bad decision_mode {self.decision_mode!r}")


@dataclass
class Backends:
    perception: PerceptionBackend = field(default_factory=HeuristicPerception)
    reward: RewardGenerator = field(default_factory=ReferenceReward)
    selector: Optional[SelectorBackend] = None
    embedder: EmbeddingBackend = field(default_factory=HashEmbedding)
    clock: Callable[[], float] = time.time


@dataclass
class SessionResult:
    image: ImageBuf
    history: ExecutionHistory
    new_insights: list
    trace: dict


def _describe_eval(tool_id, task, before_qv, after_qv, reward) -> str:
    delta = after_qv.aggregate - before_qv.aggregate
    outcome = "improved the image" if reward else "failed to improve the image"
    return (
        f"{tool_id} applied for {task.name} {outcome}; "
        f"aggregate quality changed by {delta:+.4f}"
    )


def _report_obj(report: DegradationReport) -> dict:
    return {
        "description": report.description,
        "detections": [
            {"task": d.task.name, "severity": round(d.severity, 6), "extent": d.extent}
            for d in report.detections
        ],
        "recommended_next": report.recommended_next.name if report.recommended_next else None,
        "terminate": report.terminate,
    }


class _Session:
    def __init__(self, img, registry, bank, backends, config):
        self.current = img
        self.original = img
        self.registry = registry
        self.bank = bank
        self.backends = backends
        self.config = config
        self.history = ExecutionHistory()
        self.new_insights = []
        self.blacklist: set = set()
        self.suppressed: set = set()
        self.step = 0
        self.trace_steps = []
        self._index = None
        self._chunks = None
        self._index_dirty = True

    def _ensure_index(self):
        if self._index_dirty:
            self._index, self._chunks = build_index(self.bank, self.backends.embedder)
            self._index_dirty = False

    def _perceive(self):
        qv = evaluate_quality(self.current, self.config.metric_weights)
        report = self.backends.perception.perceive(qv=qv, img=self.current, history=self.history)
        if self.suppressed:
            kept = tuple(d for d in report.detections if d.task not in self.suppressed)
            if len(kept) != len(report.detections):
                report = _report_from_detections(kept, [report.description])
        return qv, report

    def _attempt(self, task, description, qv_before):
        """One tool invocation; returns (reward, selection)."""
        candidates = [
            d
            for d in self.registry.supporting(task)
            if (task, d.tool_id) not in self.blacklist
        ]
        if not candidates:
            return None, None
        self._ensure_index()
        selection = select_tool(
            RetrievalQuery(degradation_text=description, task=task),
            self.bank,
            self._index,
            self._chunks,
            candidates,
            backend=self.backends.selector,
            embedder=self.backends.embedder,
            k=self.config.k,
        )
        out = invoke(self.registry, selection.tool_id, self.current)
        qv_after = evaluate_quality(out, self.config.metric_weights)
        eval_text = ""
        reward = self.backends.reward.generate(
            self.current, qv_before, task, selection.tool_id, out, qv_after, eval_text
        )
        eval_text = _describe_eval(selection.tool_id, task, qv_before, qv_after, reward)
        self.history.append(
            HistoryStep(
                task=task,
                tool_id=selection.tool_id,
                reward=reward,
                quality_before=qv_before,
                quality_after=qv_after,
            )
        )
        if self.config.evolution_enabled:
            insight = self.bank.record(
                degradation_info=description,
                tool_id=selection.tool_id,
                subjective_eval=eval_text,
                verdict=reward,
                task=task,
                timestamp=self.backends.clock(),
                objective_delta=qv_after.aggregate - qv_before.aggregate,
            )
            self.new_insights.append(insight)
            self._index_dirty = True
        self.trace_steps.append(
            {
                "step": self.step,
                "task": task.name,
                "tool_id": selection.tool_id,
                "prompt": selection.prompt,
                "retrieved": [[list(cid), round(sim, 6)] for cid, sim in selection.retrieved],
                "fallback_used": selection.fallback_used,
                "reward": reward,
                "quality_before": _round_qv(qv_before),
                "quality_after": _round_qv(qv_after),
                "committed": None,  # filled by caller
            }
        )
        return reward, (out, qv_after)

    def run_multi_step(self):
        reports = []
        while True:
            qv, report = self._perceive()
            reports.append(_report_obj(report))
            if report.terminate or not report.detections or self.step >= self.config.max_steps:
                break
            task = report.recommended_next
            retries = 0
            while True:
                reward, outcome = self._attempt(task, report.description, qv)
                if reward is None:  # no candidate left
                    self.suppressed.add(task)
                    self.trace_steps.append(
                        {"step": self.step, "task": task.name, "skipped": "no candidate tool"}
                    )
                    break
                if reward == 1:
                    self.current = outcome[0]
                    self.blacklist = set()
                    self.step += 1
                    self.trace_steps[-1]["committed"] = True
                    break
                # rollback: self.current untouched
                self.trace_steps[-1]["committed"] = False
                self.blacklist.add((task, self.trace_steps[-1]["tool_id"]))
                retries += 1
                if retries > self.config.max_retries_per_step:
                    self.suppressed.add(task)
                    break
        return reports

    def run_one_step(self):
        qv, report = self._perceive()
        reports = [_report_obj(report)]
        if report.terminate:
            return reports
        plan = [t for t in TASK_PRIORITY if t in {d.task for d in report.detections}]
        for task in plan:
            qv_before = evaluate_quality(self.current, self.config.metric_weights)
            reward, outcome = self._attempt(task, report.description, qv_before)
            if reward is None:
                self.trace_steps.append(
                    {"step": self.step, "task": task.name, "skipped": "no candidate tool"}
                )
                continue
            # no rollback in one-step mode: always advance
            self.current = outcome[0]
            self.step += 1
            self.trace_steps[-1]["committed"] = True
        return reports


def _round_qv(qv: QualityVector) -> dict:
    return {name: round(value, 9) for name, value in qv.to_json_obj().items()}


def run_session(
    img: ImageBuf,
    registry: ToolRegistry,
    bank: InsightBank,
    backends: Backends | None = None,
    config: OrchestratorConfig | None = None,
) -> SessionResult:
    """Run one restoration session and return the final image, the
    execution history, the insights written to the bank, and a
    JSON-serializable trace."""
    backends = backends or Backends()
    config = config or OrchestratorConfig()
    session = _Session(img, registry, bank, backends, config)
    if config.decision_mode == "MultiStep":
        reports = session.run_multi_step()
    else:
        reports = session.run_one_step()
    trace = {
        "mode": config.decision_mode,
        "reports": reports,
        "steps": session.trace_steps,
        "committed_steps": session.step,
        "insights_written": len(session.new_insights),
    }
    return SessionResult(
        image=session.current,
        history=session.history,
        new_insights=session.new_insights,
        trace=trace,
    )
