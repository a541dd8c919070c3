"""Durable trajectory store and human-feedback queue.

Append-only files, no database: ``trajectories.jsonl`` holds serialized
runs, ``events.jsonl`` holds feedback/finalize/skip events. The in-memory
index is rebuilt on open by replaying both files; same-step re-submissions
are last-writer-wins with the full history kept as the audit trail. Every
write is flushed and fsynced before the call returns.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path

from .errors import StoreError
from .feedback import Feedback, LabeledStep, convert

LLM_MODULES = ("decompose", "judge", "answer", "complete")


class NotFound(StoreError):
    pass


class InvalidFeedback(StoreError):
    pass


class PendingSteps(StoreError):
    def __init__(self, pending: list[int]):
        super().__init__(f"steps not yet annotated: {pending}")
        self.pending = pending


class TrajectoryStore:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._traj_path = self.root / "trajectories.jsonl"
        self._events_path = self.root / "events.jsonl"
        self._lock = threading.Lock()
        self._trajectories: dict[str, dict] = {}
        self._feedback: dict[tuple[str, int], dict] = {}
        self._finalized: set[str] = set()
        self._skipped: set[str] = set()
        self._seq = 0
        self._replay()

    def _replay(self) -> None:
        if self._traj_path.exists():
            with open(self._traj_path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._trajectories[record["trajectory_id"]] = record
        if self._events_path.exists():
            with open(self._events_path, encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    self._seq = max(self._seq, event.get("seq", 0))
                    self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        tid = event["trajectory_id"]
        if kind == "feedback":
            self._feedback[(tid, event["step_index"])] = event
        elif kind == "finalize":
            self._finalized.add(tid)
        elif kind == "skip":
            self._skipped.add(tid)

    def _append(self, path: Path, record: dict) -> None:
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            f.flush()
            os.fsync(f.fileno())

    # -- trajectories ------------------------------------------------------

    def add_trajectory(
        self, traj: dict, trajectory_id: str | None = None, iteration: int | None = None
    ) -> str:
        with self._lock:
            tid = trajectory_id or traj.get("trajectory_id") or traj["question_id"]
            if tid in self._trajectories:
                raise StoreError(f"trajectory {tid!r} already stored")
            record = dict(traj)
            record["trajectory_id"] = tid
            if iteration is not None:
                record["iteration"] = iteration
            self._append(self._traj_path, record)
            self._trajectories[tid] = record
            return tid

    def get(self, trajectory_id: str) -> dict:
        try:
            return self._trajectories[trajectory_id]
        except KeyError:
            raise NotFound(f"unknown trajectory {trajectory_id!r}") from None

    def _llm_steps(self, record: dict) -> list[int]:
        return [
            i
            for i, s in enumerate(record["steps"])
            if s.get("is_llm", s["module"] in LLM_MODULES)
        ]

    def annotation_state(self, trajectory_id: str) -> dict:
        record = self.get(trajectory_id)
        llm = self._llm_steps(record)
        annotated = [i for i in llm if (trajectory_id, i) in self._feedback]
        if trajectory_id in self._finalized:
            status = "finalized"
        elif trajectory_id in self._skipped:
            status = "skipped"
        else:
            status = "pending"
        return {
            "trajectory_id": trajectory_id,
            "question_id": record.get("question_id"),
            "question": record.get("question", ""),
            "run_status": record.get("status", "ok"),
            "iteration": record.get("iteration"),
            "status": status,
            "llm_steps": len(llm),
            "annotated": len(annotated),
        }

    def list(self, status: str = "all") -> list[dict]:
        rows = [self.annotation_state(tid) for tid in self._trajectories]
        if status != "all":
            rows = [r for r in rows if r["status"] == status]
        return rows

    # -- feedback ----------------------------------------------------------

    def submit_feedback(
        self,
        trajectory_id: str,
        step_index: int,
        verdict: str,
        refinement: str | None = None,
    ) -> dict:
        with self._lock:
            record = self.get(trajectory_id)
            steps = record["steps"]
            if not 0 <= step_index < len(steps):
                raise NotFound(f"trajectory {trajectory_id!r} has no step {step_index}")
            step = steps[step_index]
            if not step.get("is_llm", step["module"] in LLM_MODULES):
                raise InvalidFeedback(f"step {step_index} is a tool step; feedback applies to LLM steps")
            if verdict not in ("right", "wrong", "refine"):
                raise InvalidFeedback(f"unknown verdict {verdict!r}")
            if verdict == "refine" and not (refinement and refinement.strip()):
                raise InvalidFeedback("refine verdict requires non-empty refinement text")
            self._seq += 1
            event = {
                "type": "feedback",
                "trajectory_id": trajectory_id,
                "step_index": step_index,
                "verdict": verdict,
                "refinement": refinement if verdict == "refine" else None,
                "seq": self._seq,
                "ts": time.time(),
            }
            self._append(self._events_path, event)
            self._apply(event)
            return event

    def get_feedback(self, trajectory_id: str, step_index: int) -> Feedback | None:
        event = self._feedback.get((trajectory_id, step_index))
        if event is None:
            return None
        if event["verdict"] == "refine":
            return Feedback.refine(event["refinement"])
        return Feedback(event["verdict"])

    def feedback_by_step(self, trajectory_id: str) -> dict[int, dict]:
        record = self.get(trajectory_id)
        out = {}
        for i in range(len(record["steps"])):
            event = self._feedback.get((trajectory_id, i))
            if event is not None:
                out[i] = {"verdict": event["verdict"], "refinement": event.get("refinement")}
        return out

    def pending_steps(self, trajectory_id: str) -> list[int]:
        record = self.get(trajectory_id)
        return [
            i for i in self._llm_steps(record) if (trajectory_id, i) not in self._feedback
        ]

    def finalize(self, trajectory_id: str) -> None:
        with self._lock:
            pending = self.pending_steps(trajectory_id)
            if pending:
                raise PendingSteps(pending)
            self._seq += 1
            event = {
                "type": "finalize",
                "trajectory_id": trajectory_id,
                "seq": self._seq,
                "ts": time.time(),
            }
            self._append(self._events_path, event)
            self._apply(event)

    def skip(self, trajectory_id: str) -> None:
        with self._lock:
            self.get(trajectory_id)
            self._seq += 1
            event = {
                "type": "skip",
                "trajectory_id": trajectory_id,
                "seq": self._seq,
                "ts": time.time(),
            }
            self._append(self._events_path, event)
            self._apply(event)

    # -- export ------------------------------------------------------------

    def labeled_steps(self, trajectory_id: str) -> list[LabeledStep]:
        record = self.get(trajectory_id)
        out = []
        for i in self._llm_steps(record):
            fb = self.get_feedback(trajectory_id, i)
            if fb is None:
                continue
            step = record["steps"][i]
            target, reward = convert(step["raw_output"], fb)
            out.append(
                LabeledStep(
                    module=step["module"],
                    input_render=step["input_render"],
                    target=target,
                    reward=reward,
                    trajectory_id=trajectory_id,
                    step_index=i,
                )
            )
        return out

    def export_lines(self, iteration: int | None = None) -> list[str]:
        """Labeled JSONL lines for finalized trajectories, insertion order."""
        lines = []
        for tid, record in self._trajectories.items():
            if tid not in self._finalized:
                continue
            if iteration is not None and record.get("iteration") != iteration:
                continue
            for ls in self.labeled_steps(tid):
                lines.append(json.dumps(ls.to_dict(), ensure_ascii=False))
        return lines
