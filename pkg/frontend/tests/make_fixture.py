"""Generate a small trajectory file for the console round-trip test.

Produces one ok trajectory with exactly three LLM steps (decompose, judge,
complete): the judge rejects the only document, paging exhausts, and the
capped history forces completion.

Usage: python3 make_fixture.py <out.jsonl>
"""

import json
import sys

from fsmrag.backends import SequenceBackend
from fsmrag.config import AgentConfig
from fsmrag.fsm import run, write_trajectories
from fsmrag.kb import ingest_kb

kb = ingest_kb(
    [
        json.dumps(
            {
                "doc_id": "doc-1",
                "title": "Sole Document",
                "passages": ["The only passage in this corpus mentions a probe topic."],
            }
        )
    ]
)
backend = SequenceBackend(
    {
        "decompose": ["[Next] What does the probe topic say?"],
        "judge": ["[Irrelevant]"],
        "complete": ["nothing conclusive"],
    }
)
final, traj = run(
    "What can be learned about the probe topic?",
    kb,
    backend,
    AgentConfig(subquery_cap=1),
    question_id="demo-1",
)
assert traj.status == "ok", traj.error
llm = [s for s in traj.steps if s.is_llm]
assert len(llm) == 3, [s.module for s in traj.steps]
with open(sys.argv[1], "w", encoding="utf-8") as f:
    write_trajectories([traj], f)
print(f"wrote 1 trajectory with {len(llm)} LLM steps")
