"""Vulnerability-witnessing unit-test generation pipeline.

Slices a vulnerable Java class into focal contexts, prompts a chat model
for a test that fails before the fix and passes after it, executes the
candidate against both project versions, refines it through feedback
rounds, and aggregates the outcomes into evaluation reports.
"""

from .focal import FocalContext, FragmentBins, MethodLocator, assemble_context, extract_fragments
from .harness import ExecutionLog, TestOutcome, Verdict, classify_log
from .llm import Conversation, TranscriptStore, extract_code, send
from .loop import IterationRecord, LoopState, RunRecord, run_entry, select_best_generation, select_feedback, update_state
from .manifest import BuildSpec, VulnEntry, load_manifest, materialize, validate_entry
from .prompts import FeedbackKind, PromptConfig, PromptMessage, build_feedback_prompt, build_initial_prompt, check_budget
from .reporting import ManualLabel, MetricsSummary, ablation_table, classify_failure, cwe_table, emit_results_table, semantic_correct, summarize, syntactic_correct

__version__ = "0.1.0"
