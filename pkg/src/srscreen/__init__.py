"""Two-phase screening pipeline for systematic reviews.

Subpackages cover corpus ingestion/dedup, guide-driven decision logic,
a pluggable chat-model gateway, RAG full-text answering, a Rayyan-style
active-learning baseline, metrics/time accounting, and the pipeline
orchestration plus review HTTP service.
"""

__version__ = "0.1.0"
