"""Physician trait profiling from aggregated patient reviews.

The pipeline ingests review corpora, extracts ten traits per physician
(Big Five personality dimensions plus five healthcare judgment traits)
through structured LLM prompting, grades competing extraction models with
an LLM judge and a blinded human annotation service, and runs the full
statistical analysis suite over the assembled trait profiles.
"""

__version__ = "0.1.0"
