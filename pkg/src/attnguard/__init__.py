"""Backdoor-prompt defense toolkit for text-to-image diffusion models.

Detects backdoored prompts from their cross-attention traces, localizes
the trigger token by binary search against a generation-similarity
oracle, and evaluates defense quality.
"""

from .cda import CdaModel, cda_classify, train_cda
from .ftt import FttModel, frobenius_dispersion, ftt_classify, tune_ftt_threshold
from .localize import LocalizeConfig, LocalizeResult, localize
from .metrics import EvalReport, eval_asb, eval_asr, eval_detection
from .oracle import SimilarityOracle, SimulatedOracle, WireOracle, simulated_oracle
from .pipeline import run_pipeline, simulated_oracle_factory
from .synth import SynthParams, generate_corpus, synth_backdoor, synth_benign
from .trace import (
    AttentionTrace,
    Label,
    RawTrace,
    average_over_time,
    decode_trace,
    encode_trace,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"
