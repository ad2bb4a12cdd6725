"""Coreference resolution as span-matrix segmentation."""

from .ingest import Document, FormatError, Span, Token, genre_of, parse_conll, parse_jsonl
from .spanmat import SpanMatrix, WindowPrediction, decode, encode_spans, merge_predictions
from .window import QueryPack, Vocab, Window, pack_detector_query, pack_query, segment
from .net import Dims, Model, init_params
from .train import TrainConfig, generate_synthetic, train
from .resolve import InferenceConfig, resolve_document
from .score import PRF, ScoreReport, b_cubed, ceaf, muc, report

__version__ = "0.1.0"
