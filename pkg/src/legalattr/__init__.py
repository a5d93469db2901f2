"""Token-level attribution analysis for legal-text classifiers."""

from .tokenizer import Vocabulary, TokenizedText, load_vocab, tokenize
from .model import ModelConfig, Classifier, Example, init_model, train, evaluate
from .attribution import AttributionConfig, AttributionRecord, integrated_gradients, attribute_dataset

__version__ = "0.1.0"
