from .align import DocumentAlignment, MatchReport, PhraseOutcome, align_phrases, split_sentences, write_match_report
from .corpus import (
    Corpus,
    DocumentRecord,
    RawDocument,
    SDG_CLASS_COUNTS,
    SDG_CLASSES,
    SplitCorpus,
    TrainingSample,
    broadcast_samples,
    build_corpus,
    class_weights,
    load_prepared_corpus,
    read_raw_corpus,
    save_prepared_corpus,
    split_corpus,
    write_raw_corpus,
)
from .embeddings import EmbeddingTable, load_embeddings, random_pretrained, read_embedding_file
from .synth import class_name, synth_corpus
from .text import MAX_VOCAB, MAX_WORDS, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN, Vocab, encode_pad, tokenize

__all__ = [
    "DocumentAlignment",
    "MatchReport",
    "PhraseOutcome",
    "align_phrases",
    "split_sentences",
    "write_match_report",
    "Corpus",
    "DocumentRecord",
    "RawDocument",
    "SDG_CLASS_COUNTS",
    "SDG_CLASSES",
    "SplitCorpus",
    "TrainingSample",
    "broadcast_samples",
    "build_corpus",
    "class_weights",
    "load_prepared_corpus",
    "read_raw_corpus",
    "save_prepared_corpus",
    "split_corpus",
    "write_raw_corpus",
    "EmbeddingTable",
    "load_embeddings",
    "random_pretrained",
    "read_embedding_file",
    "class_name",
    "synth_corpus",
    "MAX_VOCAB",
    "MAX_WORDS",
    "PAD_ID",
    "PAD_TOKEN",
    "UNK_ID",
    "UNK_TOKEN",
    "Vocab",
    "encode_pad",
    "tokenize",
]
