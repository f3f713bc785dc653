"""Lyric-to-melody composition by generating a fragment database and retrieving from it."""

from .core import Note, NoteToken, TimeBase, detokenize, tokenize
from .errors import (DatabaseFormatError, LyricError, MidiError, ModelFormatError, MonophonyError,
                     RecomposeError, RetrievalError)
from .features import ChordSymbol, Tonality, infer_chords, infer_tonality
from .fragments import BuildConfig, Fragment, FragmentDatabase, build_database
from .lm import MelodyModel, generate_continuation, perplexity, train
from .lyrics import LyricSheet, parse_lyrics, recognize_structure
from .metrics import MetricReport, dist_n, ent_n, iou
from .midi import MidiSong, read_midi, write_midi
from .recreation import ChordProgression, GuidelineConfig, Song, build_chord_regex, compose_song

__version__ = "0.1.0"

__all__ = [
    "BuildConfig", "ChordProgression", "ChordSymbol", "DatabaseFormatError", "Fragment", "FragmentDatabase",
    "GuidelineConfig", "LyricError", "LyricSheet", "MelodyModel", "MetricReport", "MidiError", "MidiSong",
    "ModelFormatError", "MonophonyError", "Note", "NoteToken", "RecomposeError", "RetrievalError", "Song",
    "TimeBase", "Tonality", "build_chord_regex", "build_database", "compose_song", "detokenize", "dist_n",
    "ent_n", "generate_continuation", "infer_chords", "infer_tonality", "iou", "parse_lyrics", "perplexity",
    "read_midi", "recognize_structure", "tokenize", "train", "write_midi",
]
