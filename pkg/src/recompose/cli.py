"""Command-line entry point: build-db, compose, recognize, eval."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import fragments, lm
from .core import TimeBase, tokenize
from .errors import RecomposeError
from .features import normalize_melody
from .lyrics import LANGUAGES, lyric_lines, parse_lyrics
from .metrics import MetricReport, iou
from .midi import read_midi_file, write_midi
from .recreation import ChordProgression, GuidelineConfig, compose_song

log = logging.getLogger("recompose")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(Exception):
    """Bad input from the command line or config file (exit status 1)."""


def _parse_tendency(text: str) -> dict[int, frozenset[int]]:
    # "11:0;5:4" -> {11: {0}, 5: {4}}; targets may be comma-separated
    table: dict[int, frozenset[int]] = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        src, _, dst = item.partition(":")
        table[int(src)] = frozenset(int(x) for x in dst.split(","))
    return table


def _format_tendency(table: dict[int, frozenset[int]]) -> str:
    return ";".join(f"{k}:{','.join(map(str, sorted(v)))}" for k, v in sorted(table.items()))


@dataclass
class Config:
    guidelines: GuidelineConfig = field(default_factory=GuidelineConfig)
    order: int = 3
    alpha: float = 0.01
    build_top_k: int = 5
    db: str | None = None
    model: str | None = None
    seed: int = 0
    language: str = "english"
    tonality: str = "auto"
    g: int = 2
    chords: str = "C G Am F"
    ticks_per_quarter: int = 480
    beats_per_bar: int = 4

    @property
    def tb(self) -> TimeBase:
        return TimeBase(self.ticks_per_quarter, self.beats_per_bar)

    def set(self, key: str, value: str) -> None:
        """Assign one key from its text form; unknown keys raise ``UserError``."""
        guide = {f.name: f for f in fields(GuidelineConfig)}
        own = {f.name: f for f in fields(self) if f.name != "guidelines"}
        try:
            if key == "tendency_table":
                self.guidelines.tendency_table = _parse_tendency(value)
            elif key in guide:
                current = getattr(self.guidelines, key)
                setattr(self.guidelines, key, type(current)(value))
            elif key in own:
                current = getattr(self, key)
                setattr(self, key, value if current is None else type(current)(value))
            else:
                raise UserError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise UserError(f"bad value for {key}: {value!r} ({exc})") from None

    def validate(self) -> None:
        try:
            GuidelineConfig(**dataclasses.asdict(self.guidelines))
            TimeBase(self.ticks_per_quarter, self.beats_per_bar)
        except ValueError as exc:
            raise UserError(str(exc)) from None
        if self.language not in LANGUAGES:
            raise UserError(f"unknown language {self.language!r}")
        if self.tonality not in ("auto", "major", "minor"):
            raise UserError(f"unknown tonality {self.tonality!r}")

    def dumps(self) -> str:
        out = []
        for f in fields(GuidelineConfig):
            v = getattr(self.guidelines, f.name)
            out.append(f"{f.name}={_format_tendency(v) if f.name == 'tendency_table' else v}")
        for f in fields(self):
            if f.name != "guidelines" and getattr(self, f.name) is not None:
                out.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> Config:
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UserError(f"config line {lineno}: expected key=value, got {raw!r}")
            cfg.set(key.strip(), value.strip())
        return cfg


def _load_config(args: argparse.Namespace) -> Config:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UserError(f"config file not found: {path}")
        cfg = Config.loads(path.read_text(encoding="utf-8"))
    else:
        cfg = Config()
    for key in ("db", "model", "seed", "language", "tonality", "g", "chords"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UserError(f"missing --{what}")
    p = Path(path)
    if not p.is_file():
        raise UserError(f"{what} file not found: {p}")
    return p


def cmd_build_db(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise UserError(f"corpus directory not found: {corpus}")
    paths = sorted(p for p in corpus.iterdir() if p.suffix.lower() in (".mid", ".midi"))
    if not paths:
        raise UserError(f"no MIDI files in {corpus}")
    if not cfg.model or not cfg.db:
        raise UserError("build-db needs --model and --db output paths")
    tb = cfg.tb
    seeds = []
    for p in paths:
        song = read_midi_file(p)
        if song.tb.ticks_per_quarter != tb.ticks_per_quarter:
            scale = tb.ticks_per_quarter / song.tb.ticks_per_quarter
            song.notes = [type(n)(n.pitch, round(n.onset * scale), max(1, round(n.duration * scale)), n.velocity)
                          for n in song.notes]
        if song.notes:
            seeds.append(normalize_melody(song.notes)[0])
    if not seeds:
        raise UserError("no notes found in the corpus")
    model = lm.train([tokenize(s, tb) for s in seeds], cfg.order, cfg.alpha)
    db = fragments.build_database(seeds, model, tb, fragments.BuildConfig(k=cfg.build_top_k, seed=cfg.seed))
    lm.save(model, cfg.model)
    fragments.save(db, cfg.db)
    print(f"records\t{len(db)}")
    print(f"stats\t{db.stats.summary()}")
    return EXIT_OK


def cmd_compose(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    lyrics_path = _require_file(args.lyrics, "lyrics")
    db_path = _require_file(cfg.db, "db")
    model_path = _require_file(cfg.model, "model")
    if not args.out:
        raise UserError("missing --out")
    try:
        progression = ChordProgression.parse(cfg.chords)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    db = fragments.load(db_path)
    model = lm.load(model_path)
    song = compose_song(lyrics_path.read_text(encoding="utf-8"), progression, db, model, cfg.guidelines,
                        db.tb, rng_seed=cfg.seed,
                        tonality_override=None if cfg.tonality == "auto" else cfg.tonality,
                        language=cfg.language, g=cfg.g)
    out = Path(args.out)
    write_midi(song.to_midi(), out)
    Path(str(out) + ".report.txt").write_text(song.report(), encoding="utf-8")
    print(f"tonality\t{song.tonality}")
    for rec in song.lines:
        print(f"line {rec.index}\tsyllables={rec.syllables}\tstruct={rec.struct_index}\t"
              f"fragments={','.join(str(p.fragment_id) for p in rec.pieces)}\t"
              f"chords={'|'.join(p.chords for p in rec.pieces)}")
    return EXIT_OK


def _read_gold(path: Path) -> set[int]:
    try:
        return {int(x) for x in path.read_text(encoding="utf-8").split()}
    except ValueError:
        raise UserError(f"gold file must list chorus line numbers: {path}") from None


def cmd_recognize(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    path = _require_file(args.lyrics, "lyrics")
    sheet = parse_lyrics(path.read_text(encoding="utf-8"), cfg.language, g=cfg.g)
    print("S\t" + " ".join(map(str, sheet.S)))
    print("struct\t" + " ".join(map(str, sheet.struct)))
    print("chorus\t" + " ".join(map(str, sorted(sheet.chorus))))
    if args.gold:
        print(f"IoU\t{iou(sheet.chorus, _read_gold(_require_file(args.gold, 'gold'))):.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = MetricReport(orders=tuple(args.n))
    bad = []
    songs = []
    for p in args.midi:
        try:
            songs.append((p, read_midi_file(p)))
        except (OSError, RecomposeError) as exc:
            bad.append(f"{p}: {exc}")
    if bad:
        raise UserError("unreadable MIDI files:\n  " + "\n  ".join(bad))
    for p, song in songs:
        toks = tokenize(song.notes, song.tb)
        if len(toks) < max(args.n):
            raise UserError(f"{p}: too few notes for {max(args.n)}-grams")
        report.add(Path(p).name, toks)
    sys.stdout.write(report.to_tsv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recompose", description="Lyric-to-melody generation by fragment retrieval.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key=value config file (flags override it)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("build-db", help="train the melody model and build the fragment database")
    p.add_argument("corpus", help="directory of MIDI seed melodies")
    p.add_argument("--model", help="model output path")
    p.add_argument("--db", help="database output path")
    common(p)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("compose", help="compose a melody for lyrics")
    p.add_argument("--lyrics", required=True)
    p.add_argument("--chords", help='chord progression, e.g. "C G Am F"')
    p.add_argument("--db")
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="output MIDI path; the report goes to <out>.report.txt")
    p.add_argument("--tonality", choices=("auto", "major", "minor"))
    p.add_argument("--language", choices=LANGUAGES)
    p.add_argument("--g", type=int)
    common(p)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("recognize", help="print syllable string, struct array and chorus lines")
    p.add_argument("--lyrics", required=True)
    p.add_argument("--language", choices=LANGUAGES)
    p.add_argument("--g", type=int)
    p.add_argument("--gold", help="file with the true chorus line numbers")
    common(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("eval", help="Dist-n / Ent-n table for MIDI melodies")
    p.add_argument("midi", nargs="+")
    p.add_argument("--n", type=int, nargs="+", default=[1, 2])
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, RecomposeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - reported as an internal failure
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
