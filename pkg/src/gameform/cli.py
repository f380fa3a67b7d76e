"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (invalid program, failed
formalization, verdict not ok), 2 usage error. Results go to stdout, logs to
stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from .corpus import DescriptionRecord, ManifestError, default_example, load_manifest
from .engine import (
    GAMMA_SOURCE,
    EngineError,
    EngineLimits,
    enumerate_outcomes,
    format_transcript,
    solve,
    trace_moves,
    with_gamma,
)
from .games import ExtractionError, GameClass, check_semantics, classify, extract_matrix
from .harness import evaluate, render_report
from .parser import ParseError, parse_program
from .pipeline import (
    HttpChatClient,
    LlmConfig,
    LlmError,
    ReplayChatClient,
    TranscriptWriter,
    formalize,
)
from .terms import format_term

log = logging.getLogger("gameform")

# section, key, type; the dest name is key
_CONFIG_KEYS = {
    "llm": {
        "model_name": str,
        "endpoint": str,
        "temperature": float,
        "max_output_tokens": int,
        "timeout": float,
        "max_attempts": int,
        "fresh_restart": bool,
    },
    "engine": {"max_inference_steps": int, "max_term_depth": int},
    "eval": {"workers": int, "strict": bool, "require_zero_sum": bool},
}

_DEFAULTS = {
    "workers": 4,
    "strict": False,
    "require_zero_sum": True,
    "fresh_restart": False,
}


class UsageError(Exception):
    pass


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    out = {}
    for section, keys in _CONFIG_KEYS.items():
        if not cp.has_section(section):
            continue
        for key in cp[section]:
            if key not in keys:
                raise UsageError(f"{path}: unknown key [{section}] {key}")
            typ = keys[key]
            try:
                out[key] = cp.getboolean(section, key) if typ is bool else typ(cp[section][key])
            except ValueError as e:
                raise UsageError(f"{path}: bad value for [{section}] {key}: {e}") from None
    return out


def _settings(args) -> dict:
    """Flags override the config file, which overrides defaults."""
    merged = dict(_DEFAULTS)
    merged.update(_read_config(args.config))
    for key, val in vars(args).items():
        if val is not None:
            merged[key] = val
    return merged


def _limits(s: dict) -> EngineLimits:
    keys = ("max_inference_steps", "max_term_depth", "max_solutions")
    return EngineLimits(**{k: s[k] for k in keys if s.get(k) is not None})


def _llm_config(s: dict) -> LlmConfig:
    kw = {k: s[k] for k in _CONFIG_KEYS["llm"] if s.get(k) is not None}
    return LlmConfig(strict=bool(s.get("strict")), **kw)


def _read_program(path: str, strict: bool = False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return parse_program(text, source_name=path, strict=strict)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _game_class(name: str) -> GameClass:
    try:
        return GameClass.parse(name)
    except ValueError:
        choices = ", ".join(c.value for c in GameClass)
        raise argparse.ArgumentTypeError(f"unknown game class {name!r} (choose from {choices})")


# ------------------------------------------------------------------ commands


def cmd_parse(args, s) -> int:
    _, report = _read_program(args.file, s["strict"])
    _emit(report.to_dict())
    return 0 if report.ok else 1


def _load_game(args, s):
    program, report = _read_program(args.file, s["strict"])
    if not report.ok:
        for e in report.errors:
            log.error("%s:%d:%d: %s", args.file, e.span.line, e.span.col, e.message)
        return None
    return program


def cmd_solve(args, s) -> int:
    program = _load_game(args, s)
    if program is None:
        return 1
    if not args.no_gamma:
        program = with_gamma(program)
    try:
        q = solve(program, args.query, _limits(s))
        sys.stdout.write(format_transcript(q))
    except ParseError as e:
        d = e.diagnostics[0]
        log.error("query %d:%d: %s", d.span.line, d.span.col, d.message)
        return 2
    except EngineError as e:
        sys.stdout.flush()
        log.error("%s: %s", e.kind, e)
        return 1
    return 0


def cmd_outcomes(args, s) -> int:
    program = _load_game(args, s)
    if program is None:
        return 1
    try:
        pairs = enumerate_outcomes(program, _limits(s))
    except EngineError as e:
        _emit({"ok": False, "error": {"kind": e.kind, "message": str(e)}})
        return 1
    _emit(
        {
            "ok": True,
            "outcomes": [
                {
                    "trace": format_term(t),
                    "moves": [[format_term(p), format_term(m)] for p, m in trace_moves(t)],
                    "outcome": format_term(o),
                }
                for t, o in pairs
            ],
        }
    )
    return 0


def cmd_classify(args, s) -> int:
    program = _load_game(args, s)
    if program is None:
        return 1
    limits = _limits(s)
    if args.expect is not None:
        verdict = check_semantics(
            program,
            args.expect,
            limits,
            require_zero_sum=s["require_zero_sum"],
            strict=not args.weak,
            require_symmetry=args.symmetry,
        )
        _emit(verdict.to_dict())
        return 0 if verdict.ok else 1
    try:
        matrix = extract_matrix(program, limits)
    except ExtractionError as e:
        _emit({"ok": False, "error": {"kind": "extraction_failure", "cause": e.cause, "message": str(e)}})
        return 1
    found = classify(matrix, require_zero_sum=s["require_zero_sum"], strict=not args.weak)
    _emit({"ok": True, "detected_classes": sorted(c.value for c in found), "matrix": matrix.to_dict()})
    return 0


def _client(args, cfg: LlmConfig):
    if args.mode == "replay":
        if not args.transcript:
            raise UsageError("--mode replay needs --transcript")
        try:
            return ReplayChatClient(args.transcript), None
        except OSError as e:
            raise UsageError(f"cannot read transcript {args.transcript}: {e.strerror}") from None
    writer = TranscriptWriter(args.transcript) if args.transcript else None
    return HttpChatClient(cfg), writer


def _example(args):
    if args.zero_shot:
        return None
    if args.example_nl or args.example_program:
        if not (args.example_nl and args.example_program):
            raise UsageError("--example-nl and --example-program go together")
        return (
            Path(args.example_nl).read_text(encoding="utf-8"),
            Path(args.example_program).read_text(encoding="utf-8"),
        )
    return default_example()


def cmd_formalize(args, s) -> int:
    cfg = _llm_config(s)
    if args.manifest:
        if not args.id:
            raise UsageError("--manifest needs --id")
        record = load_manifest(args.manifest).get(args.id)
    else:
        if args.description_file:
            text = Path(args.description_file).read_text(encoding="utf-8")
        elif args.description:
            text = args.description
        else:
            raise UsageError("give --description, --description-file or --manifest/--id")
        record = DescriptionRecord(args.id or "cli", args.expect or GameClass.PRISONERS_DILEMMA,
                                   "standard", "numerical", text)
    client, writer = _client(args, cfg)
    result = formalize(record, client, cfg, GAMMA_SOURCE, _example(args), writer)
    out = result.to_dict()
    if args.expect is not None and result.final_program is not None:
        program, _ = parse_program(result.final_program)
        out["verdict"] = check_semantics(
            program, args.expect, _limits(s), require_zero_sum=s["require_zero_sum"]
        ).to_dict()
    if args.out and result.final_program is not None:
        Path(args.out).write_text(result.final_program, encoding="utf-8")
    _emit(out)
    if result.final_program is None:
        return 1
    return 0 if "verdict" not in out or out["verdict"]["ok"] else 1


def _run_eval(args, s, mode: str) -> int:
    args.mode = mode
    cfg = _llm_config(s)
    manifest = load_manifest(args.manifest)
    client, writer = _client(args, cfg)
    report = evaluate(
        manifest,
        client,
        cfg,
        GAMMA_SOURCE,
        _example(args),
        transcript=writer,
        workers=s["workers"],
        limits=_limits(s),
        require_zero_sum=s["require_zero_sum"],
    )
    if args.out_json:
        Path(args.out_json).write_text(render_report(report, "json") + "\n", encoding="utf-8")
    if args.out_md:
        Path(args.out_md).write_text(render_report(report, "markdown"), encoding="utf-8")
    sys.stdout.write(render_report(report, args.format) + ("\n" if args.format == "json" else ""))
    return 0


def cmd_eval(args, s) -> int:
    return _run_eval(args, s, args.mode)


def cmd_replay(args, s) -> int:
    return _run_eval(args, s, "replay")


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [llm], [engine] and [eval] sections")
    common.add_argument("-v", "--verbose", action="store_true", default=None)
    common.add_argument("--strict", action="store_true", default=None,
                        help="treat singleton-variable warnings as errors")
    common.add_argument("--max-steps", dest="max_inference_steps", type=int)
    common.add_argument("--max-depth", dest="max_term_depth", type=int)

    p = argparse.ArgumentParser(prog="gameform", description="Game-description solver and translation toolkit.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    sp = sub.add_parser("parse", parents=[common], help="check the syntax of a program")
    sp.add_argument("file")
    sp.set_defaults(subparser=sp, func=cmd_parse)

    sp = sub.add_parser("solve", parents=[common], help="run a query against a game program")
    sp.add_argument("file")
    sp.add_argument("--query", "-q", required=True)
    sp.add_argument("--no-gamma", action="store_true", help="do not add the game-independent rules")
    sp.add_argument("--max-solutions", type=int)
    sp.set_defaults(subparser=sp, func=cmd_solve)

    sp = sub.add_parser("outcomes", parents=[common], help="list every terminal history and outcome")
    sp.add_argument("file")
    sp.set_defaults(subparser=sp, func=cmd_outcomes)

    zs = argparse.ArgumentParser(add_help=False)
    zs.add_argument("--no-zero-sum", dest="require_zero_sum", action="store_false", default=None,
                    help="do not require zero-sum payoffs for matching pennies")

    sp = sub.add_parser("classify", parents=[common, zs], help="classify a game by its payoff order")
    sp.add_argument("file")
    sp.add_argument("--expect", type=_game_class)
    sp.add_argument("--weak", action="store_true", help="accept ties in the payoff order")
    sp.add_argument("--symmetry", action="store_true", help="also require symmetric payoffs")
    sp.set_defaults(subparser=sp, func=cmd_classify)

    llm = argparse.ArgumentParser(add_help=False)
    llm.add_argument("--model", dest="model_name")
    llm.add_argument("--endpoint")
    llm.add_argument("--temperature", type=float)
    llm.add_argument("--max-output-tokens", type=int)
    llm.add_argument("--max-attempts", type=int)
    llm.add_argument("--fresh-restart", action="store_true", default=None,
                     help="re-send the original prompt on the last attempt")
    llm.add_argument("--transcript", help="JSON-lines transcript to record to or replay from")
    llm.add_argument("--zero-shot", action="store_true", help="omit the worked example")
    llm.add_argument("--example-nl", help="file with the example description")
    llm.add_argument("--example-program", help="file with the example game program")

    sp = sub.add_parser("formalize", parents=[common, zs, llm], help="translate one description")
    sp.add_argument("--description")
    sp.add_argument("--description-file")
    sp.add_argument("--manifest")
    sp.add_argument("--id")
    sp.add_argument("--expect", type=_game_class, help="grade the result against this class")
    sp.add_argument("--mode", choices=("live", "replay"), default="live")
    sp.add_argument("--out", help="write the final program here")
    sp.set_defaults(subparser=sp, func=cmd_formalize)

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--manifest", required=True)
    out.add_argument("--workers", type=int)
    out.add_argument("--out-json")
    out.add_argument("--out-md")
    out.add_argument("--format", choices=("json", "markdown"), default="json")

    sp = sub.add_parser("eval", parents=[common, zs, llm, out], help="evaluate a whole manifest")
    sp.add_argument("--mode", choices=("live", "replay"), default="replay")
    sp.set_defaults(subparser=sp, func=cmd_eval)

    sp = sub.add_parser("replay", parents=[common, zs, llm, out], help="re-grade a recorded transcript")
    sp.set_defaults(subparser=sp, func=cmd_replay)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = _settings(args)
        return args.func(args, settings)
    except UsageError as e:
        log.error("%s", e)
        args.subparser.print_usage(sys.stderr)
        return 2
    except (ManifestError, KeyError) as e:
        log.error("%s", e)
        return 2
    except (LlmError, OSError) as e:
        log.error("%s", e)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
