"""Command-line entry point.

Exit codes: 0 success, 1 usage or specification error, 2 data or model
error.  Diagnostics go to standard error as ``LEVEL path message`` lines.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from vmcheck import __version__
from vmcheck.compiler import FrameSet, compile_spec, emit, parse_spec
from vmcheck.errors import CompileError, DataError, SpecError, VmcError
from vmcheck.models import (
    DesignSpec,
    SimConfig,
    Term,
    bundle_from_json,
    bundle_to_json,
    fit_gaussian_conjugate,
    fit_grouped,
    simulate_dataset,
)
from vmcheck.presets import PRESET_IDS, preset
from vmcheck.sampling import enumerate_quantities
from vmcheck.tables import read_observed, write_observed

EXIT_OK, EXIT_SPEC, EXIT_DATA = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _diag(level: str, path: str, message: str) -> None:
    print(f"{level} {path} {message}", file=sys.stderr)


def _warn_lines(warnings: Sequence[str]) -> None:
    for w in warnings:
        path, _, msg = w.partition(": ")
        _diag("WARNING", path if msg else "-", msg or w)


def atomic_write(path: str | Path, text: str) -> None:
    """Write ``text`` via a temporary sibling file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}") from None


def _seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("VMC_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise _UsageError(f"VMC_SEED must be an integer, got {env!r}") from None


def _load_bundle(path: str):
    return bundle_from_json(_read(path))


def _load_obs(path: str, bundle):
    fitted = bundle.fitted_data
    return read_observed(_read(path), fitted.response_name, fitted.schema)


_PLAYER = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>model check</title>
<script src="https://cdn.jsdelivr.net/npm/vega@5"></script>
<script src="https://cdn.jsdelivr.net/npm/vega-lite@5"></script>
<script src="https://cdn.jsdelivr.net/npm/vega-embed@6"></script>
</head><body>
<div id="chart"></div><div id="status"></div>
<script id="payload" type="application/json">__PAYLOAD__</script>
<script>
const doc = JSON.parse(document.getElementById("payload").textContent);
const frames = doc.frames ? doc.frames.map(f => [f.id, f.chart]) : [[null, doc]];
const delay = 1000 / (doc.fps || 1);
let i = 0;
function show() {
  const [id, chart] = frames[i];
  vegaEmbed("#chart", chart, {actions: false});
  document.getElementById("status").textContent = id === null ? "" : `frame ${i + 1}/${frames.length} (draw ${id})`;
  i = (i + 1) % frames.length;
}
show();
if (frames.length > 1) setInterval(show, delay);
</script></body></html>
"""


def player_html(chart_json: str) -> str:
    """Self-contained page that plays frame sets at their frame rate (single charts render once)."""
    return _PLAYER.replace("__PAYLOAD__", chart_json.replace("</", "<\\/"))


def _write_chart(out, args) -> None:
    text = emit(out)
    atomic_write(args.out, text)
    if args.html:
        atomic_write(Path(args.out).with_suffix(".html"), player_html(text))
    meta = out.metadata if isinstance(out, FrameSet) else out.spec.get("usermeta", {}).get("vmc", {})
    _warn_lines(meta.get("warnings", []))


def cmd_compile(args) -> int:
    spec = parse_spec(_read(args.spec))
    bundle = _load_bundle(args.bundle)
    obs = _load_obs(args.obs, bundle)
    _write_chart(compile_spec(spec, bundle, obs, seed=_seed(args)), args)
    return EXIT_OK


def cmd_quantities(args) -> int:
    bundle = _load_bundle(args.bundle)
    sys.stdout.write("".join(f"{q.id}\n" for q in enumerate_quantities(bundle)))
    return EXIT_OK


def cmd_fit(args) -> int:
    obs = read_observed(_read(args.obs), args.response)
    seed = _seed(args) or 0
    if args.group:
        if not args.x:
            raise _UsageError("--group needs --x")
        bundle = fit_grouped(obs, args.group, args.x, None, args.draws, seed)
    else:
        terms = [Term("intercept")] + ([Term("numeric", args.x)] if args.x else [])
        bundle = fit_gaussian_conjugate(obs, DesignSpec(tuple(terms)), None, args.draws, seed)
    atomic_write(args.out, bundle_to_json(bundle))
    return EXIT_OK


def cmd_simulate(args) -> int:
    k = args.regions
    slopes = args.slopes or [1.0 + 1.5 * i for i in range(k)]
    intercepts = args.intercepts or [0.5 * i for i in range(k)]
    if len(slopes) != k or len(intercepts) != k:
        raise _UsageError("--slopes and --intercepts need one value per region")
    seed = _seed(args) or 0
    obs = simulate_dataset(SimConfig(args.n, slopes, intercepts, args.sigma, seed))
    text = write_observed(obs)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    if args.preset not in PRESET_IDS:
        raise SpecError("preset", f"unknown preset {args.preset!r}; valid presets are {list(PRESET_IDS)}")
    if args.bundle:
        bundle = _load_bundle(args.bundle)
        obs = _load_obs(args.obs, bundle) if args.obs else bundle.fitted_data
    else:
        from vmcheck.demo import demo_bundle, demo_data

        bundle, obs = demo_bundle(), demo_data()
    args.out = args.out or f"{args.preset}.json"
    _write_chart(compile_spec(preset(args.preset, bundle, obs), bundle, obs, seed=_seed(args)), args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vmcheck", description="Compile model-check specifications into chart specifications.")
    p.add_argument("--version", action="version", version=f"vmcheck {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("compile", help="compile a spec against a model bundle and observed data")
    c.add_argument("--spec", required=True)
    c.add_argument("--bundle", required=True)
    c.add_argument("--obs", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--html", action="store_true", help="also write a self-contained player page")
    c.set_defaults(func=cmd_compile)

    q = sub.add_parser("quantities", help="list the checkable quantities of a bundle")
    q.add_argument("--bundle", required=True)
    q.set_defaults(func=cmd_quantities)

    f = sub.add_parser("fit", help="fit a conjugate gaussian model and write a bundle")
    f.add_argument("--obs", required=True)
    f.add_argument("--response", default="y")
    f.add_argument("--x", help="numeric predictor")
    f.add_argument("--group", help="categorical predictor for per-group intercepts and slopes")
    f.add_argument("--draws", type=int, default=1000)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a grouped regression data set as CSV")
    s.add_argument("--regions", type=int, default=3)
    s.add_argument("--n", type=int, default=40, help="rows per region")
    s.add_argument("--slopes", type=float, nargs="+")
    s.add_argument("--intercepts", type=float, nargs="+")
    s.add_argument("--sigma", type=float, default=0.3)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("check", help="compile a named preset (demo data unless --bundle is given)")
    k.add_argument("--preset", required=True)
    k.add_argument("--bundle")
    k.add_argument("--obs")
    k.add_argument("--out")
    k.add_argument("--seed", type=int)
    k.add_argument("--html", action="store_true")
    k.set_defaults(func=cmd_check)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise _UsageError("a subcommand is required")
        return args.func(args)
    except _UsageError as e:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        _diag("ERROR", "usage", str(e))
        return EXIT_SPEC
    except CompileError as e:
        _diag("ERROR", f"{e.stage}:{e.path}", str(getattr(e.cause, "message", e.cause)))
        return EXIT_DATA if e.is_data_error else EXIT_SPEC
    except SpecError as e:
        _diag("ERROR", e.path, e.message)
        return EXIT_SPEC
    except DataError as e:
        _diag("ERROR", "data", str(e))
        return EXIT_DATA
    except VmcError as e:
        _diag("ERROR", "-", str(e))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
