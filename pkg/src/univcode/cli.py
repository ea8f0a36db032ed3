"""Command-line experiment runner.

Every table goes to stdout as CSV (or JSON), or to ``--out PATH`` together
with ``PATH.manifest.json`` holding the resolved arguments, seed and library
versions.  ``--config FILE`` reads ``key = value`` lines; ``command`` gives the
subcommand words and other keys become ``--key value`` flags, which explicit
flags on the command line override.

Exit status: 0 ok, 1 usage or invalid input, 2 a ``--check`` property failed,
3 a resource guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .capacity import CapacityProblem, blahut_arimoto, product_problem
from .codec import (
    decode,
    encode,
    read_text_ints,
    read_varints,
    write_varints,
)
from .dists import (
    ClassB,
    ClassI,
    ClassU,
    GeometricPmf,
    HarmonicPmf,
    QU,
    Block,
    FinitePmf,
    build_qU,
    from_descriptor,
    head_atoms,
    point_mass,
    tail_entropy,
    tightness_bound,
)
from .errors import ResourceError, UnivCodeError
from .redundancy import (
    CSV_COLUMNS,
    check_tail_condition,
    classB_lb,
    coupon_bound_check,
    redundancy,
)
from .spa import BayesMixture, Hybrid, KnownSource, PatternSPA, spa_from_descriptor

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument parsing helpers


def _params(text: str) -> dict:
    out = {}
    for part in filter(None, text.split(",")):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"expected key=value, got {part!r}")
        out[key.strip()] = value.strip()
    return out


def parse_dist(text: str):
    """``U:k=3``, ``B:eps=0.1,j=5``, ``I:seed=4``, ``point:x=7``, ``qU``,
    ``harmonic``, ``geometric:r=0.5``, a JSON descriptor, or ``@file.json``."""
    text = text.strip()
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    if text.startswith("{"):
        return from_descriptor(json.loads(text))
    name, _, rest = text.partition(":")
    p = _params(rest)
    try:
        if name == "U":
            return ClassU(int(p["k"]))
        if name == "B":
            return ClassB(Fraction(p.get("eps", p.get("epsilon"))), int(p["j"]))
        if name == "I":
            if "offsets" in p:
                return ClassI(offsets=[int(v) for v in p["offsets"].split("/")])
            return ClassI(seed=int(p["seed"])) if "seed" in p else ClassI(default=int(p.get("default", 0)))
        if name == "point":
            return point_mass(int(p["x"]))
        if name == "qU":
            return QU(int(p.get("k_max", 30)))
        if name == "harmonic":
            return HarmonicPmf()
        if name == "geometric":
            return GeometricPmf(float(p["r"]))
    except (KeyError, TypeError) as e:
        raise UsageError(f"distribution {text!r} lacks parameter {e}") from None
    raise UsageError(f"unknown distribution {text!r}")


def parse_family(text: str, args=None) -> list:
    """A finite member grid.

    ``U`` (k = 1..kmax), ``B`` (all 2**n members p_{1/n,j}), ``Bgrid``
    (p_{1/m,1} for m = 2..mmax), ``I`` (``count`` seeded members),
    ``points`` (point masses 0..m-1), or ``;``-separated distributions.
    """
    name, _, rest = text.partition(":")
    if ";" in text or (name == "U" and "k=" in rest) or (name == "B" and "j=" in rest):
        return [parse_dist(t) for t in text.split(";") if t.strip()]
    p = _params(rest) if name in ("U", "B", "Bgrid", "I", "points") else {}
    get = lambda key, default: int(p.get(key, getattr(args, key, None) or default))
    if name == "U":
        return [ClassU(k) for k in range(1, get("kmax", 5) + 1)]
    if name == "B":
        n = int(p.get("n", 2))
        return [ClassB(Fraction(1, n), j) for j in range(1, 2**n + 1)]
    if name == "Bgrid":
        return [ClassB(Fraction(1, m), 1) for m in range(2, get("mmax", 20) + 1)]
    if name == "I":
        start = int(p.get("seed", 0))
        return [ClassI(seed=start + s) for s in range(get("count", 100))]
    if name == "points":
        return [point_mass(x) for x in range(int(p.get("m", 2)))]
    return [parse_dist(t) for t in text.split(";") if t.strip()]


def parse_model(text: str):
    """``known:<dist>``, ``hybrid`` / ``hybrid:<dist>``, ``pattern:d=..,theta=..``,
    ``mixture:<family>``, a JSON descriptor or ``@file.json``."""
    text = text.strip()
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    if text.startswith("{"):
        return spa_from_descriptor(json.loads(text))
    name, _, rest = text.partition(":")
    if name == "known":
        return KnownSource(parse_dist(rest))
    if name == "hybrid":
        return Hybrid(PatternSPA(), parse_dist(rest) if rest else build_qU())
    if name == "pattern":
        p = _params(rest)
        return PatternSPA(float(p.get("d", 0.5)), float(p.get("theta", 0.5)))
    if name == "mixture":
        return BayesMixture(parse_family(rest))
    raise UsageError(f"unknown model {text!r}")


def parse_ints(text: str) -> list[int]:
    """``1,2,5`` or ``1..4``."""
    out = []
    for part in text.split(","):
        a, sep, b = part.partition("..")
        out.extend(range(int(a), int(b) + 1) if sep else [int(a)])
    return out


def parse_floats(text: str) -> list[float]:
    return [float(Fraction(t)) for t in text.split(",") if t.strip()]


def read_config(path: str) -> tuple[list[str], list[str]]:
    """Subcommand words and flags from a ``key = value`` file."""
    words, flags = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        if key == "command":
            words = value.split()
        elif key in ("check", "raw"):
            if value.lower() in ("1", "true", "yes"):
                flags.append(f"--{key}")
        else:
            flags += [f"--{key.replace('_', '-')}", value]
    return words, flags


# ---------------------------------------------------------------------------
# output


class Output:
    def __init__(self, args):
        self.args = args
        self.failures: list[str] = []

    def fail(self, what: str) -> None:
        self.failures.append(what)

    def _write(self, text: str) -> None:
        out = getattr(self.args, "out", None)
        if out:
            Path(out).write_text(text)
            write_manifest(self.args, out)
        else:
            sys.stdout.write(text)

    def table(self, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([_cell(v) for v in r] for r in rows)
        self._write(buf.getvalue())

    def json(self, obj) -> None:
        self._write(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return "" if v is None else v


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def write_manifest(args, out_path) -> Path:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    manifest = {
        "argv": getattr(args, "argv", None),
        "config": config,
        "seed": config.get("seed"),
        "versions": {"univcode": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "workers": os.environ.get("UNIVCODE_WORKERS", "1"),
    }
    path = Path(f"{out_path}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_class_show(args, out: Output):
    d = parse_dist(args.dist)
    info = {"label": d.label, "descriptor": d.descriptor(), "finite": d.finite}
    try:
        info["entropy_bits"] = d.entropy()
    except UnivCodeError as e:
        info["entropy_bits"] = None
        info["entropy_note"] = str(e)
    atoms = []
    for b in d.blocks():
        if len(atoms) >= args.atoms:
            break
        atoms.append({"start": b.start, "count": b.count, "mass_each": float(b.mass)})
    info["blocks"] = atoms
    if args.delta:
        info["head_atoms"] = [[x, float(m)] for x, m in head_atoms(d, args.delta)]
        if d.finite or not isinstance(d, QU):
            info["tail_entropy_bits"] = tail_entropy(d, args.delta)
    out.json(info)


def cmd_tightness(args, out: Output):
    members = parse_family(args.family, args)
    rows = []
    for g in parse_floats(args.gamma):
        bound = tightness_bound(members, g)
        ref = 2 ** math.floor(1 / g) - 1
        rows.append((g, bound, ref))
        if args.check and isinstance(members[0], ClassI) and bound > ref:
            out.fail(f"gamma={g}: {bound} > {ref}")
    out.table(("gamma", "bound", "dyadic_reference"), rows)


def cmd_redundancy(args, out: Output):
    members = parse_family(args.family, args)
    model = parse_model(args.model)
    rows = []
    for n in parse_ints(args.n):
        for p in members:
            r = redundancy(p, model, n, args.method, args.trials, args.seed)
            rows.append(r.row() + (p.label,))
            if args.check and r.value < -1e-9 - (r.ci_halfwidth or 0):
                out.fail(f"{p.label} n={n}: negative redundancy {r.value}")
    out.table(CSV_COLUMNS + ("member",), rows)


def cmd_capacity(args, out: Output):
    members = parse_family(args.family, args)
    if args.n == 1 and args.raw:
        prob = CapacityProblem.from_members(members, args.tol, args.max_iters)
    else:
        prob = product_problem(members, args.n, collapse=not args.raw,
                               tolerance=args.tol, max_iters=args.max_iters)
    res = blahut_arimoto(prob)
    if args.check and not res.converged:
        out.fail(f"no convergence, gap {res.gap}")
    if args.format == "csv":
        out.table(("member", "prior"), zip(prob.labels, map(float, res.prior)))
        sys.stderr.write(f"capacity_bits={res.capacity!r} gap={res.gap!r}\n")
    else:
        d = res.to_dict()
        d.update(n=args.n, members=prob.labels, outputs=prob.shape[1])
        out.json(d)


def cmd_counterexample(args, out: Output):
    rows = []
    for n in parse_ints(args.n):
        delta, lb = classB_lb(n)
        cap = ""
        if n <= args.ba_max:
            members = [ClassB(Fraction(1, n), j) for j in range(1, 2**n + 1)]
            cap = blahut_arimoto(product_problem(members, n)).capacity
            if args.check and cap < lb - 1e-3:
                out.fail(f"n={n}: capacity {cap} < bound {lb}")
        if args.check and float(delta) < 1 - 1 / math.e:
            out.fail(f"n={n}: delta {delta} < 1 - 1/e")
        rows.append((n, delta, lb, cap))
    out.table(("n", "delta", "lb_bits", "ba_capacity_bits"), rows)


def cmd_hybrid(args, out: Output):
    if args.family != "U":
        raise UsageError("hybrid demo is defined on the U family")
    members = [ClassU(k) for k in range(1, args.kmax + 1)]
    model = Hybrid(PatternSPA(args.d, args.theta), build_qU())
    rows = []
    for n in parse_ints(args.n):
        reps = [redundancy(p, model, n, "monte_carlo", args.trials, args.seed) for p in members]
        worst = max(reps, key=lambda r: r.upper)
        rows.append((n, worst.upper / n, worst.per_symbol, (worst.ci_halfwidth or 0) / n,
                     worst.label))
    if args.check:
        for a, b in zip(rows, rows[1:]):
            # CI-separated: upper edge at the larger n below the lower edge at the smaller n
            if not b[1] < a[2] - a[3]:
                out.fail(f"per-symbol redundancy not CI-separated between n={a[0]} and n={b[0]}")
    out.table(("n", "strong_per_symbol_upper", "per_symbol", "ci_per_symbol", "worst_member"), rows)


def cmd_tailcond(args, out: Output):
    if args.family == "U":
        members = [ClassU(k) for k in range(1, args.mmax + 1)]
        q1 = build_qU()
        # delta_m = 1/(m^2 2^(m^2)) puts exactly the members k > m in the tail
        grid = args.delta or ",".join(f"1/{m * m * 2 ** (m * m)}" for m in range(1, args.mmax))
    elif args.family == "B":
        members = [ClassB(Fraction(1, m), 1) for m in range(2, args.mmax + 1)]
        q1 = _block_uniform_q1(members)
        grid = args.delta or ",".join(f"1/{t}" for t in range(2, args.mmax))
    else:
        raise UsageError("tailcond family must be U or B")
    rows = check_tail_condition(members, q1, [Fraction(t) for t in grid.split(",") if t.strip()])
    if args.check and args.family == "U":
        divs = [r.tail_divergence for r in rows]
        if any(b > a + 1e-12 for a, b in zip(divs, divs[1:])) or divs[-1] >= 0.05:
            out.fail("U tail divergence column is not decreasing to below 0.05 bits")
    out.table(("delta", "sup_tail_entropy", "sup_tail_divergence", "entropy_member",
               "divergence_member"), rows)


def _block_uniform_q1(members):
    """Best-effort q1 for the B grid: mass proportional to 1/((i+1)(i+2)) on
    each dyadic block [2**i, 2**(i+1)), spread evenly inside the block."""
    top = max(m.atom for m in members).bit_length()
    weights = [Fraction(1, (i + 1) * (i + 2)) for i in range(top)]
    total = sum(weights)
    blocks = [Block(2**i, 2**i, w / total / 2**i) for i, w in enumerate(weights)]
    return FinitePmf(blocks, label="q1-dyadic")


def cmd_coupon(args, out: Output):
    d = parse_dist(args.dist)
    rep = coupon_bound_check(d, args.j, args.trials, args.seed)
    rows = []
    for name, r in rep.by_base.items():
        rows.append((args.j, name, r.threshold, r.frequent, r.empirical, r.stderr,
                     r.bound_tight, r.bound, r.holds))
    out.table(("j", "base", "threshold", "frequent_symbols", "empirical", "stderr",
               "bound_tight", "bound", "holds"), rows)


def cmd_codec(args, out: Output):
    model = parse_model(args.model)
    src = Path(args.input)
    if args.action == "encode":
        data = src.read_bytes()
        xs = read_varints(data) if args.format == "varint" else read_text_ints(io.StringIO(data.decode()))
        bs = encode(xs, model, args.precision)
        target = Path(args.output or f"{src}.uclb")
        target.write_bytes(bs.to_bytes())
        sys.stderr.write(f"{bs.n} symbols -> {bs.payload_bits} payload bits "
                         f"({-model.log2_prob(xs):.3f} modelled)\n")
    else:
        xs = decode(src.read_bytes(), model)
        target = Path(args.output or (str(src)[:-5] if str(src).endswith(".uclb") else f"{src}.out"))
        if args.format == "varint":
            target.write_bytes(write_varints(xs))
        else:
            target.write_text("".join(f"{x}\n" for x in xs))
    write_manifest(args, target)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="univcode", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="key = value file supplying defaults")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--out", help="write output here (plus a manifest)")
        p.add_argument("--check", action="store_true", help="exit 2 if a property fails")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    cls = sub.add_parser("class", help="inspect a distribution")
    cls_sub = cls.add_subparsers(dest="action", required=True, parser_class=_Parser)
    show = cls_sub.add_parser("show")
    show.add_argument("dist")
    show.add_argument("--atoms", type=int, default=8, help="number of blocks listed")
    show.add_argument("--delta", type=float)
    common(show, seed=False)
    show.set_defaults(func=cmd_class_show)

    t = sub.add_parser("tightness", help="sup over members of the (1-gamma) quantile")
    t.add_argument("--family", "--class", dest="family", default="I")
    t.add_argument("--count", type=int, default=100)
    t.add_argument("--kmax", type=int, default=10)
    t.add_argument("--gamma", default="0.5,0.25,0.1")
    common(t, seed=False)
    t.set_defaults(func=cmd_tightness)

    r = sub.add_parser("redundancy", help="exact or Monte-Carlo redundancy curves")
    r.add_argument("--family", "--class", dest="family", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--n", default="1")
    r.add_argument("--method", choices=("exact", "monte_carlo", "closed_form"), default="exact")
    r.add_argument("--trials", type=int, default=10_000)
    r.add_argument("--kmax", type=int, default=5)
    common(r)
    r.set_defaults(func=cmd_redundancy)

    c = sub.add_parser("capacity", help="Blahut-Arimoto on a member grid")
    c.add_argument("--family", "--class", dest="family", required=True)
    c.add_argument("--n", type=int, default=1)
    c.add_argument("--raw", action="store_true", help="do not collapse the product output space")
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--max-iters", type=int, default=100_000)
    c.add_argument("--kmax", type=int, default=3)
    c.add_argument("--format", choices=("json", "csv"), default="json")
    common(c, seed=False)
    c.set_defaults(func=cmd_capacity)

    ce = sub.add_parser("counterexample", help="class-B bound table with capacity cross-check")
    ce.add_argument("--n", default="1..4")
    ce.add_argument("--ba-max", type=int, default=4, help="largest n given a capacity run")
    common(ce, seed=False)
    ce.set_defaults(func=cmd_counterexample)

    h = sub.add_parser("hybrid", help="pattern + qU coder on the U family")
    h.add_argument("--family", "--class", dest="family", default="U")
    h.add_argument("--kmax", type=int, default=5)
    h.add_argument("--n", default="100,1000")
    h.add_argument("--trials", type=int, default=2000)
    h.add_argument("--d", type=float, default=0.5)
    h.add_argument("--theta", type=float, default=0.5)
    common(h)
    h.set_defaults(func=cmd_hybrid)

    tc = sub.add_parser("tailcond", help="tail entropy / tail divergence table")
    tc.add_argument("--family", "--class", dest="family", default="U")
    tc.add_argument("--mmax", type=int, default=20)
    tc.add_argument("--delta", help="comma list, fractions allowed; default per family")
    common(tc, seed=False)
    tc.set_defaults(func=cmd_tailcond)

    cp = sub.add_parser("coupon", help="missing frequent symbol frequency vs bounds")
    cp.add_argument("--dist", default="U:k=1")
    cp.add_argument("--j", type=int, default=100)
    cp.add_argument("--trials", type=int, default=100_000)
    common(cp)
    cp.set_defaults(func=cmd_coupon)

    cd = sub.add_parser("codec", help="compress or decompress an integer file")
    cd.add_argument("action", choices=("encode", "decode"))
    cd.add_argument("input")
    cd.add_argument("--model", required=True)
    cd.add_argument("-o", "--output")
    cd.add_argument("--format", choices=("text", "varint"), default="text")
    cd.add_argument("--precision", type=int, default=32)
    cd.set_defaults(func=cmd_codec)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        if "--config" in argv:
            argv = _merge_config(argv)
        args = ap.parse_args(argv)
        args.argv = argv
        out = Output(args)
        args.func(args, out)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except ResourceError as e:
        sys.stderr.write(f"resource guard: {e}\n")
        return EXIT_RESOURCE
    except (UnivCodeError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    if out.failures:
        for f in out.failures:
            sys.stderr.write(f"check failed: {f}\n")
        return EXIT_CHECK
    return EXIT_OK


def _merge_config(argv: list[str]) -> list[str]:
    """Command words, then config flags, then the remaining command-line flags."""
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file")
    cfg_words, cfg_flags = read_config(argv[i + 1])
    rest = argv[:i] + argv[i + 2:]
    n = 0
    while n < len(rest) and not rest[n].startswith("-"):
        n += 1
    return (rest[:n] or cfg_words) + cfg_flags + rest[n:]


if __name__ == "__main__":
    sys.exit(main())
