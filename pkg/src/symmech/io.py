"""File formats: distribution JSON, mechanism dumps, representative CSVs, marginals.

Every number is written as a rational string ``"p/q"`` (or an integer), so
each dump round-trips exactly.  JSON is written with sorted keys and fixed
separators, which makes identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any

from .mechanism import Mechanism, Outcome, SupportSnapper, SymmetricMechanism, TableMechanism
from .model import (UNBOUNDED, BidderFactor, Constraints, DiscreteDistribution, ModelError, Setting,
                    as_fraction)
from .symmetry import RepresentativeSet, SymmetryGroup


def q(x) -> str:
    """Rational to string."""
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def parse_q(s) -> Fraction:
    if isinstance(s, float):
        raise ModelError(f"float {s!r} in an exact field; write it as a string like \"1/10\"")
    return as_fraction(Fraction(s) if isinstance(s, str) else s)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


def _parse_factor(spec) -> BidderFactor:
    if "types" in spec:
        return BidderFactor([(tuple(parse_q(v) for v in t), parse_q(p)) for t, p in spec["types"]])
    if "iid" in spec:
        return BidderFactor.iid({parse_q(v): parse_q(p) for v, p in spec["iid"].items()}, int(spec["n"]))
    if "independent" in spec:
        return BidderFactor.independent([{parse_q(v): parse_q(p) for v, p in m.items()}
                                         for m in spec["independent"]])
    raise ModelError(f"factor needs 'types', 'iid' or 'independent': {spec!r}")


def _bound(x):
    return UNBOUNDED if x is None or x == "inf" else x


def load_problem(source) -> tuple[DiscreteDistribution, Constraints, Setting]:
    """Read a distribution JSON (path, text or dict).

    ``{"setting": "k-items"|"k-bidders", "delta": "1/10", "factors": [...],
    "bidders": m, "demands": [...], "budgets": [...]}``.  A single factor
    with ``"bidders": m`` is repeated for ``m`` i.i.d. bidders.  Missing
    demands and budgets mean unbounded; ``null`` or ``"inf"`` entries too.
    """
    spec = _read(source)
    factors = [_parse_factor(f) for f in spec["factors"]]
    if "bidders" in spec:
        if len(factors) != 1:
            raise ModelError("'bidders' needs exactly one factor")
        factors = factors * int(spec["bidders"])
    delta = parse_q(spec["delta"]) if spec.get("delta") is not None else None
    kw = {}
    if spec.get("max_support") is not None:
        kw["max_support"] = int(spec["max_support"])
    dist = DiscreteDistribution.product(factors, delta=delta, **kw)
    m, n = dist.m, dist.n
    demands = tuple(_bound(d) for d in spec.get("demands", [None] * m))
    budgets = tuple(UNBOUNDED if _bound(b) is UNBOUNDED else parse_q(b)
                    for b in spec.get("budgets", [None] * m))
    cons = Constraints(demands=demands, budgets=budgets)
    setting = Setting(spec.get("setting", "k-bidders"), m, n)
    return dist, cons, setting


def problem_to_json(dist: DiscreteDistribution, cons: Constraints, setting: Setting) -> dict:
    if not dist.is_product:
        raise ModelError("only product distributions have a JSON form")
    return {
        "setting": setting.kind,
        "delta": None if dist.delta is None else q(dist.delta),
        "factors": [{"types": [[[q(v) for v in t], q(p)] for t, p in f.items()]} for f in dist.factors],
        "demands": [None if cons.demand(i) is UNBOUNDED else cons.demand(i) for i in range(dist.m)],
        "budgets": [None if cons.budget(i) is UNBOUNDED else q(cons.budget(i)) for i in range(dist.m)],
    }


def _read(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, (str, Path)) and Path(source).exists():
        return json.loads(Path(source).read_text())
    return json.loads(source)


# --------------------------------------------------------------------------
# mechanisms
# --------------------------------------------------------------------------

CSV_FIELDS = ["class_id", "bidder", "item", "phi", "price"]


def dump_mechanism(M: Mechanism, setting: Setting | None = None, delta=None) -> str:
    """First line ``#`` + JSON header, then CSV ``class_id,bidder,item,phi,price``.

    The header lists the profile behind each ``class_id``.  For a
    representative table the group kind is recorded and only
    representatives are written.
    """
    if isinstance(M, SymmetricMechanism):
        kind, table = M.group.kind, M.table
    elif isinstance(M, TableMechanism):
        kind, table = "table", M.table
    else:
        raise TypeError("only table mechanisms can be dumped; materialize() first")
    profiles = sorted(table)
    header = {
        "format": "symmech-mechanism/1",
        "group": kind,
        "m": M.m, "n": M.n,
        "setting": None if setting is None else setting.kind,
        "delta": None if delta is None else q(delta),
        "classes": [[[q(v) for v in t] for t in prof] for prof in profiles],
    }
    buf = io.StringIO()
    buf.write("#" + json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for cid, prof in enumerate(profiles):
        o = table[prof]
        for i in range(M.m):
            for j in range(M.n):
                w.writerow([cid, i, j, q(o.phi[i][j]), q(o.price[i])])
    return buf.getvalue()


def load_mechanism(source, dist: DiscreteDistribution | None = None) -> tuple[Mechanism, dict]:
    """Inverse of :func:`dump_mechanism`; ``dist`` enables the off-support fallback."""
    text = Path(source).read_text() if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and Path(source).exists()) else source
    first, rest = text.split("\n", 1)
    if not first.startswith("#"):
        raise ModelError("mechanism dump must start with a '#' JSON header line")
    header = json.loads(first[1:])
    m, n = header["m"], header["n"]
    profiles = [tuple(tuple(parse_q(v) for v in t) for t in prof) for prof in header["classes"]]
    phi = {cid: [[None] * n for _ in range(m)] for cid in range(len(profiles))}
    price = {cid: [None] * m for cid in range(len(profiles))}
    reader = csv.DictReader(io.StringIO(rest))
    if reader.fieldnames != CSV_FIELDS:
        raise ModelError(f"expected columns {CSV_FIELDS}, got {reader.fieldnames}")
    for row in reader:
        cid, i, j = int(row["class_id"]), int(row["bidder"]), int(row["item"])
        phi[cid][i][j] = parse_q(row["phi"])
        p = parse_q(row["price"])
        if price[cid][i] is not None and price[cid][i] != p:
            raise ModelError(f"class {cid} bidder {i}: inconsistent prices")
        price[cid][i] = p
    table = {}
    for cid, prof in enumerate(profiles):
        if any(x is None for row in phi[cid] for x in row) or any(x is None for x in price[cid]):
            raise ModelError(f"class {cid} is incomplete")
        table[prof] = Outcome(tuple(tuple(r) for r in phi[cid]), tuple(price[cid]))
    fallback = SupportSnapper(dist) if dist is not None else None
    if header["group"] == "table":
        return TableMechanism(table, m, n, fallback=fallback), header
    group = {"AllBidders": SymmetryGroup.all_bidders, "AllItems": SymmetryGroup.all_items}.get(header["group"])
    if group is None:
        raise ModelError(f"cannot rebuild group {header['group']!r} from a dump")
    return SymmetricMechanism(group(m, n), table, fallback=fallback), header


def dump_representatives(reps: RepresentativeSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_id", "profile", "class_weight", "class_size"])
    for cid, rep in enumerate(reps.representatives):
        prof = json.dumps([[q(v) for v in t] for t in rep], separators=(",", ":"))
        w.writerow([cid, prof, q(reps.class_weight[rep]), reps.class_size[rep]])
    return buf.getvalue()


# --------------------------------------------------------------------------
# continuous marginals
# --------------------------------------------------------------------------


def load_marginal(source):
    """A marginal JSON spec (``{"family": ...}``) or a tabulated ``value,cdf`` CSV path."""
    from .mhr import Tabulated, from_spec
    if isinstance(source, (str, Path)) and str(source).endswith(".csv"):
        rows = []
        with open(source, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        return Tabulated(rows)
    return from_spec(_read(source))
