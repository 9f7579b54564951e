"""Command-line entry point: ``pseudoqpe <subcommand>``."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, costmodel, golden, interpolation, lambdas, nested_boxes, system
from .errors import GoldenMismatch, InputError, PseudoQPEError
from .lattice import MillerGrid, reciprocal_geometry
from .pseudopotential import (DATASET_VERSION, format_gth, get_species, load_species_table,
                              parse_gth_text)


# ---------------------------------------------------------------- output helpers

def _num(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_json(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def dump_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue()


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


def _flatten(doc, prefix=""):
    if isinstance(doc, dict):
        for k in sorted(doc):
            yield from _flatten(doc[k], f"{prefix}{k}.")
    elif isinstance(doc, (list, tuple)) and not all(isinstance(v, (int, float)) for v in doc):
        for k, v in enumerate(doc):
            yield from _flatten(v, f"{prefix}{k}.")
    else:
        yield prefix[:-1], doc


def _emit_doc(doc, fmt: str, output: str | None):
    if fmt == "json":
        _emit(dump_json(doc), output)
    else:
        rows = [(k, " ".join(map(str, map(_num, v))) if isinstance(v, (list, tuple)) else v)
                for k, v in _flatten(_jsonable(doc))]
        _emit(dump_csv(["key", "value"], rows), output)


# ---------------------------------------------------------------- shared options

def _parse_counts(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        try:
            k, v = part.split("=")
            out[k.strip()] = int(v)
        except ValueError:
            raise InputError(f"atom list must look like 'C=1,O=1', got {text!r}") from None
    return out


def cell_options(f):
    opts = [
        click.option("--cell", "cell", help="Bundled cell name or path to a cell TOML file."),
        click.option("--bits", help="Grid bits per axis, e.g. 6,6,7 (default: the cell's first grid)."),
        click.option("--b", "b", type=int, default=costmodel.DEFAULT_B, show_default=True,
                     help="Bits for coherent arithmetic."),
        click.option("--b-r", "b_r", type=int, default=costmodel.DEFAULT_B_R, show_default=True,
                     help="Bits for rotation angles."),
        click.option("--interp", default=costmodel.DEFAULT_INTERP, show_default=True,
                     help="Exponential lookup as order:panels."),
        click.option("--add-atoms", help="Extra nuclei such as an adsorbate, e.g. C=1,O=1."),
        click.option("--potentials", type=click.Path(), help="GTH file overriding bundled species."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _load(cell, bits, b, b_r, interp, add_atoms, potentials):
    if not cell:
        raise InputError("--cell is required")
    table = load_species_table(potentials)
    bits = system.parse_bits(bits) if bits else None
    extra = _parse_counts(add_atoms)
    if Path(cell).suffix == ".toml" or Path(cell).exists():
        spec = system.from_file(cell, table, bits, b, b_r, interp)
        if extra:
            counts = dict(spec.counts)
            for k, v in extra.items():
                counts[k] = counts.get(k, 0) + v
            spec = system.SystemSpec(spec.name, spec.cell, counts,
                                     spec.eta + system.valence_electrons(extra, table), spec.bits,
                                     spec.deltas, b, b_r, interp, spec.arith_case, spec.title)
    else:
        spec = system.from_bundled(cell, bits, b, b_r, interp, extra,
                                   system.valence_electrons(extra, table) if extra else 0)
    for label in spec.counts:
        get_species(label, table)
    return spec, table


def _provenance(**flags):
    return {"dataset": DATASET_VERSION, "version": __version__, "flags": flags}


def _cost(spec, table) -> costmodel.CostReport:
    feats = costmodel.species_features(spec.counts, table)
    return costmodel.block_encoding_total(feats, spec.eta, spec.bits, spec.deltas, spec.case(),
                                          spec.b, spec.b_r, spec.interp)


def _lambda_report(spec, table, loc_variant, nonloc_variant, strategy, with_interp=False, box_outer="G_d"):
    geom = spec.geometry()
    approx = None
    if with_interp:
        tab = interpolation.build_table(*interpolation.parse_interp_spec(spec.interp))
        approx = lambda z: interpolation.evaluate(tab, z)
    return lambdas.lambda_report(spec.counts, table, spec.eta, geom, spec.grid, spec.deltas,
                                 loc_variant, nonloc_variant, strategy, approx, box_outer)


def _lambda_doc(rep: lambdas.LambdaReport) -> dict:
    return {"lambda_t": rep.lambda_t, "lambda_v": rep.lambda_v, "lambda_loc": rep.lambda_loc,
            "lambda_nonloc": rep.lambda_nonloc, "total": rep.total,
            "variants": {"loc": rep.loc_variant, "nonloc": rep.nonloc_variant, "strategy": rep.strategy},
            "per_species": {"loc": rep.loc_per_species, "nonloc": rep.nonloc_per_species},
            "interp_error": rep.interp_error}


def _ledger_rows(rep: costmodel.CostReport):
    return [(e.step, e.label, e.toffolis, e.note) for e in rep.entries]


def _geometry_doc(spec) -> dict:
    geom = spec.geometry()
    return {"volume": geom.volume, "reciprocal_vectors": geom.vectors, "gramian": geom.gramian,
            "arith_case": spec.case()}


def _boxes_doc(spec) -> dict:
    geom = spec.geometry()
    scheme = nested_boxes.build_scheme(spec.grid, spec.deltas)
    w = nested_boxes.shell_prep_weights(scheme, nested_boxes.inverse_square_weight(geom))
    return {"deltas": list(spec.deltas), "mu_max": scheme.mu_max,
            "success_probability": w.success_probability}


VARIANT_MAP = {"sum": ("sum", "sum"), "integral": ("integral", "integral"), "box": ("sum", "box"),
               "pointwise": ("sum", "pointwise")}


# ---------------------------------------------------------------- commands

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def main():
    """Lambda values and Toffoli costs for pseudopotential block encodings."""


@main.command()
@cell_options
@click.option("--epsilon", type=float, default=costmodel.DEFAULT_EPSILON, show_default=True)
@click.option("--variant", type=click.Choice(sorted(VARIANT_MAP)), default="box", show_default=True)
@click.option("--strategy", type=click.Choice(lambdas.STRATEGIES), default="decimated", show_default=True)
@click.option("--box-outer", type=click.Choice(lambdas.BOX_OUTER_DOMAINS), default="G_d", show_default=True,
              help="Where box-variant shell sizes are counted.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--output", "-o", type=click.Path())
def estimate(cell, bits, b, b_r, interp, add_atoms, potentials, epsilon, variant, strategy, box_outer, fmt,
             output):
    """Full report: geometry, boxes, lambda, block-encoding and QPE cost."""
    spec, table = _load(cell, bits, b, b_r, interp, add_atoms, potentials)
    loc_v, nl_v = VARIANT_MAP[variant]
    click.echo(f"computing lambda ({nl_v}) on grid {spec.bits}", err=True)
    lam = _lambda_report(spec, table, loc_v, nl_v, strategy, box_outer=box_outer)
    cost = costmodel.with_qpe(_cost(spec, table), lam.total, epsilon)
    doc = {"system": {"name": spec.name, "title": spec.title, "eta": spec.eta, "counts": spec.counts,
                      "bits": list(spec.bits), "b": spec.b, "b_r": spec.b_r, "interp": spec.interp},
           "geometry": _geometry_doc(spec), "boxes": _boxes_doc(spec), "lambda": _lambda_doc(lam),
           "cost": {"c_be": cost.c_be, "qpe_iterations": cost.iterations, "qpe_toffolis": cost.qpe_toffolis,
                    "epsilon": epsilon, "ledger": [dict(zip(("step", "label", "toffolis", "note"), r))
                                                   for r in _ledger_rows(cost)]},
           "provenance": _provenance(variant=variant, strategy=strategy, box_outer=box_outer)}
    _emit_doc(doc, fmt, output)


@main.command("lambda")
@cell_options
@click.option("--variant", type=click.Choice(sorted(VARIANT_MAP)), default="box", show_default=True)
@click.option("--strategy", type=click.Choice(lambdas.STRATEGIES), default="decimated", show_default=True)
@click.option("--box-outer", type=click.Choice(lambdas.BOX_OUTER_DOMAINS), default="G_d", show_default=True,
              help="Where box-variant shell sizes are counted.")
@click.option("--per-species", is_flag=True, help="Add per-nucleus values.")
@click.option("--with-interp-error", is_flag=True, help="Add the interpolation-error contribution.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--output", "-o", type=click.Path())
def lambda_cmd(cell, bits, b, b_r, interp, add_atoms, potentials, variant, strategy, box_outer, per_species,
               with_interp_error, fmt, output):
    """Lambda components for one system."""
    spec, table = _load(cell, bits, b, b_r, interp, add_atoms, potentials)
    loc_v, nl_v = VARIANT_MAP[variant]
    rep = _lambda_report(spec, table, loc_v, nl_v, strategy, with_interp_error, box_outer)
    doc = _lambda_doc(rep)
    if not per_species:
        doc.pop("per_species")
    if not with_interp_error:
        doc.pop("interp_error")
    doc["provenance"] = _provenance(variant=variant, strategy=strategy, box_outer=box_outer,
                                    bits=list(spec.bits))
    _emit_doc(doc, fmt, output)


@main.command()
@cell_options
@click.option("--ledger", is_flag=True, help="Print the itemized ledger as CSV.")
@click.option("--output", "-o", type=click.Path())
def cost(cell, bits, b, b_r, interp, add_atoms, potentials, ledger, output):
    """Toffoli cost of one block encoding."""
    spec, table = _load(cell, bits, b, b_r, interp, add_atoms, potentials)
    rep = _cost(spec, table)
    if ledger:
        rows = _ledger_rows(rep) + [("total", "block encoding", rep.c_be, "")]
        _emit(dump_csv(["step", "item", "toffolis", "note"], rows), output)
    else:
        _emit(f"{rep.c_be}\n", output)


@main.command()
@cell_options
@click.option("--lambda-total", "lam", type=float, help="Use this lambda instead of computing it.")
@click.option("--variant", type=click.Choice(sorted(VARIANT_MAP)), default="box", show_default=True)
@click.option("--strategy", type=click.Choice(lambdas.STRATEGIES), default="decimated", show_default=True)
@click.option("--box-outer", type=click.Choice(lambdas.BOX_OUTER_DOMAINS), default="G_d", show_default=True,
              help="Where box-variant shell sizes are counted.")
@click.option("--epsilon", type=float, default=costmodel.DEFAULT_EPSILON, show_default=True)
@click.option("--ledger", is_flag=True, help="Print the itemized ledger as CSV.")
@click.option("--output", "-o", type=click.Path())
def qpe(cell, bits, b, b_r, interp, add_atoms, potentials, lam, variant, strategy, box_outer, epsilon, ledger,
        output):
    """Toffoli cost of phase estimation to precision epsilon."""
    spec, table = _load(cell, bits, b, b_r, interp, add_atoms, potentials)
    if lam is None:
        loc_v, nl_v = VARIANT_MAP[variant]
        lam = _lambda_report(spec, table, loc_v, nl_v, strategy, box_outer=box_outer).total
    rep = costmodel.with_qpe(_cost(spec, table), lam, epsilon)
    if ledger:
        rows = _ledger_rows(rep) + [("total", "block encoding", rep.c_be, ""),
                                    ("qpe", "iterations", rep.iterations, f"lambda={lam:.17g}"),
                                    ("qpe", "toffolis", rep.qpe_toffolis, f"epsilon={epsilon:.17g}")]
        _emit(dump_csv(["step", "item", "toffolis", "note"], rows), output)
    else:
        _emit(dump_csv(["lambda", "epsilon", "c_be", "iterations", "qpe_toffolis"],
                       [(float(lam), float(epsilon), rep.c_be, rep.iterations, rep.qpe_toffolis)]), output)


@main.command()
@cell_options
@click.option("--deltas", help="Override the shifts, e.g. 1,1,0.")
@click.option("--optimize", "max_delta", type=int, help="Search shifts up to this value.")
@click.option("--variant", type=click.Choice(["shell", "nested"]), default="shell", show_default=True)
@click.option("--output", "-o", type=click.Path())
def boxes(cell, bits, b, b_r, interp, add_atoms, potentials, deltas, max_delta, variant, output):
    """Nested-box sizes, amplitudes and success probability for the 1/|k| state."""
    spec, _ = _load(cell, bits, b, b_r, interp, add_atoms, potentials)
    geom = spec.geometry()
    d = system._triple(deltas.split(","), "deltas") if deltas else spec.deltas
    if max_delta is not None:
        d, _ = nested_boxes.optimize_deltas(spec.grid, geom, max_delta, variant)
    scheme = nested_boxes.build_scheme(spec.grid, d)
    u = nested_boxes.inverse_square_weight(geom)
    w = (nested_boxes.shell_prep_weights if variant == "shell" else nested_boxes.prep_weights)(scheme, u)
    rows = []
    for k, mu in enumerate(range(scheme.mu_min, scheme.mu_max + 1)):
        size, strings = nested_boxes.box_sizes(scheme, mu)
        rows.append((mu, size, strings, float(w.psi_tilde_sq[k]), float(w.psi[k])))
    text = dump_csv(["mu", "box_size", "bitstrings", "psi_tilde_sq", "psi"], rows)
    text += f"# deltas={','.join(map(str, d))} success_probability={w.success_probability:.17g}\n"
    _emit(text, output)


@main.command("interp-error")
@click.option("--interp", default="linear:256", show_default=True)
@click.option("--samples", type=int, default=2 ** 21, show_default=True)
@click.option("--b", "b", type=int, default=costmodel.DEFAULT_B, show_default=True)
@click.option("--cell", help="Also report the per-nucleus lambda-style error sum on this cell.")
@click.option("--bits", help="Grid bits for --cell.")
def interp_error(interp, samples, b, cell, bits):
    """Measured and analytic error of the exponential lookup table."""
    order, panels = interpolation.parse_interp_spec(interp)
    tab = interpolation.build_table(order, panels)
    rows = [("measured_max_rel_error", interpolation.measured_error(tab, samples)),
            ("leading_order_bound", interpolation.analytic_bound(tab, rigorous=False)),
            ("rigorous_bound", interpolation.analytic_bound(tab, rigorous=True)),
            ("toffolis", interpolation.interp_toffoli_cost(order, panels, b))]
    if cell:
        spec, table = _load(cell, bits, max(b, 9), costmodel.DEFAULT_B_R, interp, None, None)
        geom = spec.geometry()
        for label in sorted(spec.counts):
            val = lambdas.interp_error_lambda(table[label], geom, spec.grid,
                                              lambda z: interpolation.evaluate(tab, z))
            rows.append((f"lambda_error/{label}", val))
    click.echo(dump_csv(["quantity", "value"], rows), nl=False)


@main.group()
def gth():
    """Inspect GTH pseudopotential parameters."""


@gth.command("show")
@click.argument("label")
@click.option("--potentials", type=click.Path())
def gth_show(label, potentials):
    """Print the bundled block for a species."""
    click.echo(format_gth(get_species(label, load_species_table(potentials))), nl=False)


@gth.command("parse")
@click.argument("path", type=click.Path())
def gth_parse(path):
    """Parse a one-species GTH file and print it normalised."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"file not found: {p}")
    sp = parse_gth_text(p.read_text())
    click.echo(format_gth(sp), nl=False)
    click.echo(f"# Z={sp.z_ion} l_max={sp.l_max} terms={sp.term_count()}", err=True)


# ---------------------------------------------------------------- golden comparison

def _golden_actuals(name: str, cells: tuple[str, ...], strategy: str) -> dict[str, float]:
    tab = golden.golden_table(name)
    table = load_species_table()
    want = lambda c: not cells or c in cells
    out: dict[str, float] = {}
    if name == "lambda_loc_integral":
        for sp in tab["rows"]:
            if want(sp):
                out[f"{sp}/unseparated"] = lambdas.lambda_loc_unseparated(table[sp])
                out[f"{sp}/separated"] = lambdas.lambda_loc_integral(table[sp])
    elif name == "lambda_nonloc_integral":
        for sp in tab["rows"]:
            if want(sp):
                out[sp] = lambdas.lambda_nonloc_integral(table[sp])
    elif name == "success_probability":
        for c, row in tab["rows"].items():
            if not want(c):
                continue
            spec = system.from_bundled(c, (5, 5, 5))
            geom = spec.geometry()
            for n in row["p"]:
                grid = MillerGrid((int(n),) * 3)
                scheme = nested_boxes.build_scheme(grid, row["deltas"])
                out[f"{c}/{n}"] = nested_boxes.success_probability(
                    scheme, nested_boxes.inverse_square_weight(geom))
    elif name in ("lambda_loc_sum", "interp_error", "lambda_nonloc_pointwise", "lambda_nonloc_box"):
        n = tab["bits"]
        for c, row in tab["rows"].items():
            if not want(c):
                continue
            spec = system.from_bundled(c, (n, n, n))
            geom = spec.geometry()
            for sp in row:
                s = table[sp]
                if name == "lambda_loc_sum":
                    v = lambdas.lambda_loc_sum(s, geom, spec.grid)
                elif name == "interp_error":
                    it = interpolation.build_table(*interpolation.parse_interp_spec(tab["interp"]))
                    v = lambdas.interp_error_lambda(s, geom, spec.grid,
                                                    lambda z: interpolation.evaluate(it, z)) / tab["scale"]
                elif name == "lambda_nonloc_pointwise":
                    v = lambdas.lambda_nonloc_pointwise(s, geom, spec.grid, strategy)
                else:
                    v = lambdas.lambda_nonloc_box(s, geom, spec.grid, spec.deltas, strategy)
                out[f"{c}/{sp}"] = v
    elif name == "block_encoding":
        adsorbate = golden.load_golden()["lambda_qpe"]["adsorbate"]
        for r in tab["rows"]:
            if not want(r["cell"]):
                continue
            extra = {"C": adsorbate["C"], "O": adsorbate["O"]} if r["adsorbate"] else {}
            spec = system.from_bundled(r["cell"], r["bits"], tab["b"], interp=tab["interp"],
                                       extra_counts=extra, extra_eta=adsorbate["eta"] if extra else 0)
            key = f"{r['cell']}/{''.join(map(str, r['bits']))}" + ("/CO" if extra else "")
            out[f"{key}/c_be"] = _cost(spec, table).c_be
    elif name == "lambda_qpe":
        raise InputError("lambda_qpe needs full nonlocal sums; compare it with --report")
    return out


@main.command("compare-golden")
@click.argument("table_name", type=click.Choice(golden.TABLES))
@click.option("--cell", "cells", multiple=True, help="Restrict to these rows (repeatable).")
@click.option("--report", type=click.Path(), help="JSON mapping of cell keys to values to compare instead.")
@click.option("--strategy", type=click.Choice(lambdas.STRATEGIES), default="decimated", show_default=True)
def compare_golden(table_name, cells, report, strategy):
    """Diff computed values against a bundled reference table."""
    tab = golden.golden_table(table_name)
    if report:
        p = Path(report)
        if not p.exists():
            raise InputError(f"report not found: {p}")
        try:
            actual = {k: float(v) for k, v in json.loads(p.read_text()).items()}
        except (ValueError, AttributeError) as exc:
            raise InputError(f"{p}: expected a JSON object of numbers") from exc
    else:
        actual = _golden_actuals(table_name, cells, strategy)
    diffs = golden.compare(golden.flatten(tab), actual, tab["tolerance"])
    rows = [(d.key, d.expected, d.actual, d.error, d.tolerance, "pass" if d.ok else "FAIL") for d in diffs]
    click.echo(dump_csv(["cell", "expected", "actual", "error", "tolerance", "status"], rows), nl=False)
    bad = [d.key for d in diffs if not d.ok]
    if bad:
        raise GoldenMismatch(f"{len(bad)} cell(s) outside tolerance: {', '.join(bad)}")


def run(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
    except PseudoQPEError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 1
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
