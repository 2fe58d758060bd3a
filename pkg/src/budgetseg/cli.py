"""Command-line entry point: ``budgetseg <cost|search|kernels|upsample|validate>``.

Exit status: 0 success, 1 input or structural error, 2 no feasible
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import Field

from .architecture import (
    BlockEntry,
    BlockSpecs,
    InputShape,
    ModelConfig,
    SchemaError,
    _Strict,
    build_model,
    expand_entries,
    load_block_specs,
    load_json_model,
    make_cost_fn,
)
from .bilinear import (
    bilinear_upsample_reference,
    create_bilinear_kernels,
    interior_slice,
    kernels_to_csv,
    upsample_with_bank,
)
from .cost_model import CostReport, StructureError, format_report, network_cost
from .optimizer import DEFAULT_SEED, NumericalError, SearchGrid, bayesian_search, exhaustive_search
from .oracle import engine_macs
from .scenario import BUILTIN_BLOCK_SPECS, ScenarioSpec, load_scenario, resolve
from .tensor_core import read_tensor_csv, tensor_to_csv

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3
CHECK_TOLERANCE = 1e-10


class LayerListConfig(_Strict):
    """A raw layer list, optionally swept over width multipliers."""

    input: InputShape
    layers: list[BlockEntry] = Field(default_factory=list)
    width_multipliers: list[float] = Field(default_factory=lambda: [1.0])


def load_cost_config(path: str | Path) -> ModelConfig | LayerListConfig:
    path = resolve(path, "configs")
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror or exc}") from exc
    model_cls = LayerListConfig if isinstance(raw, dict) and "layers" in raw else ModelConfig
    return load_json_model(model_cls, path)


def _dump_json(obj, out: str | None) -> None:
    if out:
        Path(out).write_text(json.dumps(obj, indent=2) + "\n")


def _load_specs(paths: list[str] | None) -> dict[str, BlockSpecs]:
    specs = [load_block_specs(resolve(p, "block_specs")) for p in (paths or BUILTIN_BLOCK_SPECS)]
    return {s.id: s for s in specs}


def _verify(layers, h: int, w: int, report: CostReport) -> bool:
    counts = engine_macs(layers, h, w)
    ok = True
    for cost, measured in zip(report.per_layer, counts):
        if cost.macs != measured:
            print(f"verify: layer {cost.index} analytic {cost.macs} != engine {measured}", file=sys.stderr)
            ok = False
    print(f"verify: engine total {sum(counts):,} MACs ({'match' if ok else 'MISMATCH'})")
    return ok


def cmd_cost(args) -> int:
    cfg = load_cost_config(args.config)
    if isinstance(cfg, ModelConfig):
        specs = _load_specs(args.block_specs)
        if cfg.block_specs_id not in specs:
            raise SchemaError(f"block specs {cfg.block_specs_id!r} not loaded")
        model = build_model(specs[cfg.block_specs_id], cfg)
        report = model.cost()
        print(format_report(report, model.layers))
        _dump_json(report.to_dict(), args.out)
        if args.verify and not _verify(model.layers, model.input_h, model.input_w, report):
            return EXIT_INPUT
        return EXIT_OK

    rows = []
    ok = True
    for m in cfg.width_multipliers:
        layers = expand_entries(cfg.layers, cfg.input.c, m)
        report = network_cost(layers, cfg.input.h, cfg.input.w)
        rows.append((m, layers, report))
        if args.verify:
            ok &= _verify(layers, cfg.input.h, cfg.input.w, report)
    if len(rows) == 1:
        print(format_report(rows[0][2], rows[0][1]))
        _dump_json(rows[0][2].to_dict(), args.out)
    else:
        width = max(len(f"{m:g}") for m, _, _ in rows)
        print("width_multiplier".ljust(max(width, 16)), "total MACs")
        for m, _, report in rows:
            print(f"{m:g}".ljust(max(width, 16)), f"{report.total_macs:,}")
        _dump_json({"sweep": [{"width_multiplier": m, **r.to_dict()} for m, _, r in rows]}, args.out)
    return EXIT_OK if ok else EXIT_INPUT


def format_search(result, scenario: ScenarioSpec) -> str:
    lines = [f"scenario {scenario.name}: {scenario.images_per_second} images/s, "
             f"budget {scenario.budget_gops:g} GOPS, {len(result.trace)} evaluations"]
    if result.best is None:
        lines.append("no feasible configuration")
        return "\n".join(lines)
    b = result.best
    lines += [
        f"  width_multiplier   {b.width_multiplier:g}",
        f"  classifier_depth   {b.classifier_depth}",
        f"  classifier_kernel  {b.classifier_kernel}",
        f"  block_specs        {b.block_specs_id}",
        f"  gigaops/s          {result.gigaops:.2f}",
        f"  utilization        {100 * result.utilization:.2f}%",
    ]
    return "\n".join(lines)


def cmd_search(args) -> int:
    scenario = load_scenario(args.scenario)
    specs = _load_specs(args.block_specs)
    grid = SearchGrid(scenario.num_classes, tuple(specs))
    cost_fn = make_cost_fn(specs, (scenario.input_h, scenario.input_w))
    if args.method == "exhaustive":
        result = exhaustive_search(scenario, grid, cost_fn)
    else:
        result = bayesian_search(scenario, grid, cost_fn, seed=args.seed, max_iterations=args.max_iters)
    print(format_search(result, scenario))
    _dump_json(result.to_dict(), args.out)
    return EXIT_OK if result.best is not None else EXIT_INFEASIBLE


def _bank_mode(mode: str) -> str:
    return "full_paper" if mode == "full" else mode


def cmd_kernels(args) -> int:
    bank = create_bilinear_kernels(args.classes, (args.size, args.size), _bank_mode(args.mode))
    text = kernels_to_csv(bank)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_upsample(args) -> int:
    if args.factor < 2 or args.factor % 2:
        raise ValueError(f"--factor must be even and >= 2, got {args.factor}")
    x = read_tensor_csv(args.input)
    mode = _bank_mode(args.mode)
    y = upsample_with_bank(x, args.factor, mode)
    if args.out:
        Path(args.out).write_text(tensor_to_csv(y))
    if args.check:
        ref = bilinear_upsample_reference(x, args.factor).data
        if mode == "full_paper":
            # every output class receives the sum over input classes
            ref = np.repeat(ref.sum(axis=2, keepdims=True), x.channels, axis=2)
        rows, cols = interior_slice(x.height, args.factor), interior_slice(x.width, args.factor)
        dev = float(np.max(np.abs(y.data[rows, cols] - ref[rows, cols])))
        print(f"max abs deviation (interior): {dev:.3e}")
        if dev > CHECK_TOLERANCE:
            return EXIT_NUMERICAL
    elif not args.out:
        sys.stdout.write(tensor_to_csv(y))
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for f in args.files:
        try:
            raw = json.loads(Path(f).read_text())
            if isinstance(raw, dict) and "budget_gops" in raw:
                kind = "scenario"
                load_scenario(f)
            elif isinstance(raw, dict) and "cumulative_stride" in raw:
                kind = "block specs"
                load_block_specs(f)
            else:
                kind = "cost config"
                load_cost_config(f)
            print(f"{f}: ok ({kind})")
        except json.JSONDecodeError as exc:
            print(f"{f}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
            status = EXIT_INPUT
        except (SchemaError, OSError) as exc:
            print(str(exc), file=sys.stderr)
            status = EXIT_INPUT
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="budgetseg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cost", help="MAC/ops report for a model config or layer list")
    c.add_argument("config", help="model config or layer-list JSON (or builtin name, e.g. dsp_sweep)")
    c.add_argument("--block-specs", nargs="+", metavar="PATH")
    c.add_argument("--verify", action="store_true", help="cross-check against the reference engine")
    c.add_argument("--out", help="write the CostReport JSON here")
    c.set_defaults(func=cmd_cost)

    s = sub.add_parser("search", help="find the configuration closest to the scenario budget")
    s.add_argument("scenario", help="scenario JSON (or builtin name: parking, urban, rural)")
    s.add_argument("--block-specs", nargs="+", metavar="PATH")
    s.add_argument("--method", choices=("bo", "exhaustive"), default="bo")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--max-iters", type=int, default=None)
    s.add_argument("--out", help="write the SearchResult JSON here")
    s.set_defaults(func=cmd_search)

    k = sub.add_parser("kernels", help="dump a bilinear kernel bank as CSV")
    k.add_argument("--classes", type=int, default=1)
    k.add_argument("--size", type=int, default=64)
    k.add_argument("--mode", choices=("full", "diagonal"), default="full")
    k.add_argument("--out")
    k.set_defaults(func=cmd_kernels)

    u = sub.add_parser("upsample", help="bilinear transposed-convolution upsampling of a CSV tensor")
    u.add_argument("input")
    u.add_argument("--factor", type=int, required=True)
    u.add_argument("--mode", choices=("full", "diagonal"), default="diagonal")
    u.add_argument("--check", action="store_true", help="compare with the direct interpolation oracle")
    u.add_argument("--out")
    u.set_defaults(func=cmd_upsample)

    v = sub.add_parser("validate", help="schema-check scenario, block-spec and config files")
    v.add_argument("files", nargs="+")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SchemaError, StructureError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
