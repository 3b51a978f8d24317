"""Command-line entry point: ``parity-audit <command> [options]``.

Exit codes: 0 success (parity holds, for ``audit``), 2 parity violated,
1 any error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .dataset import (
    SynthConfig,
    load_csv,
    load_schema,
    oversample,
    partition,
    resolve_binning,
    split,
    synth_gen,
    write_csv,
)
from .errors import ParityAuditError, UsageError
from .experiments import DEFAULT_K, DEFAULT_TEST_FRACTION, ablation_grid, compare_methods, derive_seed
from .fairness import GROUPS_ONLY, INCLUDE_OVERALL, boundary, fairness_threshold, parity_check
from .metrics import METRICS, evaluate, youden_threshold
from .models import ALGORITHMS, ModelConfig, predict, save_model, train
from .models.importance import DEFAULT_TAU
from .report import (
    boundary_records,
    boundary_svg,
    compare_records,
    grid_records,
    read_json,
    render_audit_md,
    render_compare_md,
    render_grid_md,
    write_json,
    write_records,
)

logger = logging.getLogger("parity_audit")

SEED_ENV = "PARITY_AUDIT_SEED"
FORMATS = ("csv", "json", "md", "svg")
EXIT_OK, EXIT_ERROR, EXIT_PARITY_FAIL = 0, 1, 2
MODE_FLAGS = {"groups": GROUPS_ONLY, "overall": INCLUDE_OVERALL}


@dataclass
class RunConfig:
    data: str | None = None
    schema: str | None = None
    protected: str | None = None
    algo: str = "logreg"
    metric: str = "precision"
    xi: float = 0.05
    k: int = DEFAULT_K
    tau: float = DEFAULT_TAU
    sample: str = "off"
    mode: str = GROUPS_ONLY
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION
    out: str = "parity_audit_out"
    formats: tuple[str, ...] = FORMATS
    save_model: str | None = None
    synth: dict = field(default_factory=dict)

    def validate(self, needs_data: bool = True):
        if needs_data:
            for name in ("data", "schema"):
                path = getattr(self, name)
                if not path:
                    raise UsageError(f"--{name} is required")
                if not Path(path).exists():
                    raise UsageError(f"--{name}: no such file: {path}")
        if not self.xi > 0:
            raise UsageError("--xi must be positive")
        if self.k < 1:
            raise UsageError("--k must be >= 1")
        if not 0 <= self.tau <= 1:
            raise UsageError("--tau must lie in [0, 1]")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise UsageError(f"unknown output format(s): {', '.join(bad)}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["formats"] = list(self.formats)
        return d


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as a parity failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, algo_default: str, sample_default: str):
    p.add_argument("--data", help="CSV data file")
    p.add_argument("--schema", help="JSON schema file")
    p.add_argument("--protected", help="protected feature (default: first declared in the schema)")
    p.add_argument("--algo", choices=(*ALGORITHMS, "all"), default=algo_default)
    p.add_argument("--metric", choices=METRICS, default="precision")
    p.add_argument("--xi", type=float, default=0.05, help="parity tolerance")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="top-k important features considered as proxies")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="minimum association for a proxy")
    p.add_argument("--sample", choices=("on", "off", "both"), default=sample_default)
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="groups")
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--out", default="parity_audit_out", help="output directory")
    p.add_argument("--format", default=",".join(FORMATS), help="comma separated subset of csv,json,md,svg")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parity-audit", description="Classification-parity audits for binary classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="parity verdict, boundary table and fairness threshold for one model")
    _common(p, "logreg", "off")
    p.add_argument("--save-model", help="write the trained model as JSON")
    p = sub.add_parser("thresholds", help="candidate thresholds, boundary table and chart")
    _common(p, "logreg", "off")
    p = sub.add_parser("ablate", help="feature-ablation x sampling x algorithm grid")
    _common(p, "all", "both")
    p = sub.add_parser("compare", help="AUC and AUC variance per algorithm")
    _common(p, "all", "both")

    p = sub.add_parser("synth", help="generate a synthetic biased dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--proportions", default="A=0.5,B=0.5")
    p.add_argument("--base-rates", default="A=0.5,B=0.5")
    p.add_argument("--informative", type=int, default=3)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--leakage", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="parity_audit_out")

    p = sub.add_parser("report", help="re-render report.md from saved JSON results")
    p.add_argument("--out", default="parity_audit_out", help="directory holding saved results")
    return parser


def _resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} is not an integer: {env!r}") from None
    return 0


def _parse_rates(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"expected NAME=VALUE, got {part!r}")
        out[name.strip()] = float(value)
    return out


def config_from_args(args) -> RunConfig:
    if args.command == "synth":
        return RunConfig(
            seed=_resolve_seed(args.seed),
            out=args.out,
            synth={
                "n": args.n,
                "proportions": _parse_rates(args.proportions),
                "base_rates": _parse_rates(args.base_rates),
                "n_informative": args.informative,
                "separation": args.separation,
                "leakage": args.leakage,
                "noise": args.noise,
            },
        )
    return RunConfig(
        data=args.data,
        schema=args.schema,
        protected=args.protected,
        algo=args.algo,
        metric=args.metric,
        xi=args.xi,
        k=args.k,
        tau=args.tau,
        sample=args.sample,
        mode=MODE_FLAGS[args.mode],
        seed=_resolve_seed(args.seed),
        test_fraction=args.test_fraction,
        out=args.out,
        formats=tuple(f.strip() for f in args.format.split(",") if f.strip()),
        save_model=getattr(args, "save_model", None),
    )


def _load(cfg: RunConfig):
    schema = load_schema(cfg.schema)
    data = load_csv(cfg.data, schema)
    if "empty" in data.flags:
        raise UsageError(f"{cfg.data}: no data rows")
    protected = cfg.protected or (schema.protected_names[0] if schema.protected else None)
    if protected is None:
        raise UsageError("schema declares no protected feature; pass --protected")
    schema.protected_spec(protected)
    return data, protected


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _audit_core(cfg: RunConfig):
    if cfg.algo == "all":
        raise UsageError("audit/thresholds take a single --algo")
    if cfg.sample == "both":
        raise UsageError("audit/thresholds take --sample on or off")
    data, protected = _load(cfg)
    binning = resolve_binning(data.schema, protected)
    train_set, test_set = split(data, cfg.test_fraction, cfg.seed)
    if cfg.sample == "on":
        train_set = oversample(
            train_set, partition(train_set, protected, allow_empty=True), derive_seed(cfg.seed, "oversample")
        )
    model = train(train_set, ModelConfig(cfg.algo, seed=derive_seed(cfg.seed, "audit", cfg.algo)))
    if cfg.save_model:
        save_model(model, cfg.save_model)
    scores = predict(model, test_set)
    part = partition(test_set, protected, allow_empty=True)
    threshold, j = youden_threshold(scores)
    overall = evaluate(scores, threshold)
    groups = {g: evaluate(scores.subset(idx), threshold) for g, idx in part}
    verdict = parity_check({g: mv.get(cfg.metric) for g, mv in groups.items()}, cfg.xi, cfg.metric)
    metrics = tuple(dict.fromkeys(("precision", "recall", "f1", cfg.metric)))
    table = boundary(scores, part, metrics)
    choice = fairness_threshold(table, cfg.metric, cfg.mode)
    other_mode = INCLUDE_OVERALL if cfg.mode == GROUPS_ONLY else GROUPS_ONLY
    other = fairness_threshold(table, cfg.metric, other_mode)

    config = cfg.to_json()
    config["protected"] = protected
    config["binning"] = None if binning is None else binning.to_json()
    config["model"] = model.config.to_json()
    choice_doc = {
        "kind": "audit",
        "config": config,
        "candidates": table.candidates.to_json(),
        "boundary": table.to_json(),
        "choice": choice.to_json(),
        "choice_other_mode": other.to_json(),
    }
    parity_doc = {
        "kind": "parity",
        "config": config,
        "threshold": threshold,
        "youden_j": j,
        "overall": overall.to_json(),
        "groups": {g: mv.to_json() for g, mv in groups.items()},
        "sizes": {"overall": len(test_set), **part.sizes()},
        "train_sizes": partition(train_set, protected, allow_empty=True).sizes(),
        "verdict": verdict.to_json(),
    }
    return choice_doc, parity_doc, verdict


def _write_audit(cfg: RunConfig, choice_doc, parity_doc, out: Path):
    table = choice_doc["boundary"]
    if "csv" in cfg.formats:
        write_records(out / "boundary.csv", boundary_records(table))
    if "json" in cfg.formats:
        write_json(out / "fairness_choice.json", choice_doc)
        write_json(out / "parity.json", parity_doc)
    if "svg" in cfg.formats:
        # the chart is always backed by its data
        if "csv" not in cfg.formats:
            write_records(out / "boundary.csv", boundary_records(table))
        (out / "boundary.svg").write_text(boundary_svg(table, choice_doc["choice"]), encoding="utf-8")
    if "md" in cfg.formats:
        (out / "report.md").write_text(render_audit_md(choice_doc, parity_doc), encoding="utf-8")


def cmd_audit(cfg: RunConfig) -> int:
    cfg.validate()
    choice_doc, parity_doc, verdict = _audit_core(cfg)
    out = _outdir(cfg)
    _write_audit(cfg, choice_doc, parity_doc, out)
    print(
        f"parity on {verdict.metric} at xi={verdict.xi:g}: {'pass' if verdict.passed else 'FAIL'}; "
        f"fairness threshold: {choice_doc['choice']['candidate']} ({choice_doc['choice']['threshold']:.4f}); "
        f"reports in {out}"
    )
    return EXIT_OK if verdict.passed else EXIT_PARITY_FAIL


def cmd_thresholds(cfg: RunConfig) -> int:
    cfg.validate()
    choice_doc, parity_doc, _ = _audit_core(cfg)
    out = _outdir(cfg)
    _write_audit(cfg, choice_doc, parity_doc, out)
    cands = choice_doc["candidates"]
    print(f"overall Youden threshold {cands['overall']:.4f}")
    for g, t in cands["per_group"].items():
        print(f"  group {g}: {'undefined' if t is None else format(t, '.4f')}")
    for a, t in cands["aggregates"].items():
        print(f"  {a}: {t:.4f}")
    c = choice_doc["choice"]
    print(f"fairness threshold ({c['metric']}, {c['mode']}): {c['candidate']} = {c['threshold']:.4f}")
    return EXIT_OK


def _algorithms(cfg: RunConfig) -> tuple[str, ...]:
    return ALGORITHMS if cfg.algo == "all" else (cfg.algo,)


def _samplings(cfg: RunConfig) -> tuple[bool, ...]:
    return {"off": (False,), "on": (True,), "both": (False, True)}[cfg.sample]


def cmd_ablate(cfg: RunConfig) -> int:
    cfg.validate()
    data, protected = _load(cfg)
    grid = ablation_grid(
        data,
        protected,
        _algorithms(cfg),
        k=cfg.k,
        tau=cfg.tau,
        seed=cfg.seed,
        samplings=_samplings(cfg),
        test_fraction=cfg.test_fraction,
        mode=cfg.mode,
    )
    doc = grid.to_json()
    doc["config"] = {**cfg.to_json(), **doc["config"]}
    out = _outdir(cfg)
    if "csv" in cfg.formats:
        write_records(out / "grid.csv", grid_records(doc))
    if "json" in cfg.formats:
        write_json(out / "grid.json", doc)
    if "md" in cfg.formats:
        (out / "report.md").write_text(render_grid_md(doc), encoding="utf-8")
    print(f"{len(grid.cells)} cells, proxies: {', '.join(grid.proxies.proxies) if grid.proxies else '-'}; reports in {out}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    cfg.validate()
    data, protected = _load(cfg)
    cmp = compare_methods(
        data, protected, cfg.seed, _algorithms(cfg), test_fraction=cfg.test_fraction, mode=cfg.mode
    )
    doc = cmp.to_json()
    config = {**cfg.to_json(), "protected": protected}
    doc["config"] = config
    out = _outdir(cfg)
    if "csv" in cfg.formats:
        write_records(out / "compare.csv", compare_records(doc))
    if "json" in cfg.formats:
        write_json(out / "grid.json", doc)
    if "md" in cfg.formats:
        (out / "report.md").write_text(render_compare_md(doc, config), encoding="utf-8")
    print(f"by AUC: {' < '.join(cmp.rank_by_auc['overall'])}")
    print(f"by AUC variance: {' < '.join(cmp.rank_by_variance['overall'])}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    sc = SynthConfig(seed=cfg.seed, **cfg.synth)
    data = synth_gen(sc)
    out = _outdir(cfg)
    write_csv(data, out / "synth.csv")
    write_json(out / "synth.schema.json", data.schema.to_json())
    write_json(out / "synth.config.json", {**asdict(sc), "proportions": dict(sc.proportions), "base_rates": dict(sc.base_rates)})
    print(f"wrote {len(data)} rows to {out / 'synth.csv'}")
    return EXIT_OK


def cmd_report(out_dir: str) -> int:
    out = Path(out_dir)
    if (out / "fairness_choice.json").exists() and (out / "parity.json").exists():
        text = render_audit_md(read_json(out / "fairness_choice.json"), read_json(out / "parity.json"))
    elif (out / "grid.json").exists():
        doc = read_json(out / "grid.json")
        if doc.get("kind") == "compare":
            text = render_compare_md(doc, doc.get("config"))
        else:
            text = render_grid_md(doc)
    else:
        raise UsageError(f"{out}: no saved results (fairness_choice.json + parity.json, or grid.json)")
    (out / "report.md").write_text(text, encoding="utf-8")
    print(f"rendered {out / 'report.md'}")
    return EXIT_OK


COMMANDS = {
    "audit": cmd_audit,
    "thresholds": cmd_thresholds,
    "ablate": cmd_ablate,
    "compare": cmd_compare,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.out)
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except (ParityAuditError, FileNotFoundError, OSError, KeyError, ValueError) as e:
        print(f"parity-audit: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
