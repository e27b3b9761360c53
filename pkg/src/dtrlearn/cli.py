"""Command-line interface: simulate, learn, evaluate, benchmark.

All randomness flows from the mandatory ``--seed`` flag; there is no
implicit clock seeding, so identical invocations produce byte-identical
primary outputs.  Run configuration lives in an INI file with a ``[schema]``
section and one ``[stageN]`` section per stage (policy class, depth,
feature subset, constraint); command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys

import numpy as np

from .dataset import StageSchema, history_features, load_csv, write_csv
from .learners import (
    Dtr,
    LearnerConfig,
    LearnResult,
    aipw_welfare_estimate,
    default_policy_classes,
    learn,
)
from .models import RegressorSpec
from .policytree import PolicyClassSpec, StageConstraint, assign_actions, constant_policy
from .simeval import (
    DgpSpec,
    dgp_model,
    format_report_table,
    generate,
    load_sidecar,
    run_benchmark,
    true_welfare,
    write_sidecar,
)

MISSPECIFY_CHOICES = ("none", "q", "ps")


def _parse_int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part and not part.startswith("-"):
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _parse_bool_list(text: str) -> list[bool]:
    return [bool(int(v)) for v in _parse_int_list(text)]


def load_run_config(path) -> tuple[StageSchema, list[PolicyClassSpec], dict]:
    """Parse the INI run-config: schema, per-stage policy classes, defaults."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    if "schema" not in parser:
        raise ValueError(f"{path}: missing [schema] section")
    sec = parser["schema"]
    schema = StageSchema(
        num_stages=sec.getint("num_stages"),
        actions_per_stage=tuple(_parse_int_list(sec.get("actions_per_stage"))),
        state_dims=tuple(_parse_int_list(sec.get("state_dims"))),
        outcome_present=tuple(_parse_bool_list(sec.get("outcome_present"))),
    )
    classes: list[PolicyClassSpec] = []
    defaults = default_policy_classes(schema)
    for t in range(1, schema.num_stages + 1):
        name = f"stage{t}"
        if name not in parser:
            classes.append(defaults[t - 1])
            continue
        stage_sec = parser[name]
        kind = stage_sec.get("policy", "tree")
        constraint = StageConstraint(kind=stage_sec.get("constraint", "unconstrained"))
        features = stage_sec.get("features", None)
        classes.append(
            PolicyClassSpec(
                kind=kind,
                depth=stage_sec.getint("depth", 1 if t == 1 else 2),
                feature_indices=(
                    tuple(_parse_int_list(features)) if features is not None else None
                ),
                constraint=constraint,
            )
        )
    learner_defaults = {}
    if "learner" in parser:
        lsec = parser["learner"]
        if "k" in lsec:
            learner_defaults["num_folds"] = lsec.getint("k")
        if "eta" in lsec:
            learner_defaults["eta"] = lsec.getfloat("eta")
    return schema, classes, learner_defaults


def _specs_for(misspecify: str) -> tuple[RegressorSpec, RegressorSpec, str]:
    """(propensity_spec, q_spec, propensity_features) for a misspecification mode."""
    prop = RegressorSpec(kind="random_forest")
    q = RegressorSpec(kind="random_forest")
    features = "history"
    if misspecify == "q":
        q = RegressorSpec(kind="linear")
    elif misspecify == "ps":
        prop = RegressorSpec(kind="linear")
        features = "stage1"
    return prop, q, features


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_simulate(args) -> int:
    spec = DgpSpec(kind=args.dgp, n=args.n, seed=args.seed)
    pop = generate(spec)
    write_csv(args.out, pop.data)
    if args.sidecar:
        write_sidecar(args.sidecar, pop)
    print(f"wrote {pop.data.n_units} units to {args.out}")
    return 0


def _learner_config(args, policy_classes, learner_defaults) -> LearnerConfig:
    prop, q, features = _specs_for(args.misspecify)
    return LearnerConfig(
        method=args.method,
        seed=args.seed,
        num_folds=args.k or learner_defaults.get("num_folds", 5),
        eta=args.eta if args.eta is not None else learner_defaults.get("eta", 0.01),
        propensity_spec=prop,
        q_spec=q,
        policy_classes=tuple(policy_classes),
        propensity_features=features,
    )


def cmd_learn(args) -> int:
    schema, classes, learner_defaults = load_run_config(args.config)
    if args.depth:
        depths = _parse_int_list(args.depth)
        if len(depths) != schema.num_stages:
            raise ValueError(f"--depth needs {schema.num_stages} values")
        classes = [
            PolicyClassSpec(kind=c.kind, depth=d, feature_indices=c.feature_indices,
                            constraint=c.constraint)
            for c, d in zip(classes, depths)
        ]
    data = load_csv(args.data, schema)
    cfg = _learner_config(args, classes, learner_defaults)
    result = learn(data, cfg)
    _write_text(args.out, result.to_json() + "\n")
    print(f"learned {cfg.method} DTR -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    schema, classes, learner_defaults = load_run_config(args.config)
    data = load_csv(args.data, schema)
    with open(args.dtr, "r", encoding="utf-8") as fh:
        result = LearnResult.from_dict(json.load(fh))
    dtr = result.dtr
    args.method = "dr"
    cfg = _learner_config(args, classes, learner_defaults)

    report: dict = {"method": result.method}
    report["aipw_welfare"] = aipw_welfare_estimate(data, dtr, cfg)

    if args.true_welfare:
        if not args.sidecar:
            print("error: --true-welfare needs --sidecar with potential outcomes",
                  file=sys.stderr)
            return 1
        pop = load_sidecar(args.sidecar, data)
        report["true_welfare"] = true_welfare(pop, dtr, [c.constraint for c in classes])

    if args.contrast_uniform:
        contrasts = {}
        shares = {}
        for a in range(min(schema.actions_per_stage)):
            uniform = Dtr(tuple(
                constant_policy(t, a) for t in range(1, schema.num_stages + 1)
            ))
            w_u = aipw_welfare_estimate(data, uniform, cfg)
            contrasts[f"uniform_{a}"] = report["aipw_welfare"] - w_u
        assigned = _dtr_allocation(data, dtr, classes)
        combos, counts = np.unique(assigned, axis=0, return_counts=True)
        for combo, cnt in zip(combos, counts):
            key = "a" + "".join(str(int(v)) for v in combo)
            shares[key] = cnt / data.n_units
        report["contrasts"] = contrasts
        report["allocation_shares"] = shares
        report["allocation_note"] = (
            "shares use observed states with past actions replaced by the DTR's"
        )

    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        _write_text(args.out, text)
    print(text, end="")
    return 0


def _dtr_allocation(data, dtr: Dtr, classes) -> np.ndarray:
    """Assign actions stage by stage on observed states (reporting aid)."""
    n = data.n_units
    T = data.schema.num_stages
    assigned = np.zeros((n, T), dtype=np.int64)
    for t in range(1, T + 1):
        H = history_features(data, t).copy()
        H[:, : t - 1] = assigned[:, : t - 1]
        prior = assigned[:, t - 2] if t >= 2 else None
        assigned[:, t - 1] = assign_actions(
            dtr.stage(t), H, prior_actions=prior,
            constraint=classes[t - 1].constraint,
            n_actions=data.schema.actions_per_stage[t - 1],
        )
    return assigned


def cmd_benchmark(args) -> int:
    method_names = [m.strip() for m in args.methods.split(",") if m.strip()]
    prop, q, features = _specs_for(args.misspecify)
    methods = []
    for name in method_names:
        cfg = LearnerConfig(
            method=name,
            seed=args.seed,
            num_folds=args.k or 5,
            eta=args.eta if args.eta is not None else 0.01,
            propensity_spec=prop,
            q_spec=q,
            propensity_features=features,
        )
        methods.append((name, cfg))

    reports = []
    for n_train in _parse_int_list(args.n):
        reports.append(
            run_benchmark(
                methods,
                dgp_kind=args.dgp,
                n_train=n_train,
                n_test=args.n_test,
                reps=args.reps,
                master_seed=args.seed,
                jobs=args.jobs,
                timings=args.timings,
            )
        )
    payload = "".join(r.to_jsonl() for r in reports)
    if args.out:
        _write_text(args.out, payload)
    print(format_report_table(reports))
    failures = sum(s.n_failed for r in reports for s in r.summaries)
    return 1 if failures else 0


def cmd_bench_kernels(args) -> int:
    from .kernel_benchmark import run_kernel_benchmark

    print(run_kernel_benchmark(n=args.n, n_features=args.features, seed=args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtrlearn",
        description="Learn optimal dynamic treatment regimes from observational panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic panel")
    p_sim.add_argument("--dgp", required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--sidecar", help="also write potential outcomes (CSV)")
    p_sim.set_defaults(func=cmd_simulate)

    p_learn = sub.add_parser("learn", help="fit a DTR on a panel CSV")
    p_learn.add_argument("--method", required=True)
    p_learn.add_argument("--data", required=True)
    p_learn.add_argument("--config", required=True, help="run-config INI with [schema]")
    p_learn.add_argument("--depth", help="per-stage tree depths, e.g. 1,2")
    p_learn.add_argument("--k", type=int)
    p_learn.add_argument("--eta", type=float)
    p_learn.add_argument("--seed", type=int, required=True)
    p_learn.add_argument("--misspecify", choices=MISSPECIFY_CHOICES, default="none")
    p_learn.add_argument("--out", required=True)
    p_learn.set_defaults(func=cmd_learn)

    p_eval = sub.add_parser("evaluate", help="welfare estimates for a stored DTR")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--dtr", required=True)
    p_eval.add_argument("--k", type=int)
    p_eval.add_argument("--eta", type=float)
    p_eval.add_argument("--seed", type=int, required=True)
    p_eval.add_argument("--misspecify", choices=MISSPECIFY_CHOICES, default="none")
    p_eval.add_argument("--sidecar")
    p_eval.add_argument("--true-welfare", action="store_true", dest="true_welfare")
    p_eval.add_argument("--contrast-uniform", action="store_true", dest="contrast_uniform")
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=cmd_evaluate)

    p_bench = sub.add_parser("benchmark", help="Monte Carlo learner comparison")
    p_bench.add_argument("--dgp", required=True)
    p_bench.add_argument("--methods", required=True, help="comma list, e.g. dr,ipw")
    p_bench.add_argument("--n", required=True, help="train sizes, e.g. 500 or 250,500")
    p_bench.add_argument("--n-test", type=int, default=50000, dest="n_test")
    p_bench.add_argument("--reps", type=int, required=True)
    p_bench.add_argument("--seed", type=int, required=True)
    p_bench.add_argument("--k", type=int)
    p_bench.add_argument("--eta", type=float)
    p_bench.add_argument("--misspecify", choices=MISSPECIFY_CHOICES, default="none")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--timings", action="store_true",
                         help="record wall_ms per rep (breaks byte-identical reruns)")
    p_bench.add_argument("--out")
    p_bench.set_defaults(func=cmd_benchmark)

    p_k = sub.add_parser("bench-kernels", help="compare compiled vs python kernels")
    p_k.add_argument("--n", type=int, default=500)
    p_k.add_argument("--features", type=int, default=10)
    p_k.add_argument("--seed", type=int, default=0)
    p_k.set_defaults(func=cmd_bench_kernels)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
