"""Command-line entry point.

Subcommands:
  run      execute one configured experiment end to end
  sweep    run a config across methods and seeds into isolated subdirectories
  verify   run the brute-force property checks (fast or full)
  inspect  print the compact-representation maps and table sizes for a config
           without training
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from gsac.harness.config import (
    METHODS,
    ExperimentConfig,
    config_hash,
    load_config,
)
from gsac.harness.runner import build_environments, run_experiment, run_sweep
from gsac.harness.verify import verify_suite


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out=args.out)
    if args.method is not None:
        config = replace(config, method=args.method)
    return config


def _cmd_run(args) -> int:
    config = _load(args)
    manifest = run_experiment(config)
    for phase, secs in manifest.phase_seconds.items():
        print(f"{phase}: {secs:.2f}s")
    print(f"metrics: {manifest.metrics_csv}")
    if not manifest.ok:
        for failure in manifest.failures:
            print(f"FAILED: {failure}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    base = _load(args)
    configs = []
    methods = [base.method] if args.method else list(METHODS)
    for method in methods:
        for s in range(args.seeds):
            configs.append(replace(
                base, method=method, seed=base.seed + s,
                out=f"{base.out}/{method}-seed{base.seed + s}",
            ))
    manifests = run_sweep(configs, parallelism=args.parallelism)
    failed = [m for m in manifests if not m.ok]
    print(f"{len(manifests) - len(failed)}/{len(manifests)} runs succeeded")
    for m in failed:
        print(f"FAILED seed={m.seed} method={m.method}: {m.failures}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_verify(args) -> int:
    results = verify_suite(args.level)
    for res in results:
        print(res)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_inspect(args) -> int:
    from gsac.learner import build_acr_keys, build_raw_keys

    config = _load(args)
    _, target = build_environments(config)
    graph, spaces = target.graph, target.spaces
    print(f"env: {target.name}, {graph.n} agents, config hash {config_hash(config)}")
    raw = build_raw_keys(graph, spaces, config.kappa)
    acr = build_acr_keys(target.masks, graph, spaces, config.kappa)
    for i in range(graph.n):
        print(f"agent {i}:")
        print(f"  value components: {sorted(acr[i].value_comps)}")
        print(f"  policy components: {sorted(acr[i].policy_comps)}")
        print(f"  domain components (critic): {sorted(acr[i].critic_omega)}")
        raw_dim = len(raw[i].policy_comps)
        acr_dim = len(acr[i].policy_comps)
        print(f"  policy feature count: raw {raw_dim} -> compact {acr_dim}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gsac",
        description="Networked multi-agent actor-critic with causal domain "
                    "generalization: run, sweep, verify, inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="config file (structured text)")
        p.add_argument("--seed", type=int, metavar="N", help="override the run seed")
        p.add_argument("--out", metavar="DIR", help="override the output directory")
        p.add_argument("--method", choices=METHODS, help="override the method")

    p_run = sub.add_parser("run", help="execute one experiment")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run methods x seeds")
    common(p_sweep)
    p_sweep.add_argument("--seeds", type=int, default=5, help="seeds per method")
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the property-check suites")
    p_verify.add_argument("--level", choices=("fast", "full"), default="fast")
    p_verify.set_defaults(fn=_cmd_verify)

    p_inspect = sub.add_parser("inspect", help="print compact maps and table sizes")
    common(p_inspect)
    p_inspect.set_defaults(fn=_cmd_inspect)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
