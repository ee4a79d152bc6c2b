"""Command line entry point.

Subcommands: serve, generate-dataset, train, evaluate, simulate,
emit-rules. Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .enforcement import compile_rules, emit_script
from .errors import SafehomeError, ValidationError
from .gateway import (
    Gateway,
    default_domain_lists,
    load_config,
    load_scenario_file,
    packaged_scenario,
    run_scenario,
)
from .model import DeviceId
from .proximity import (
    LogisticClassifier,
    ThresholdClassifier,
    evaluate,
    load_model,
    save_model,
    train_logistic,
)
from .registry import load_registry
from .sim import (
    PathLossParams,
    default_floor_plan,
    generate_labeled_windows,
    read_dataset_csv,
    write_dataset_csv,
    write_truth_sidecar,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract wants 1
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="safehome", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    serve = sub.add_parser("serve", help="run the gateway: periodic ticks plus the REST API")
    serve.add_argument("--config", required=True, help="path to the gateway config file")
    serve.add_argument("--ticks", type=int, default=0,
                       help="run this many ticks without the API and exit (0 = serve forever)")

    gen = sub.add_parser("generate-dataset", help="write a labeled RSSI window dataset")
    gen.add_argument("--out", required=True, help="CSV output path")
    gen.add_argument("--windows", type=int, default=2000)
    gen.add_argument("--sensitivity", type=int, default=10)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--trace", help="optional ground-truth sidecar path (JSON lines)")

    train = sub.add_parser("train", help="train the logistic proximity model")
    train.add_argument("--data", required=True, help="dataset CSV")
    train.add_argument("--out", required=True, help="model JSON output path")
    train.add_argument("--epochs", type=int, default=500)
    train.add_argument("--lr", type=float, default=0.5)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--holdout", type=float, default=0.2,
                       help="held-out fraction reported after training")

    ev = sub.add_parser("evaluate", help="evaluate a model file against a dataset")
    ev.add_argument("--data", required=True)
    ev.add_argument("--model", required=True)

    simulate = sub.add_parser("simulate", help="run one scenario and print the decision")
    simulate.add_argument("--scenario", type=int, required=True, help="scenario number 1..6")
    simulate.add_argument("--seed", type=int, default=1)
    simulate.add_argument("--model", help="model file; defaults to the threshold baseline")
    simulate.add_argument("--scenario-file", help="explicit scenario JSON instead of a shipped one")
    simulate.add_argument("--out", help="write the final decisions as JSON to this path")

    emit = sub.add_parser("emit-rules", help="print the rule script for a registered device")
    emit.add_argument("--device", required=True, help="device MAC address")
    emit.add_argument("--config", required=True)
    emit.add_argument("--backend", default=None, help="emitter backend (default from config)")
    emit.add_argument("--out", help="write to this path instead of stdout")
    return parser


def _cmd_serve(args) -> int:
    config = load_config(args.config)
    gateway = Gateway(config)
    if args.ticks > 0:
        for _ in range(args.ticks):
            snapshot = gateway.tick()
        print(json.dumps(snapshot.to_dict(), indent=2))
        return EXIT_OK

    from .api import serve_api

    handle = serve_api(gateway)
    print(f"gateway serving on http://{config.api_bind} "
          f"(scenario mode: {config.scenario_mode})")
    try:
        while True:
            import time

            time.sleep(1.0)
    except KeyboardInterrupt:
        handle.stop()
    return EXIT_OK


def _cmd_generate_dataset(args) -> int:
    records, truths = generate_labeled_windows(
        default_floor_plan(), PathLossParams(), args.windows, args.sensitivity, args.seed
    )
    write_dataset_csv(records, args.out)
    if args.trace:
        write_truth_sidecar(truths, args.trace)
    print(f"wrote {len(records)} windows to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    records = read_dataset_csv(args.data)
    holdout = min(max(args.holdout, 0.0), 0.5)
    cut = int(len(records) * (1.0 - holdout)) or len(records)
    model = train_logistic(records[:cut], epochs=args.epochs,
                           learning_rate=args.lr, seed=args.seed)
    save_model(model, args.out)
    message = f"model written to {args.out}"
    if cut < len(records):
        report = evaluate(model, records[cut:])
        message += f"; held-out accuracy {report.accuracy:.3f} over {report.total} windows"
    print(message)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    records = read_dataset_csv(args.data)
    report = evaluate(model, records)
    (tn, fp), (fn, tp) = report.confusion
    print(json.dumps({
        "accuracy": round(report.accuracy, 4),
        "precision": round(report.precision, 4),
        "recall": round(report.recall, 4),
        "confusion": {"tn": tn, "fp": fp, "fn": fn, "tp": tp},
    }, indent=2))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.scenario_file:
        scenario = load_scenario_file(args.scenario_file)
    else:
        scenario = packaged_scenario(args.scenario)
    if args.model:
        classifier = LogisticClassifier(load_model(args.model))
    else:
        classifier = ThresholdClassifier()
    timeline = run_scenario(scenario, classifier, seed=args.seed)
    final = timeline[-1]
    payload = [decision.to_dict() for decision in final]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    for decision in final:
        actions = ",".join(sorted(a.value for a in decision.actions)) or "-"
        print(f"scenario {scenario.spec.scenario_id}: {decision.cad} -> "
              f"{decision.access.value} actions={actions}")
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_emit_rules(args) -> int:
    config = load_config(args.config)
    registry = load_registry(config.registry_path)
    device_id = DeviceId(args.device)
    device = registry.devices.get(device_id)
    if device is None:
        raise ValidationError(f"device {device_id} is not in the registry")
    allowlist, denylist = default_domain_lists()
    from .enforcement import load_domain_list

    if config.allowlist_path:
        allowlist = load_domain_list(config.allowlist_path)
    if config.denylist_path:
        denylist = load_domain_list(config.denylist_path)
    ruleset = compile_rules(device, device.access, config.lan_cidr, allowlist, denylist)
    text = emit_script(ruleset, args.backend or config.emit_backend)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


_COMMANDS = {
    "serve": _cmd_serve,
    "generate-dataset": _cmd_generate_dataset,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "emit-rules": _cmd_emit_rules,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SafehomeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
