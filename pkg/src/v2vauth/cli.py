"""Command line entry point: ``v2vauth <verb> [options]``.

Verbs:
  setup         write the public parameter view and the secret store
  run           run a scenario; write trace.jsonl, metrics.json and figures
  attack        run one adversary battery against a scenario's world
  verify-trace  re-run the scenario in a trace header and compare every record
  bench         compare measured operation counts with the cost table

Exit status: 0 success, 1 failed check, 2 schema or parameter error.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from importlib import resources

from . import report
from .authority import Profile, setup as setup_params
from .errors import ParameterError, SchemaError
from .ops import PROVISION_PRP_CALLS, SENDER_COST, TOKEN_UPDATE_INTERPOLATIONS
from .simnet import Scenario, dump_trace, load_trace, reverify, run

ATTACKS = ("forge", "reuse", "replay", "tamper", "collude")
DEFAULT_TRIALS = {"forge": 10_000, "reuse": 1000, "replay": 1000, "tamper": 1000, "collude": 0}


def bundled(name: str) -> str:
    return str(resources.files("v2vauth") / "scenarios" / f"{name}.yaml")


def load_scenario(args, default: str = "toy") -> Scenario:
    path = args.scenario or bundled(default)
    sc = Scenario.load(path)
    doc = sc.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.profile is not None:
        doc["profile"] = args.profile
    if args.variant is not None:
        doc["variant"] = args.variant
        if args.variant == "homomorphic":
            doc["family"] = None
    return Scenario.from_dict(doc)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def check_consistency(trace: list[dict], metrics: dict) -> list[str]:
    """Invariants every run must satisfy; returns human-readable failures."""
    problems = []
    verdicts = [r for r in trace if r["type"] == "verdict"]
    if len(verdicts) != metrics["verifications"]:
        problems.append("verdict records do not match the verification count")
    if metrics["accepts"] + sum(metrics["rejects"].values()) != metrics["verifications"]:
        problems.append("accept and reject counts do not add up")
    if any(r["time"] < r["sent_at"] for r in verdicts):
        problems.append("an envelope was verified before it was sent")
    times = [r["time"] for r in trace]
    if times != sorted(times):
        problems.append("trace is not in timestamp order")
    return problems


def cmd_setup(args) -> int:
    sc = load_scenario(args)
    c, d = sc.classes, sc.degrees
    params = setup_params(int(c["u"]), int(c["b"]), int(c["prime_bits"]), int(d["d"]), int(d["q"]),
                          sc.resolved_family, seed=sc.seed, profile=Profile(sc.profile), gamma=int(sc.gamma_ms))
    out = args.out or "."
    _write(os.path.join(out, "params.public.json"), json.dumps(params.public_view(), indent=2, sort_keys=True) + "\n")
    _write(os.path.join(out, "params.secret.json"), json.dumps(params.secret_view(), indent=2, sort_keys=True) + "\n")
    print(f"M_bits\t{params.M.bit_length()}")
    print(f"classes\t{len(params.classes)}")
    print(f"public\t{os.path.join(out, 'params.public.json')}")
    print(f"secret\t{os.path.join(out, 'params.secret.json')}")
    return 0


def cmd_run(args) -> int:
    sc = load_scenario(args)
    trace, metrics = run(sc)
    m = metrics.to_dict()
    out = args.out or "out"
    _write(os.path.join(out, "trace.jsonl"), dump_trace(trace, sc))
    _write(os.path.join(out, "metrics.json"), json.dumps(m, indent=2, sort_keys=True) + "\n")
    if not args.no_figures:
        report.render_all(m, out)
    sys.stdout.write(report.tsv(m))
    problems = check_consistency(trace, m)
    for p in problems:
        print(f"FAIL\t{p}", file=sys.stderr)
    return 1 if problems else 0


def attack_scenario(sc: Scenario, name: str, trials: int, size: int | None) -> Scenario:
    doc = copy.deepcopy(sc.to_dict())
    at = max([int(e["at"]) for e in doc["script"]] + [0]) + 1
    if name == "collude":
        size = size if size is not None else int(doc["degrees"]["d"])
        if size > sc.n_prime_value:
            doc["assumption_violating"] = True
        if doc["variant"] != "homomorphic":
            doc["family"] = "generic"
        doc["script"].append({"at": at, "op": "collude", "size": size})
    else:
        doc["script"].append({"at": at, "op": name, "trials": trials})
    return Scenario.from_dict(doc)


def judge_attack(name: str, sc: Scenario, m: dict) -> tuple[list[tuple[str, object]], bool]:
    rows: list[tuple[str, object]] = []
    ok = True
    if name == "forge":
        b = int(sc.classes["b"])
        n = m["forge_verifications"]
        p = 2.0 ** -b
        sigma = math.sqrt(p * (1 - p) / n) if n else 0.0
        rate = m["forge_pass_rate"]
        ok = n > 0 and abs(rate - p) <= 3 * sigma
        rows += [("b", b), ("verifications", n), ("accepts", m["forge_accepts"]), ("pass_rate", rate),
                 ("expected", p), ("three_sigma", 3 * sigma)]
    elif name == "reuse":
        rows += [("verifications", m["reuse_verifications"]), ("accepts", m["reuse_accepts"]),
                 ("accept_rate", m["reuse_accepts"] / max(1, m["reuse_verifications"]))]
        if sc.variant == "homomorphic":
            ok = m["reuse_accepts"] == 0
    elif name == "replay":
        rows += [("within", m["replay_within"]), ("within_detected", m["replay_detected"]),
                 ("across", m["replay_across"]), ("across_integrity", m["replay_across_integrity"])]
        ok = m["replay_detected"] == m["replay_within"] and m["replay_across_integrity"] == m["replay_across"]
    elif name == "tamper":
        rows += [("verifications", m["tamper_verifications"]), ("integrity", m["tamper_integrity"])]
        ok = m["tamper_integrity"] == m["tamper_verifications"]
    elif name == "collude":
        for res in m["collusions"]:
            rows += [("size", res["size"]), ("d", res["d"]), ("reconstructed", res["reconstructed"]),
                     ("linked", res["linked"]), ("detail", res["detail"] or "-")]
            if res["family"] == "generic" and not res["detail"]:
                ok = ok and res["reconstructed"] == (res["size"] >= res["d"])
    return rows, ok


def cmd_attack(args) -> int:
    names = ATTACKS if args.attack == "all" else (args.attack,)
    base = load_scenario(args, default="demo")
    all_ok = True
    forge_rows = []
    for name in names:
        trials = args.trials if args.trials is not None else DEFAULT_TRIALS[name]
        sc = attack_scenario(base, name, trials, args.size)
        trace, metrics = run(sc)
        m = metrics.to_dict()
        rows, ok = judge_attack(name, sc, m)
        for k, v in rows:
            print(f"{name}\t{k}\t{v}")
        print(f"{name}\tresult\t{'PASS' if ok else 'FAIL'}")
        all_ok = all_ok and ok
        if name == "forge":
            forge_rows.append((int(sc.classes["b"]), m["forge_accepts"], m["forge_verifications"]))
        if args.out:
            _write(os.path.join(args.out, f"{name}.trace.jsonl"), dump_trace(trace, sc))
            _write(os.path.join(args.out, f"{name}.metrics.json"), json.dumps(m, indent=2, sort_keys=True) + "\n")
    if args.out and forge_rows and not args.no_figures:
        report.forge_figure(forge_rows, os.path.join(args.out, "forge_rate.png"))
    return 0 if all_ok else 1


def cmd_verify_trace(args) -> int:
    path = args.trace or os.path.join(args.out or "out", "trace.jsonl")
    with open(path) as fh:
        trace = load_trace(fh.read())
    bad = reverify(trace)
    n = sum(1 for r in trace if r["type"] == "verdict")
    print(f"records\t{len(trace)}")
    print(f"verdicts\t{n}")
    print(f"mismatches\t{len(bad)}")
    for k, a, b in bad[:10]:
        print(f"mismatch\t{k}\t{json.dumps(a, sort_keys=True)}\t{json.dumps(b, sort_keys=True)}", file=sys.stderr)
    return 1 if bad else 0


def cmd_bench(args) -> int:
    sc = load_scenario(args, default="demo")
    trace, metrics = run(sc)
    m = metrics.to_dict()
    sender, token = m["sender_ops"], m["token_ops"]
    ok = True
    lines = []
    if sender["count"]:
        per = {k: sender[k] / sender["count"] for k in SENDER_COST}
        ok &= all(per[k] == SENDER_COST[k] for k in SENDER_COST)
        lines.append("sender_cost\t" + " ".join(f"{k}={per[k]:g}" for k in ("poly_evals", "hashes")))
        lines.append(f"sender_prp_calls\t{per['prp_calls']:g}")
        lines.append("expected\t" + " ".join(f"{k}={SENDER_COST[k]}" for k in ("poly_evals", "hashes")))
    prov = _provision_prp(sc)
    ok &= prov == PROVISION_PRP_CALLS
    lines.append(f"provision_prp_calls\t{prov:g}")
    if token["count"]:
        interp = token["interpolations"] / token["count"]
        ok &= interp == TOKEN_UPDATE_INTERPOLATIONS
        lines.append(f"token_update_interpolations\t{interp:g}")
    lines.append(f"broadcasts\t{sender['count']}")
    lines.append(f"result\t{'PASS' if ok else 'FAIL'}")
    print("\n".join(lines))
    if args.out and not args.no_figures:
        os.makedirs(args.out, exist_ok=True)
        report.ops_figure(m, os.path.join(args.out, "sender_ops.png"))
    return 0 if ok else 1


def _provision_prp(sc: Scenario) -> float:
    from .simnet import Simulation
    sim = Simulation(sc)
    n = len(sim.vehicles)
    return sim.aa.counters.prp_calls / n if n else PROVISION_PRP_CALLS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vauth", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario YAML (defaults to a bundled one)")
    common.add_argument("--seed", type=int)
    common.add_argument("--profile", choices=("toy", "demo"))
    common.add_argument("--variant", choices=("base", "homomorphic"))
    common.add_argument("--out", help="output directory")
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib output")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("setup", parents=[common], help="generate parameters")
    sub.add_parser("run", parents=[common], help="run a scenario")
    p = sub.add_parser("attack", parents=[common], help="run an adversary battery")
    p.add_argument("--attack", required=True, choices=ATTACKS + ("all",))
    p.add_argument("--trials", type=int)
    p.add_argument("--size", type=int, help="coalition size for collude")
    p = sub.add_parser("verify-trace", parents=[common], help="reproduce a trace")
    p.add_argument("trace", nargs="?", help="trace.jsonl (default OUT/trace.jsonl)")
    sub.add_parser("bench", parents=[common], help="operation counts against the cost table")
    return parser


COMMANDS = {"setup": cmd_setup, "run": cmd_run, "attack": cmd_attack, "verify-trace": cmd_verify_trace,
            "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except (SchemaError, ParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
