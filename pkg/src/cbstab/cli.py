"""Command-line harness: campaigns, certification, benchmarks and replay of failing cases."""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, campaigns, certify
from .errors import CbstabError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

LEMMA_DEFAULTS = {
    "unit": {"dims": [2, 3], "samples": 500},
    "inver": {"dims": [4], "samples": 200},
    "unitmult": {"dims": [2, 3], "samples": 500},
    "surjectivity": {"dims": [2], "samples": 200},
}

# keys accepted in a --config file, mapped to their parser
CONFIG_KEYS = {
    "lemma": str, "dims": str, "eps": str, "samples": int, "restarts": int, "seed": int,
    "tol": float, "out": str, "max_iter": int, "jobs": int, "dump_all": bool,
    "eps_nuclear": str, "eps_vn": str, "delta": str, "allow_flagged": str, "repeats": int,
}


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        conv = CONFIG_KEYS[key]
        try:
            out[key] = _parse_bool(value) if conv is bool else conv(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from e
    return out


def parse_dims(s) -> list:
    if isinstance(s, (list, tuple)):
        dims = list(s)
    else:
        text = str(s).strip().strip("[]")
        try:
            dims = [int(t) for t in text.replace(" ", "").split(",") if t]
        except ValueError as e:
            raise ConfigError(f"dims must be a comma-separated list of integers, got {s!r}") from e
    if not dims or any(n < 1 for n in dims):
        raise ConfigError(f"dims must be nonempty positive integers, got {s!r}")
    return dims


def parse_eps_list(s) -> list:
    try:
        vals = [float(t) for t in str(s).split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"eps must be numbers, got {s!r}") from e
    if not vals or any(not (v >= 0) for v in vals):
        raise ConfigError(f"eps must be nonnegative, got {s!r}")
    return vals


def _split_flags(values) -> list:
    out = []
    for v in values or []:
        out.extend(t.strip() for t in v.split(",") if t.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; command-line flags take precedence")
    common.add_argument("--dims", help="block sizes, e.g. 2,3")
    common.add_argument("--eps", help="perturbation size (comma-separated list for defect-suite)")
    common.add_argument("--samples", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--seed", type=int, help="default: $CBSTAB_SEED, else 0")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--out", help="output directory (default: cbstab-out)")
    common.add_argument("--jobs", type=int, help="worker processes for campaign samples")
    common.add_argument("--dump-all", dest="dump_all", action="store_true", default=None,
                        help="dump every case, not only failures")

    p = argparse.ArgumentParser(prog="cbstab", description=__doc__)
    p.add_argument("--version", action="version", version=f"cbstab {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)

    s = sub.add_parser("verify-lemma", parents=[common], help="randomised check of a matrix lemma")
    s.add_argument("--lemma", choices=campaigns.LEMMAS)
    sub.add_parser("defect-suite", parents=[common], help="defect bounds on near-isomorphisms")
    sub.add_parser("recover", parents=[common], help="recover a *-isomorphism from a perturbation")

    s = sub.add_parser("certify", parents=[common], help="interval certification of the constants")
    s.add_argument("--eps-nuclear", dest="eps_nuclear")
    s.add_argument("--eps-vn", dest="eps_vn")
    s.add_argument("--delta", help="comma-separated delta grid for the quantitative chain")
    s.add_argument("--allow-flagged", dest="allow_flagged", action="append",
                   help="step names whose violation does not fail the run (repeatable, comma-separated)")

    s = sub.add_parser("bench", parents=[common], help="numba vs numpy kernel timings")
    s.add_argument("--repeats", type=int)

    s = sub.add_parser("replay", help="re-run a dumped case")
    s.add_argument("case_file")
    s.add_argument("--out", help="write the result JSON here")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win) into one validated dict."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if k in ("config", "mode") or v is None:
            continue
        cfg[k] = v
    cfg["mode"] = args.mode

    if "seed" not in cfg:
        env = os.environ.get("CBSTAB_SEED")
        try:
            cfg["seed"] = int(env) if env is not None else 0
        except ValueError as e:
            raise ConfigError(f"CBSTAB_SEED must be an integer, got {env!r}") from e
    cfg.setdefault("out", "cbstab-out")
    cfg.setdefault("jobs", 1)
    cfg.setdefault("dump_all", False)
    for k in ("samples", "restarts", "max_iter", "jobs", "repeats"):
        if k in cfg and cfg[k] < 1:
            raise ConfigError(f"{k} must be positive")
    if "tol" in cfg and not cfg["tol"] > 0:
        raise ConfigError("tol must be positive")

    mode = cfg["mode"]
    if mode == "verify-lemma":
        if "lemma" not in cfg:
            raise ConfigError("verify-lemma needs --lemma")
        if cfg["lemma"] not in campaigns.LEMMAS:
            raise ConfigError(f"unknown lemma {cfg['lemma']!r}")
        for k, v in LEMMA_DEFAULTS[cfg["lemma"]].items():
            cfg.setdefault(k, v)
    elif mode == "defect-suite":
        cfg.setdefault("dims", [2, 3])
        cfg.setdefault("eps", "1e-2,1e-3,1e-4")
        cfg.setdefault("samples", 10)
        cfg.setdefault("restarts", 4)
        cfg.setdefault("max_iter", 100)
    elif mode == "recover":
        cfg.setdefault("dims", [2, 3])
        cfg.setdefault("eps", "1e-3")
        cfg.setdefault("samples", 1)
        cfg.setdefault("restarts", 8)
    elif mode == "certify":
        cfg.setdefault("eps_nuclear", "3e-19")
        cfg.setdefault("eps_vn", "4e-6")
        cfg.setdefault("delta", ",".join(certify.QUANT_GRID))
        flags = cfg.get("allow_flagged", [])
        cfg["allow_flagged"] = _split_flags([flags] if isinstance(flags, str) else flags)
    elif mode == "bench":
        cfg.setdefault("dims", [2, 3])
        cfg.setdefault("samples", 8)
        cfg.setdefault("max_iter", 200)
        cfg.setdefault("repeats", 3)
    if "dims" in cfg:
        cfg["dims"] = parse_dims(cfg["dims"])
    if "eps" in cfg:
        cfg["eps"] = parse_eps_list(cfg["eps"])
    return cfg


# ---------------------------------------------------------------------------
# campaign execution

def _evaluate_indexed(item):
    i, case = item
    return i, campaigns.evaluate_case(case)


def run_cases(cases, jobs: int = 1) -> list:
    """Evaluate cases, concurrently if ``jobs > 1``; results come back in index order."""
    if jobs <= 1 or len(cases) <= 1:
        return [campaigns.evaluate_case(c) for c in cases]
    results = [None] * len(cases)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for i, r in pool.map(_evaluate_indexed, enumerate(cases), chunksize=max(1, len(cases) // (4 * jobs))):
            results[i] = r
    return results


def _campaign_cases(cfg) -> list:
    """Case list for the configured mode, each tagged with its sample index."""
    mode, seed = cfg["mode"], cfg["seed"]
    out = []
    if mode == "verify-lemma":
        kw = {"tol": cfg["tol"]} if "tol" in cfg else {}
        cases = campaigns.make_cases(cfg["lemma"], cfg["dims"], cfg["samples"], seed, **kw)
        out = [("-", c) for c in cases]
    elif mode == "defect-suite":
        for j, eps in enumerate(cfg["eps"]):
            cases = campaigns.make_cases("defmult", cfg["dims"], cfg["samples"], seed + j, eps=eps,
                                         restarts=cfg["restarts"], max_iter=cfg["max_iter"])
            out += [(eps, c) for c in cases]
    elif mode == "recover":
        kw = {"tol": cfg["tol"]} if "tol" in cfg else {}
        for j, eps in enumerate(cfg["eps"]):
            cases = campaigns.make_cases("recover", cfg["dims"], cfg["samples"], seed + j, eps=eps,
                                         restarts=cfg["restarts"], **kw)
            out += [(eps, c) for c in cases]
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows, fields) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _header(cfg) -> dict:
    return {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "version": __version__}


def _dump_case(outdir: Path, index: int, case: dict, result: dict) -> Path:
    fdir = outdir / "failures"
    fdir.mkdir(parents=True, exist_ok=True)
    path = fdir / f"{case['kind']}-{index:05d}.json"
    _write_json(path, {"case": case, "result": result})
    return path


def _body_config(cfg) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k not in ("out", "jobs", "config")}


def run_campaign(cfg) -> int:
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    tagged = _campaign_cases(cfg)
    results = run_cases([c for _, c in tagged], cfg["jobs"])

    rows, dumps = [], []
    for i, ((eps, case), res) in enumerate(zip(tagged, results)):
        row = {"index": i, "eps": eps}
        row.update({k: v for k, v in res.items() if not isinstance(v, (list, dict))})
        rows.append(row)
        if not res["passed"] or cfg["dump_all"]:
            dumps.append(str(_dump_case(outdir, i, case, res).relative_to(outdir)))

    n_fail = sum(not r["passed"] for r in results)
    report = {"header": _header(cfg), "config": _body_config(cfg),
              "summary": {"cases": len(results), "failed": n_fail, "passed": n_fail == 0},
              "results": rows, "dumps": dumps}
    _write_json(outdir / "report.json", report)
    fields = list(dict.fromkeys(k for r in rows for k in r))
    _write_csv(outdir / "results.csv", rows, fields)

    if cfg["mode"] == "recover":
        series = [{"index": i, "iteration": it, "eps": e}
                  for i, res in enumerate(results) for it, e in enumerate(res.get("eps_series", []))]
        _write_csv(outdir / "eps_series.csv", series, ["index", "iteration", "eps"])
    if cfg["mode"] == "defect-suite":
        scatter = []
        for r in rows:
            if "mult_defect" in r:
                scatter.append({"index": r["index"], "eps": r["eps"], "kind": "mult",
                                "defect": r["mult_defect"], "bound": r["bound_mult"]})
                scatter.append({"index": r["index"], "eps": r["eps"], "kind": "sa",
                                "defect": r["sa_defect"], "bound": r["bound_sa"]})
        _write_csv(outdir / "defect_vs_bound.csv", scatter, ["index", "eps", "kind", "defect", "bound"])

    label = cfg.get("lemma", cfg["mode"])
    print(f"{label}: {len(results) - n_fail}/{len(results)} passed -> {outdir / 'report.json'}")
    for d in dumps if n_fail else []:
        print(f"  failing case: {outdir / d}")
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


def run_certify(cfg) -> int:
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    deltas = [t.strip() for t in str(cfg["delta"]).split(",") if t.strip()]
    case = {"kind": "certify", "inputs": {},
            "params": {"eps_nuclear": cfg["eps_nuclear"], "eps_vn": cfg["eps_vn"],
                       "deltas": deltas, "allow_flagged": cfg["allow_flagged"]}}
    try:
        res = campaigns.evaluate_case(case)
    except campaigns.MalformedCase as e:
        raise ConfigError(str(e)) from e
    body = {"header": _header(cfg), "config": _body_config(cfg),
            "summary": {"passed": res["passed"], "flagged": res["flagged"], "blocking": res["blocking"]},
            "reports": res["reports"]}
    _write_json(outdir / "report.json", body)
    rows = [{"report": r["title"], **{k: s[k] for k in ("name", "relation", "status", "note")},
             "derived_lo": None if s["derived"] is None else s["derived"][0],
             "derived_hi": None if s["derived"] is None else s["derived"][1],
             "claimed_lo": s["claimed"][0], "claimed_hi": s["claimed"][1]}
            for r in res["reports"] for s in r["steps"]]
    _write_csv(outdir / "chain_steps.csv", rows,
               ["report", "name", "relation", "status", "derived_lo", "derived_hi",
                "claimed_lo", "claimed_hi", "note"])
    if not res["passed"]:
        _dump_case(outdir, 0, case, {k: res[k] for k in ("passed", "flagged", "blocking")})

    for d in deltas:
        print(certify.replay_quant_chain(d).table())
    print(certify.threshold_nuclear(cfg["eps_nuclear"]).table())
    print(certify.threshold_vn(cfg["eps_vn"]).table())
    print(f"flagged: {', '.join(dict.fromkeys(res['flagged'])) or 'none'}")
    if res["blocking"]:
        print(f"blocking: {', '.join(dict.fromkeys(res['blocking']))}")
    return EXIT_OK if res["passed"] else EXIT_FAIL


def run_bench(cfg) -> int:
    from .bench import format_rows, run_benchmark

    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    rows = run_benchmark(dims=tuple(cfg["dims"]), starts=cfg["samples"], max_iter=cfg["max_iter"],
                         repeats=cfg["repeats"], seed=cfg["seed"])
    text = format_rows(rows)
    (outdir / "bench.csv").write_text(text)
    _write_json(outdir / "report.json", {"header": _header(cfg), "config": _body_config(cfg),
                                         "results": rows})
    print(text, end="")
    return EXIT_OK


def replay(path, out=None) -> int:
    try:
        data = json.loads(Path(path).read_text())
        case = data["case"] if isinstance(data, dict) and "case" in data else data
        res = campaigns.evaluate_case(case)
    except (OSError, json.JSONDecodeError, campaigns.MalformedCase, CbstabError) as e:
        print(f"cbstab replay: malformed case dump {path}: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = json.dumps(res, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)
    recorded = data.get("result", {}).get("passed") if isinstance(data, dict) else None
    if recorded is not None and recorded != res["passed"]:
        print(f"verdict changed: recorded passed={recorded}, now passed={res['passed']}", file=sys.stderr)
    return EXIT_OK if res["passed"] else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.mode == "replay":
        return replay(args.case_file, args.out)
    try:
        cfg = resolve(args)
        if cfg["mode"] == "certify":
            return run_certify(cfg)
        if cfg["mode"] == "bench":
            return run_bench(cfg)
        return run_campaign(cfg)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"cbstab: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
