"""
Experiment orchestration: JSON configs, seeded runs, CSV/JSON artifacts,
run manifests and the expected-results regression file.
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import time
from math import comb
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, deviation, groups, torus, walk
from .exterior import Subspace

EXPECTED_PATH = Path(__file__).parent / "data" / "expected_results.json"

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_POSNUM = {"type": "number", "exclusiveMinimum": 0}
_INTLIST = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}

_WALK = {"r": _POS, "n": _POS, "trials": {"type": "integer", "minimum": 2}}
_DEV = {
    "r": _POS, "n": _POS, "trials": {"type": "integer", "minimum": 100}, "omega": _POSNUM,
    "l_values": _INTLIST, "horizons": _INTLIST, "targets": {"enum": ["adversarial", "random"]},
    "search_budget": {"type": "integer", "minimum": 10},
}

PARAMETERS = {
    "lyapunov": {
        "n": (_POS, 200), "trials": ({"type": "integer", "minimum": 2}, 400),
        "equal_tol": (_POSNUM, 0.05), "gap_min": (_POSNUM, 0.1),
    },
    "limit-set": {"r": (_POS, None), "n": (_POS, 200), "trials": (_WALK["trials"], 500)},
    "property-s": {
        "r": (_POS, None), "n": (_POS, 200), "trials": (_WALK["trials"], 500),
        "search_budget": ({"type": "integer", "minimum": 10}, 64), "steps": (_POS, 200),
        "threshold": (_POSNUM, walk.S_THRESHOLD),
    },
    "lambda-split": {"r": (_POS, None), "n": (_POS, 200), "trials": (_WALK["trials"], None)},
    **{
        name: {
            "r": (_POS, None), "n": (_POS, 120), "trials": (_DEV["trials"], 5000), "omega": (_POSNUM, 0.2),
            "l_values": (_INTLIST, list(range(20, 61, 5))), "horizons": (_INTLIST, [40, 60, 80, 100, 120]),
            "targets": (_DEV["targets"], "adversarial"), "search_budget": (_DEV["search_budget"], 32),
        }
        for name in ("deviation-i", "deviation-ii", "deviation-iii")
    },
    "large-deviation-suite": {
        "r": (_POS, None), "n": (_POS, 120), "trials": (_DEV["trials"], 2000), "omega": (_POSNUM, 0.2),
        "l_values": (_INTLIST, list(range(20, 61, 5))), "horizons": (_INTLIST, [20, 40, 60, 80, 100]),
    },
    "holder": {
        "r": (_POS, None), "burn_in": (_POS, 200), "trials": ({"type": "integer", "minimum": 2000}, 2000),
        "random_probes": ({"type": "integer", "minimum": 0}, 4), "search_budget": (_DEV["search_budget"], 32),
    },
    "torus-dichotomy": {
        "x0": ({"type": "string"}, "1/3,1/3"), "t": ({"type": "number", "exclusiveMinimum": 0, "maximum": 1}, 0.5),
        "N": (_POS, 5), "horizons": (_INTLIST, list(range(0, 41, 5))), "trials": (_POS, 20000),
        "bits": ({"type": "integer", "minimum": 64}, torus.DEFAULT_BITS), "M": (_POSNUM, 2.0),
        "mode": ({"enum": ["auto", "exact", "empirical"]}, "auto"),
    },
    "invertibility-sweep": {"tuples": (_POS, 10000), "k": ({"type": "integer", "minimum": 2}, 2), "r": (_POS, 2)},
}

EXPERIMENTS = tuple(PARAMETERS)
COMMON = {
    "experiment": {"enum": list(EXPERIMENTS)},
    "preset": {"type": "string"},
    "measure": {
        "type": "object",
        "required": ["dim", "atoms"],
        "properties": {
            "dim": _POS,
            "label": {"type": "string"},
            "atoms": {
                "type": "array", "minItems": 1,
                "items": {
                    "type": "object", "required": ["matrix", "weight"], "additionalProperties": False,
                    "properties": {"matrix": {"type": "array"}, "weight": _POSNUM},
                },
            },
        },
    },
    "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "threads": _POS,
    "output_dir": {"type": "string"},
    "parameters": {"type": "object"},
}


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


def schema(experiment=None):
    """JSON schema of a config, for one experiment or (experiment=None) the union."""
    if experiment is None:
        return {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "title": "experiment config",
            "type": "object",
            "required": ["experiment"],
            "properties": {"experiment": COMMON["experiment"]},
            "oneOf": [schema(e) for e in EXPERIMENTS],
        }
    params = {k: v[0] for k, v in PARAMETERS[experiment].items()}
    return {
        "type": "object",
        "required": ["experiment"],
        "additionalProperties": False,
        "properties": {
            **COMMON,
            "experiment": {"const": experiment},
            **params,
            "parameters": {"type": "object", "additionalProperties": False, "properties": params},
        },
    }


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(config):
    """List of diagnostics (empty when the config is valid).  Never runs anything."""
    if not isinstance(config, dict):
        return ["<root>: config must be a JSON object"]
    exp = config.get("experiment")
    if exp not in PARAMETERS:
        return [f"experiment: must be one of {', '.join(EXPERIMENTS)} (got {exp!r})"]
    errors = [f"{_path(e)}: {e.message}" for e in jsonschema.Draft202012Validator(schema(exp)).iter_errors(config)]
    if errors:
        return errors
    if ("preset" in config) == ("measure" in config) and exp != "invertibility-sweep":
        return ["<root>: give exactly one of 'preset' or 'measure'"]
    if "preset" in config and config["preset"] not in groups.preset_names():
        return [f"preset: unknown preset {config['preset']!r}; available:\n{groups.list_presets()}"]
    p = resolve_parameters(config)
    dup = set(config.get("parameters", {})) & set(config) - {"parameters"}
    if dup:
        errors.append(f"parameters: keys given twice: {sorted(dup)}")
    if exp.startswith("deviation") or exp == "large-deviation-suite":
        if any(l > p["n"] for l in p["l_values"]):
            errors.append("l_values: every l must satisfy l <= n")
    if exp == "torus-dichotomy":
        try:
            x0 = _torus_start(p)
        except (ValueError, ZeroDivisionError) as exc:
            return [f"x0: {exc}"]
        if x0.mode == "exact" and p["mode"] != "empirical":
            d = x0.dim
            if x0.q**d > torus.STATE_CAP:
                errors.append(
                    f"x0: exact state space q^d = {x0.q ** d} exceeds {torus.STATE_CAP}; "
                    "set \"mode\": \"empirical\" for this start"
                )
        empirical = x0.mode == "fixed" or p["mode"] == "empirical"
        if empirical and p["trials"] < 100 / p["t"] ** 2:
            errors.append(f"trials: need at least {int(np.ceil(100 / p['t'] ** 2))} for t={p['t']}")
    if exp == "invertibility-sweep" and p["r"] * p["k"] > 16:
        errors.append("r, k: k r must stay at desk scale (<= 16)")
    return errors


def resolve_parameters(config):
    exp = config["experiment"]
    merged = {k: copy.deepcopy(v[1]) for k, v in PARAMETERS[exp].items()}
    merged.update(config.get("parameters", {}))
    merged.update({k: v for k, v in config.items() if k in PARAMETERS[exp]})
    return merged


def resolve(config, seed=None, threads=None, out=None):
    """Fully resolved config echo (defaults filled in)."""
    errors = validate(config)
    if errors:
        raise ConfigError("\n".join(errors))
    res = {k: copy.deepcopy(v) for k, v in config.items() if k in ("experiment", "preset", "measure")}
    res["master_seed"] = int(seed if seed is not None else config.get("master_seed", 0))
    res["threads"] = int(threads if threads is not None else config.get("threads", 1))
    res["output_dir"] = str(out if out is not None else config.get("output_dir", "runs"))
    res["parameters"] = resolve_parameters(config)
    return res


def _measure(cfg):
    if "preset" in cfg:
        return groups.preset(cfg["preset"])
    if "measure" in cfg:
        return groups.measure_from_json(cfg["measure"])
    return None


def _torus_start(p):
    x = p["x0"].strip()
    if x.startswith("sqrt:"):
        return torus.sqrt_surrogate([int(s) for s in x[5:].split(",")], bits=p["bits"])
    return torus.parse_point(x)


def _rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _stream(cfg, k):
    """Independent sub-seed k of the master seed."""
    return int(np.random.SeedSequence(cfg["master_seed"], spawn_key=(10**6 + k,)).generate_state(1, np.uint64)[0] >> 1)


def _rank(mu, cfg, p):
    if p.get("r"):
        return p["r"], None
    prof = walk.estimate_lyapunov(mu, 200, 400, _stream(cfg, 1), cfg["threads"])
    return walk.detect_proximal_dimension(prof), prof


# --- experiments ----------------------------------------------------------

def _exp_lyapunov(mu, cfg, p):
    prof = walk.estimate_lyapunov(mu, p["n"], p["trials"], cfg["master_seed"], cfg["threads"])
    try:
        r = walk.detect_proximal_dimension(prof, p["equal_tol"], p["gap_min"])
    except walk.InconclusiveError:
        r = "inconclusive"
    summary = {
        "profile": prof.to_json(), "sum_lambda": float(prof.lam.sum()), "stderr_total": prof.stderr_total,
        "proximal_dimension": r,
    }
    csvs = {"profile.csv": _rows_csv(["k", "lambda", "stderr"], [(k + 1, l, s) for k, (l, s) in enumerate(zip(prof.lam, prof.stderr))])}
    return summary, csvs


def _invariance_checks(mu, points):
    """d_H(V, J V) for the complex / quaternionic structures of the realified presets."""
    label = mu.label
    if label == "slc2-in-sl4":
        Js = {"i": groups.complex_structure(2)}
    elif label == "slh2-in-sl8":
        Js = {k: groups.right_multiplication(2, groups.QUATERNION_UNITS[k]) for k in "ijk"}
    else:
        return {}
    dev = np.array([[walk.hausdorff_to_action(V, J) for J in Js.values()] for V in points]).max(axis=1)
    return {"structure_defect_max": float(dev.max()), "structure_fraction_below_1e-3": float(np.mean(dev < 1e-3))}


def _exp_limit_set(mu, cfg, p):
    r, _ = _rank(mu, cfg, p)
    L = walk.sample_limit_set(mu, r, p["n"], p["trials"], cfg["master_seed"], cfg["threads"])
    nn = walk.nearest_limit_distances(L, mu.atoms)
    summary = {
        "r": r, "points": len(L.points), "degenerate_excluded": L.degenerate_excluded,
        "nearest_neighbour_max": float(nn.max()), "nearest_neighbour_radius": 0.1,
        "nearest_neighbour_fraction": float(np.mean(nn <= 0.1)),
        **_invariance_checks(mu, L.points),
    }
    rows = [(i, *V.frame.ravel()) for i, V in enumerate(L.points)]
    d = mu.dim
    header = ["point"] + [f"f{a}_{b}" for a in range(d) for b in range(r)]
    return summary, {"limit_points.csv": _rows_csv(header, rows)}


def _exp_property_s(mu, cfg, p):
    r, _ = _rank(mu, cfg, p)
    L = walk.sample_limit_set(mu, r, p["n"], p["trials"], cfg["master_seed"], cfg["threads"])
    rep = walk.test_property_S(L, p["search_budget"], _stream(cfg, 2), p["threshold"], p["steps"])
    summary = {"r": r, **{k: v for k, v in rep.to_json().items() if k != "witness_W"}}
    W = rep.witness_W.frame
    rows = [(i, *W[i]) for i in range(W.shape[0])]
    return summary, {"witness_W.csv": _rows_csv(["row"] + [f"c{j}" for j in range(W.shape[1])], rows)}


def _exp_lambda_split(mu, cfg, p):
    r, prof = _rank(mu, cfg, p)
    if prof is None:
        prof = walk.estimate_lyapunov(mu, 200, 400, _stream(cfg, 1), cfg["threads"])
    D = comb(mu.dim, r)
    pis = walk.estimate_pi_gamma(mu, r, p["n"], p["trials"] or max(3 * D, 300), cfg["master_seed"], cfg["threads"])
    split = walk.compute_lambda_split(pis, r, mu)
    k_plus, k_zero = split.dims
    rate_plus = walk.estimate_lyapunov(split.block_measure(mu, "plus"), 200, 400, _stream(cfg, 3), cfg["threads"]).lam[0]
    rate_zero = (
        walk.estimate_lyapunov(split.block_measure(mu, "zero"), 200, 400, _stream(cfg, 4), cfg["threads"]).lam[0]
        if k_zero else None
    )
    lam = prof.lam
    summary = {
        "r": r, "D": D, "dim_plus": k_plus, "dim_zero": k_zero, "residual": split.residual, "flags": list(split.flags),
        "rate_plus": float(rate_plus), "target_plus": float(r * lam[0]),
        "rate_zero": None if rate_zero is None else float(rate_zero),
        "bound_zero": float((r - 1) * lam[0] + lam[r]),
        "lambda_hat": lam.tolist(),
    }
    rows = [("plus", rate_plus, r * lam[0])] + ([("zero", rate_zero, (r - 1) * lam[0] + lam[r])] if k_zero else [])
    return summary, {"rates.csv": _rows_csv(["block", "rate", "reference"], rows)}


def _targets(mu, cfg, p, r):
    if p.get("targets", "adversarial") == "adversarial":
        return deviation.adversarial_pair(mu, r, budget=p.get("search_budget", 32), seed=_stream(cfg, 5), threads=cfg["threads"])
    rng = np.random.default_rng(_stream(cfg, 5))
    return Subspace.random(mu.dim, r, rng), Subspace.random(mu.dim, mu.dim - r, rng)


def _dev_cfg(cfg, p, V, W):
    return deviation.DeviationConfig(
        omega=p["omega"], n=p["n"], l_values=tuple(p["l_values"]), trials=p["trials"], V=V, W=W,
        horizons=tuple(p.get("horizons", ())), seed=cfg["master_seed"], threads=cfg["threads"],
    )


def _exp_deviation(which):
    fn = {
        "i": deviation.verify_gap_nonconcentration,
        "ii": deviation.verify_contraction,
        "iii": deviation.verify_vplus_nonconcentration,
    }[which]

    def run(mu, cfg, p):
        r, _ = _rank(mu, cfg, p)
        V, W = _targets(mu, cfg, p, r)
        rep = fn(mu, _dev_cfg(cfg, p, V, W))
        return {"r": r, **rep.summary()}, {"decay.csv": rep.to_csv()}

    return run


def _exp_large_deviation(mu, cfg, p):
    r, _ = _rank(mu, cfg, p)
    plus = None
    if r > 1:
        plus, _ = deviation.lambda_plus_measure(mu, r, seed=_stream(cfg, 6), threads=cfg["threads"])
    out = deviation.verify_large_deviation_suite(mu, _dev_cfg(cfg, p, None, None), plus_measure=plus)
    summary, csvs = {"r": r}, {}
    for key in ("i", "ii", "iii"):
        rep = out.get(key)
        summary[key] = None if rep is None else rep.summary()
        if rep is not None:
            csvs[f"decay_{key}.csv"] = rep.to_csv()
    if "notice" in out:
        summary["notice"] = out["notice"]
    return summary, csvs


def _exp_holder(mu, cfg, p):
    r, _ = _rank(mu, cfg, p)
    rng = np.random.default_rng(_stream(cfg, 7))
    _, W = deviation.adversarial_pair(mu, r, budget=p["search_budget"], seed=_stream(cfg, 5), threads=cfg["threads"])
    probes = [W] + [Subspace.random(mu.dim, mu.dim - r, rng) for _ in range(p["random_probes"])]
    start = Subspace.random(mu.dim, r, rng)
    pts = walk.stationary_sample(mu, r, p["burn_in"], p["trials"], start, cfg["master_seed"], cfg["threads"])
    rep = deviation.verify_holder_regularity(pts, probes)
    rows = [(float(rho), j, float(c), float(u)) for j in range(len(probes)) for rho, c, u in zip(rep.rho_grid, rep.cdf[j], rep.cdf_upper[j])]
    return {"r": r, **rep.summary()}, {"cdf.csv": _rows_csv(["rho", "probe", "cdf", "wilson_hi"], rows)}


def _exp_torus(mu, cfg, p):
    x0 = _torus_start(p)
    if p["mode"] == "empirical" and x0.mode == "exact":
        x0 = torus.fixed_point(x0.fractions(), bits=p["bits"])
    rep = torus.dichotomy_experiment(mu, x0, p["t"], p["horizons"], p["N"], trials=p["trials"], seed=cfg["master_seed"], M=p["M"])
    return rep.summary(), {"fourier.csv": rep.to_csv()}


def _exp_invertibility(mu, cfg, p):
    summary = torus.invertibility_sweep(p["tuples"], cfg["master_seed"], k=p["k"], r=p["r"])
    return summary, {"sweep.csv": _rows_csv(list(summary), [tuple(summary.values())])}


RUNNERS = {
    "lyapunov": _exp_lyapunov,
    "limit-set": _exp_limit_set,
    "property-s": _exp_property_s,
    "lambda-split": _exp_lambda_split,
    "deviation-i": _exp_deviation("i"),
    "deviation-ii": _exp_deviation("ii"),
    "deviation-iii": _exp_deviation("iii"),
    "large-deviation-suite": _exp_large_deviation,
    "holder": _exp_holder,
    "torus-dichotomy": _exp_torus,
    "invertibility-sweep": _exp_invertibility,
}


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sha256(text):
    return hashlib.sha256(text.encode()).hexdigest()


def run(config, seed=None, threads=None, out=None, check=False, expected_path=EXPECTED_PATH):
    """
    Execute one experiment and write summary.json, *.csv and manifest.json
    into the output directory.  With ``check`` the summary is compared to
    the matching expected-results entry (CheckFailure on mismatch).
    """
    cfg = resolve(config, seed, threads, out)
    mu = _measure(cfg)
    t0 = time.perf_counter()
    summary, csvs = RUNNERS[cfg["experiment"]](mu, cfg, cfg["parameters"])
    wall = time.perf_counter() - t0
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_text = _dumps(summary)
    (out_dir / "summary.json").write_text(summary_text)
    for name, text in csvs.items():
        (out_dir / name).write_text(text)
    manifest = {
        "config": cfg,
        "engine_version": __version__,
        "wall_time_s": round(wall, 3),
        "summary": str(out_dir / "summary.json"),
        "summary_sha256": sha256(summary_text),
        "csv_sha256": {name: sha256(text) for name, text in sorted(csvs.items())},
    }
    if check:
        manifest["check"] = check_against_expected(cfg, json.loads(summary_text), manifest["csv_sha256"], expected_path)
    (out_dir / "manifest.json").write_text(_dumps(manifest))
    if check and not manifest["check"]["passed"]:
        raise CheckFailure("; ".join(manifest["check"]["failures"]))
    return manifest


# --- expected results ---------------------------------------------------------

def config_key(cfg):
    """Identity of a resolved config for regression lookup (paths and threads excluded)."""
    keep = {k: cfg[k] for k in ("experiment", "preset", "measure", "master_seed", "parameters") if k in cfg}
    return sha256(json.dumps(keep, sort_keys=True))


def _lookup(obj, path):
    for part in path.split("."):
        obj = obj[int(part)] if isinstance(obj, list) else obj[part]
    return obj


def _close(a, b, tol):
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(a, bool):
        return abs(a - b) <= tol * max(1.0, abs(b))
    return a == b


def load_expected(path=EXPECTED_PATH):
    p = Path(path)
    return json.loads(p.read_text()) if p.exists() else {"entries": {}}


def check_against_expected(cfg, summary, csv_sha, path=EXPECTED_PATH):
    key = config_key(cfg)
    entries = load_expected(path)["entries"]
    match = [(name, e) for name, e in entries.items() if e["config_key"] == key]
    if not match:
        return {"passed": False, "entry": None, "failures": ["no expected-results entry for this config"]}
    name, entry = match[0]
    failures = []
    for field, spec in entry["values"].items():
        got = _lookup(summary, field)
        if not _close(got, spec["value"], spec.get("tol", 0.0)):
            failures.append(f"{field}: got {got!r}, expected {spec['value']!r} (tol {spec.get('tol', 0.0)})")
    for fname, digest in entry.get("csv_sha256", {}).items():
        if csv_sha.get(fname) != digest:
            failures.append(f"{fname}: checksum differs from the pinned run")
    return {"passed": not failures, "entry": name, "failures": failures}


def pin(name, config, fields, command, tol=1e-9, csv_checksums=False, seed=None, out="runs/pin", path=EXPECTED_PATH):
    """Run ``config`` and record the listed summary fields as an expected-results entry."""
    manifest = run(config, seed=seed, out=out)
    summary = json.loads(Path(manifest["summary"]).read_text())
    try:
        values = {f: _lookup(summary, f) for f in fields}
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"field not found in the summary: {exc}") from exc
    data = load_expected(path)
    cfg = manifest["config"]
    entry = {
        "config_key": config_key(cfg),
        "config": {k: v for k, v in cfg.items() if k not in ("output_dir", "threads")},
        "oracle": {
            "seed": cfg["master_seed"],
            "date": _dt.date.today().isoformat(),
            "command": command,
            "engine_version": __version__,
        },
        "values": {f: {"value": v, "tol": 0.0 if isinstance(v, (str, bool)) else tol} for f, v in values.items()},
    }
    if csv_checksums:
        entry["csv_sha256"] = manifest["csv_sha256"]
    data["entries"][name] = entry
    Path(path).write_text(_dumps(data))
    return entry


def list_presets():
    return groups.list_presets()
