#!/usr/bin/env python3
"""Run every otir subcommand end to end and validate the JSON reports.

usage: check_reports.py OTIR_EXE SCHEMA_DIR WORK_DIR
"""

import csv
import json
import pathlib
import random
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource


def load_schemas(schema_dir):
    resources = []
    schemas = {}
    for path in sorted(schema_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        resources.append((doc["$id"], Resource.from_contents(doc)))
        schemas[path.name] = doc
    return schemas, Registry().with_resources(resources)


def run(exe, *args, expect=0):
    proc = subprocess.run([str(exe), *map(str, args)], capture_output=True, text=True)
    if proc.returncode != expect:
        sys.exit(
            f"otir {' '.join(map(str, args))}: exit {proc.returncode}, expected {expect}\n"
            f"stdout:\n{proc.stdout}\nstderr:\n{proc.stderr}"
        )
    return proc


def check(report_path, schema, registry):
    doc = json.loads(report_path.read_text())
    jsonschema.Draft202012Validator(schema, registry=registry).validate(doc)
    return doc


def strip_metadata(path):
    doc = json.loads(path.read_text())
    doc.pop("metadata", None)
    return doc


def main():
    exe, schema_dir, work = (pathlib.Path(a) for a in sys.argv[1:4])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schemas, registry = load_schemas(schema_dir)

    sim_cfg = work / "simulate.ini"
    sim_cfg.write_text(
        "[simulate]\nreplications = 2\nbootstrap = 2\nseed = 11\nconstant_grid = 30\n"
        "[scenario:m1_0.2_3_a1]\nn = 300\n"
    )
    run(exe, "simulate", "--config", sim_cfg, "--out", work / "sim")
    manifest = check(work / "sim" / "manifest.json", schemas["manifest.schema.json"], registry)
    assert abs(manifest["scenarios"][0]["v0"] - 19.155) < 5e-4
    with open(work / "sim" / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["estimand"] for r in rows] == ["beta1", "beta2", "beta3", "V0"], rows
    cohort = work / "sim" / "cohort_m1_0.2_3_a1.csv"

    run_cfg = work / "run.ini"
    run_cfg.write_text(
        "[bootstrap]\nreplicates = 4\nseed = 3\n"
        "[bandwidth]\ncv_gamma1 = 0.75, 1\ncv_gamma2 = 1\ncv_folds = 2\n"
        "[refine]\na1 = 2\n"
    )
    run(exe, "fit", "--config", run_cfg, "--data", cohort, "--out", work / "fit")
    fit = check(work / "fit" / "fit.json", schemas["fit.schema.json"], registry)
    assert len(fit["coefficients"]) == 3
    run(exe, "fit", "--config", run_cfg, "--data", cohort, "--out", work / "fit2", "--threads", "4")
    assert strip_metadata(work / "fit" / "fit.json") == strip_metadata(work / "fit2" / "fit.json")
    assert (work / "fit" / "assignments.csv").read_bytes() == (work / "fit2" / "assignments.csv").read_bytes()

    eval_cfg = work / "evaluate.ini"
    eval_cfg.write_text(
        "[bootstrap]\nreplicates = 3\n"
        f"[evaluate]\nregimes = fitted:{work / 'fit' / 'fit.json'}, constant:1.5, observed\n"
    )
    run(exe, "evaluate", "--config", eval_cfg, "--data", cohort, "--out", work / "eval")
    ev = check(work / "eval" / "evaluate.json", schemas["evaluate.schema.json"], registry)
    assert len(ev["differences"]) == 3
    with open(work / "eval" / "bootstrap_values.csv") as f:
        assert next(csv.reader(f)) == ["regime", "replicate", "value"]

    run(exe, "cv", "--config", run_cfg, "--data", cohort, "--out", work / "cv")
    cv = check(work / "cv" / "cv.json", schemas["cv.schema.json"], registry)
    assert len(cv["table"]) == 2

    # Input errors exit 2 and name the row.
    bad = work / "bad.csv"
    bad.write_text("id,time,event,init_time,num:z\n1,5,1,1,0\n2,inf,1,1,0\n")
    proc = run(exe, "fit", "--data", bad, "--out", work / "bad", expect=2)
    assert "row 2" in proc.stderr, proc.stderr
    bad_cfg = work / "bad.ini"
    bad_cfg.write_text("[window]\na0 = 3\nunknown = 1\n")
    run(exe, "fit", "--config", bad_cfg, "--data", cohort, "--out", work / "bad", expect=2)
    bad_sim = work / "bad_sim.ini"
    bad_sim.write_text("[simulate]\nreplications = 2\n")
    run(exe, "simulate", "--config", bad_sim, "--out", work / "bad", expect=2)

    # A cohort where only two subjects reach a0: most resamples cannot be fitted.
    rng = random.Random(5)
    sparse = work / "sparse.csv"
    with open(sparse, "w") as f:
        f.write("id,time,event,init_time,num:z\n")
        for i in range(18):
            f.write(f"{i},{rng.uniform(0.1, 2.9)},1,,{rng.gauss(0, 1)}\n")
        f.write(f"18,20,1,0.5,{rng.gauss(0, 1)}\n19,25,1,1.5,{rng.gauss(0, 1)}\n")
    run(exe, "fit", "--data", sparse, "--bootstrap", "40", "--out", work / "sparse", expect=3)

    run(exe, "fit", "--bogus", expect=1)
    print("cli reports OK")


if __name__ == "__main__":
    main()
