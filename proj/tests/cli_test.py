"""End-to-end checks of the dwnet command-line tool."""

import filecmp
import json
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema

BINARY = Path(sys.argv.pop(1))
SOURCE = Path(sys.argv.pop(1))
SCHEMAS = SOURCE / "schemas"


def run(*args, cwd=None):
    return subprocess.run([str(BINARY), *map(str, args)], capture_output=True, text=True, cwd=cwd)


def validator(name):
    store = {}
    for f in SCHEMAS.glob("*.schema.json"):
        schema = json.loads(f.read_text())
        store[schema["$id"]] = schema
    registry = None
    try:
        from referencing import Registry, Resource

        registry = Registry().with_resources(
            (k, Resource.from_contents(v)) for k, v in store.items()
        )
        return jsonschema.Draft202012Validator(store[name], registry=registry)
    except ImportError:
        resolver = jsonschema.RefResolver.from_schema(store[name], store=store)
        return jsonschema.Draft202012Validator(store[name], resolver=resolver)


def tiny_config(dataset):
    return {
        "dataset": dataset,
        "model": "dwnet",
        "hcn": {
            "frames": 16, "joints": 15, "persons": 2, "widths": [4, 4, 4, 8, 8], "feature_dim": 8,
            "num_classes": 3,
            "sgd": {"learning_rate": 0.01, "epochs": 3, "batch_size": 8},
        },
        "bls": {"enhancement_nodes": 20, "ridge": 1e-3},
        "flat_bls": {"feature_nodes": 10, "enhancement_nodes": 40},
        "hcnbls": {"mappers": 2, "bls": {"enhancement_nodes": 20, "ridge": 1e-3}},
        "split": {"mode": "kfold", "folds": 2},
        "seed": 11,
        "output_dir": "out",
        "sweep": {"m_start": 10, "m_end": 30, "m_step": 10},
        "timing": {"reps": 10, "warmup": 1, "max_samples": 2},
    }


class Cli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def synth(self, out):
        r = run("synth", "--classes", 3, "--per-class", 4, "--frames", 20, "--seed", 5, "-o", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        return out

    def write_config(self, dataset):
        cfg = self.dir / "cfg.json"
        cfg.write_text(json.dumps(tiny_config(dataset)))
        return cfg

    def test_synth_is_byte_identical(self):
        a = self.synth(self.dir / "a")
        b = self.synth(self.dir / "b")
        for name in ("dataset.jsonl", "manifest.json"):
            self.assertTrue(filecmp.cmp(a / name, b / name, shallow=False), name)

    def test_eval_sweep_bench_train_and_report(self):
        self.synth(self.dir / "data")
        cfg = self.write_config({"kind": "jsonl", "path": "data/dataset.jsonl", "manifest": "data/manifest.json"})
        validator("run_config.schema.json").validate(json.loads(cfg.read_text()))

        r = run("eval", "-c", cfg)
        self.assertEqual(r.returncode, 0, r.stderr)
        out = self.dir / "out"
        for name in ("eval_report.json", "confusion.csv", "confusion_normalized.csv", "summary.txt"):
            self.assertTrue((out / name).is_file(), name)
        report = json.loads((out / "eval_report.json").read_text())
        validator("eval_report.schema.json").validate(report)
        self.assertEqual(report["num_folds"], 2)
        validator("run_config.schema.json").validate(report["config"])

        r = run("sweep", "-c", cfg)
        self.assertEqual(r.returncode, 0, r.stderr)
        sweep = json.loads((out / "sweep.json").read_text())
        validator("sweep.schema.json").validate(sweep)
        self.assertEqual([p["enhancement_nodes"] for p in sweep["points"]], [10, 20, 30])

        r = run("bench", "-c", cfg, "-o", self.dir / "bench")
        self.assertEqual(r.returncode, 0, r.stderr)
        timing = json.loads((self.dir / "bench" / "timing.json").read_text())
        validator("timing.schema.json").validate(timing)
        self.assertEqual(timing["models"], ["HCN", "BLS", "HCNBLS", "DWnet"])

        for model in ("dwnet", "hcn", "hcnbls", "bls-flat"):
            r = run("train", "-c", cfg, "--model", model, "-o", self.dir / "model" / model)
            self.assertEqual(r.returncode, 0, model + ": " + r.stderr)
            validator("run_config.schema.json").validate(
                json.loads((self.dir / "model" / model / "run_config.json").read_text()))

        r = run("report", out, "--fixtures", SOURCE / "fixtures" / "reference_tables.json")
        self.assertEqual(r.returncode, 0, r.stderr)
        report = json.loads((out / "eval_report.json").read_text())
        validator("eval_report.schema.json").validate(report)
        self.assertIn(report["reference"]["verdict"], ("consistent", "divergent"))

    def test_eval_is_deterministic(self):
        cfg = self.write_config({"kind": "synthetic",
                                 "synth": {"classes": 3, "sequences_per_class": 4, "frames": 20}})
        reports = []
        for name in ("r1", "r2"):
            r = run("eval", "-c", cfg, "-o", self.dir / name, "--model", "hcnbls")
            self.assertEqual(r.returncode, 0, r.stderr)
            reports.append((self.dir / name / "confusion.csv").read_bytes())
        self.assertEqual(reports[0], reports[1])

    def test_missing_dataset_is_named(self):
        cfg = self.write_config({"kind": "jsonl", "path": "/nonexistent/skeletons.jsonl"})
        r = run("eval", "-c", cfg)
        self.assertNotEqual(r.returncode, 0)
        self.assertIn("/nonexistent/skeletons.jsonl", r.stderr)

    def test_missing_config_is_named(self):
        r = run("eval", "-c", self.dir / "absent.json")
        self.assertNotEqual(r.returncode, 0)
        self.assertIn("absent.json", r.stderr)

    def test_unknown_flag_fails(self):
        r = run("eval", "-c", "x.json", "--frobnicate")
        self.assertNotEqual(r.returncode, 0)
        r = run("launch")
        self.assertNotEqual(r.returncode, 0)

    def test_bad_reps_is_rejected(self):
        dataset = {"kind": "synthetic", "synth": {"classes": 3, "sequences_per_class": 4}}
        data = tiny_config(dataset)
        data["timing"]["reps"] = 3
        cfg = self.dir / "cfg.json"
        cfg.write_text(json.dumps(data))
        r = run("bench", "-c", cfg)
        self.assertNotEqual(r.returncode, 0)
        self.assertIn("reps", r.stderr)

    def test_shipped_configs_validate(self):
        v = validator("run_config.schema.json")
        for f in (SOURCE / "configs").glob("*.json"):
            v.validate(json.loads(f.read_text()))


if __name__ == "__main__":
    unittest.main(verbosity=2)
