#!/usr/bin/env python3
"""End-to-end checks of the ptt command line: report schemas, determinism, exit codes."""

import json
import pathlib
import subprocess
import sys
import tempfile
import unittest

import jsonschema
from referencing import Registry, Resource

PTT = ""
SCHEMAS = pathlib.Path()
SMALL = {"model_dim": 24, "heads": 4, "encoder_layers": 1, "synthetic": {"points": 128}}


def load_registry():
    resources = []
    for path in sorted(SCHEMAS.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], Resource.from_contents(schema)))
    return Registry().with_resources(resources)


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = pathlib.Path(cls.tmp.name)
        cls.registry = load_registry()
        cls.config = cls.dir / "small.json"
        cls.config.write_text(json.dumps(SMALL))
        cls.pair = cls.dir / "pair"
        out = cls.run_ok("--config", str(cls.config), "gen", str(cls.pair))
        cls.gen_report = json.loads(out)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    @staticmethod
    def ptt(*args):
        return subprocess.run([PTT, *args], capture_output=True, text=True, timeout=300)

    @classmethod
    def run_ok(cls, *args):
        r = cls.ptt(*args)
        if r.returncode != 0:
            raise AssertionError(f"{args} exited {r.returncode}: {r.stderr}")
        return r.stdout

    def validate(self, name, doc):
        schema = self.registry.contents(f"ptt/{name}.schema.json")
        jsonschema.Draft202012Validator(schema, registry=self.registry).validate(doc)

    def register_args(self, *extra):
        return ("--config", str(self.config), "register", str(self.pair / "source.xyz"),
                str(self.pair / "target.xyz"), *extra)

    def test_gen_report(self):
        self.validate("gen", self.gen_report)
        self.assertEqual(self.gen_report["points"], 128)
        again = self.dir / "pair_again"
        self.run_ok("--config", str(self.config), "gen", str(again))
        for name in ("source.xyz", "target.xyz", "gt.txt"):
            self.assertEqual((self.pair / name).read_bytes(), (again / name).read_bytes())

    def test_register_reports(self):
        with_gt = self.run_ok(*self.register_args("--gt", str(self.pair / "gt.txt")))
        self.assertEqual(with_gt, self.run_ok(*self.register_args("--gt", str(self.pair / "gt.txt"))))
        doc = json.loads(with_gt)
        self.validate("register", doc)
        self.assertEqual(doc["decoder"], "random-init")
        self.assertIsNotNone(doc["metrics"])

        plain = json.loads(self.run_ok(*self.register_args()))
        self.validate("register", plain)
        self.assertIsNone(plain["metrics"])
        self.assertIsNone(plain["losses"])

        oracle = json.loads(self.run_ok(*self.register_args("--gt", str(self.pair / "gt.txt"), "--oracle")))
        self.validate("register", oracle)
        self.assertEqual(oracle["decoder"], "oracle")
        self.assertLess(oracle["metrics"]["rre_deg"], 1e-6)
        self.assertTrue(oracle["metrics"]["success_rmse"])

    def test_weights_round_trip(self):
        weights = self.dir / "w.pttw"
        self.run_ok("--config", str(self.config), "init-weights", str(weights))
        from_file = json.loads(self.run_ok(*self.register_args("--weights", str(weights))))
        random = json.loads(self.run_ok(*self.register_args()))
        self.assertEqual(from_file["decoder"], "weights-file")
        self.assertEqual(from_file["transform"], random["transform"])
        self.assertEqual(from_file["overlap_scores"], random["overlap_scores"])

        truncated = self.dir / "truncated.pttw"
        data = weights.read_bytes()
        truncated.write_bytes(data[: len(data) // 2])
        r = self.ptt(*self.register_args("--weights", str(truncated)))
        self.assertEqual(r.returncode, 3, r.stderr)
        self.assertIn("weights: ", r.stderr)

    def test_tree_report(self):
        out = self.run_ok("tree", str(self.pair / "source.xyz"))
        self.assertEqual(out, self.run_ok("tree", str(self.pair / "source.xyz")))
        doc = json.loads(out)
        self.validate("tree", doc)
        self.assertTrue(doc["invariants_ok"])
        self.assertEqual(doc["layers"][-1]["count"], 128)

    def test_ply_input(self):
        xyz = self.pair / "source.xyz"
        ply = self.dir / "source.ply"
        rows = [line for line in xyz.read_text().splitlines() if line.strip() and not line.startswith("#")]
        header = ["ply", "format ascii 1.0", f"element vertex {len(rows)}",
                  "property double x", "property double y", "property double z", "end_header"]
        ply.write_text("\n".join(header + rows) + "\n")
        a = json.loads(self.run_ok("tree", str(xyz)))
        b = json.loads(self.run_ok("tree", str(ply)))
        self.assertEqual(a["layers"], b["layers"])

    def test_bench_report(self):
        args = ("--config", str(self.config), "bench", "--sizes", "50,100,200,400")
        out = self.run_ok(*args)
        self.assertEqual(out, self.run_ok(*args))
        doc = json.loads(out)
        self.validate("bench", doc)
        self.assertEqual(len(doc["trials"]), 8)
        for t in doc["trials"]:
            self.assertEqual(t["count"], t["recount"])
            if t["mechanism"] == "pta":
                self.assertTrue(t["within_bound"])
        self.assertAlmostEqual(doc["fit"]["dense"]["slope"], 2.0, places=9)

        csv = self.run_ok("--format", "csv", *args).splitlines()
        self.assertEqual(csv[0], "n,mechanism,count,seconds,bytes")
        self.assertEqual(len(csv), 9)
        counts = {(int(row.split(",")[0]), row.split(",")[1]): int(row.split(",")[2]) for row in csv[1:]}
        for t in doc["trials"]:
            self.assertEqual(counts[(t["n"], t["mechanism"])], t["count"])

    def test_selftest(self):
        r = self.ptt("selftest")
        self.assertEqual(r.returncode, 0, r.stderr)
        table, brace, rest = r.stdout.partition("{")
        self.assertTrue(table.startswith("check"))
        doc = json.loads(brace + rest)
        self.validate("selftest", doc)
        self.assertTrue(doc["all_passed"])

        faulty = self.ptt("selftest", "--inject-region-fault")
        self.assertEqual(faulty.returncode, 1)
        doc = json.loads("{" + faulty.stdout.partition("{")[2])
        self.validate("selftest", doc)
        failed = [c["name"] for c in doc["checks"] if not c["passed"]]
        self.assertEqual(failed, ["region_soundness"])

        out = self.dir / "selftest.json"
        self.run_ok("selftest", "--out", str(out))
        self.validate("selftest", json.loads(out.read_text()))

    def test_config_round_trip(self):
        printed = self.run_ok("--config", str(self.config), "--seed", "5", "--print-config")
        doc = json.loads(printed)
        self.validate("config", doc)
        self.assertEqual(doc["seed"], 5)
        self.assertEqual(doc["model_dim"], 24)
        saved = self.dir / "printed.json"
        saved.write_text(printed)
        self.assertEqual(self.run_ok("--config", str(saved), "--print-config"), printed)
        self.validate("config", json.loads(self.run_ok("--print-config")))

    def test_exit_codes(self):
        bad_dim = self.dir / "bad_dim.json"
        bad_dim.write_text('{"model_dim": 256}')
        malformed = self.dir / "malformed.xyz"
        malformed.write_text("0 0 0\n1 2\n")
        cases = [
            (("--no-such-flag",), 2),
            (("register",), 2),
            (("--config", str(bad_dim), "selftest"), 2),
            (("tree", str(malformed)), 3),
            (self.register_args("--oracle"), 2),
            (("--config", str(self.config), "register", str(malformed), str(self.pair / "target.xyz")), 3),
        ]
        for args, code in cases:
            with self.subTest(args=args):
                r = self.ptt(*args)
                self.assertEqual(r.returncode, code, r.stderr)
                if code != 0:
                    self.assertNotEqual(r.stderr, "")


if __name__ == "__main__":
    if len(sys.argv) < 3:
        sys.exit("usage: cli_test.py <ptt binary> <schemas dir>")
    PTT = sys.argv[1]
    SCHEMAS = pathlib.Path(sys.argv[2])
    unittest.main(argv=[sys.argv[0]] + sys.argv[3:], verbosity=2)
