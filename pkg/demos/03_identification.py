"""Recovering a dipole operator from a handful of readings.

Uses the command-line harness end to end on a short-horizon problem: the
problem file is public, the operator to be found sits in a separate oracle
file that only the measurement step reads.
"""
# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp())
config = work / "config.json"
config.write_text(json.dumps({"steps": 240, "restarts": 20}))


def dipoleid(*args):
    cmd = [sys.executable, "-m", "dipoleid.cli", *map(str, args)]
    print("$ dipoleid", " ".join(map(str, args)), flush=True)
    subprocess.run(cmd, check=True)


# %%
dipoleid("generate-problem", "--dim", 2, "--seed", 3, "--final-time", 60,
         "--config", config, "--out", work / "problem.json", "--oracle", work / "oracle.json")
dipoleid("precompute", work / "problem.json", "--out", work / "fields.json")
dipoleid("measure", work / "problem.json", work / "fields.json",
         "--oracle", work / "oracle.json", "--out", work / "meas.json")
dipoleid("identify", work / "problem.json", work / "fields.json", work / "meas.json",
         "--truth", work / "oracle.json", "--out", work / "report.json")

# %%
report = json.loads((work / "report.json").read_text())
print("alpha:", [round(a, 6) for a in report["alpha"]])
print("final cost of each restart:", [f"{c:.1e}" for c in report["restart_costs"]])

# %% [markdown]
# Noisy readings: the residual settles near L sigma^2.

# %%
dipoleid("measure", work / "problem.json", work / "fields.json", "--oracle", work / "oracle.json",
         "--noise-sigma", 1e-3, "--seed", 1, "--out", work / "noisy.json")
dipoleid("identify", work / "problem.json", work / "fields.json", work / "noisy.json",
         "--truth", work / "oracle.json", "--out", work / "noisy_report.json")
dipoleid("export-fields", work / "fields.json", "--out", work / "csv")
print(sorted(p.name for p in (work / "csv").iterdir()))
