"""
The command-line pipeline, driven from Python
=============================================

"""

# Each subcommand is reachable through main(argv), which returns the exit
# code the shell would see.
import json
import tempfile
from pathlib import Path

from affectfusion.cli import main

work = Path(tempfile.mkdtemp())
main(["synth", "--task", "va", "--out", str(work / "data"), "--num-sequences", "4", "--T", "96"])

config = {"task": "va", "model": "mfn", "hidden": 12, "epochs": 5, "seq_len": 32, "stride": 32}
(work / "cfg.json").write_text(json.dumps(config))
main(["train", "--config", str(work / "cfg.json"), "--data", str(work / "data"),
      "--out", str(work / "run")])
print((work / "run" / "metrics.csv").read_text())

main(["eval", "--checkpoint", str(work / "run" / "best.sfck"), "--data", str(work / "data")])
main(["predict", "--checkpoint", str(work / "run" / "best.sfck"), "--data", str(work / "data"),
      "--out", str(work / "pred")])
print(*(work / "pred" / "seq000.pred.csv").read_text().splitlines()[:4], sep="\n")

# Bad input gets a diagnostic and a nonzero code instead of a traceback.
print("exit code for an unknown key:",
      main(["train", "--config", str(work / "cfg.json"), "--set", "colour=blue"]))
