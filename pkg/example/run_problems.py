import os

from contactmae.cli import run

FOLDER = "example/problems"
OUT = "example/out"

runs = [
    ("analyze", "hyperbolic.yaml"),
    ("reconstruct", "hyperbolic.yaml"),
    ("analyze", "goursat.json"),
    ("analyze", "nform.yaml"),
    ("reconstruct", "non_normal.yaml"),
    ("reconstruct", "elliptic.yaml"),
    ("solve", "paraboloid.yaml"),
    ("solve", "worked_monge.yaml"),
    ("jet", "wave_jet.yaml"),
]

for command, filename in runs:
    out_dir = os.path.join(OUT, f"{command}_{filename.split('.')[0]}")
    report = run(command, os.path.join(FOLDER, filename), out_dir)
    status = "ok" if report.error is None else report.error["type"]
    print(f"{command:12s}{filename:22s}{status}")
