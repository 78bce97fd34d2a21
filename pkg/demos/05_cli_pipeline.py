"""The whole pipeline through the command line, as a shell user would run it.

    python demos/05_cli_pipeline.py [work_dir]

Equivalent shell session::

    xray-fusion simulate --config scene.yaml --out seq
    xray-fusion track --in seq --mode greedy --out tracks.json
    xray-fusion fuse --in seq --tracks tracks.json --strategy geometry --subsample-factor inf --seed 0 --out fused
    xray-fusion eval --fused fused --truth seq --coverage-radius 0.1 --tracks tracks.json --out report.json
    xray-fusion export-ply --in fused --frame 0 --out frame0.ply --highlight-added
"""

import sys
import tempfile
from pathlib import Path

from xray_fusion.cli import main as cli

SCENE = """\
preset: orbit
n_frames: 20
points_per_m2: 100
seed: 1
"""


def run(*args):
    print("$ xray-fusion " + " ".join(map(str, args)))
    cli([str(a) for a in args])


def main(work):
    work = Path(work)
    (work / "scene.yaml").write_text(SCENE)
    run("simulate", "--config", work / "scene.yaml", "--out", work / "seq")
    run("track", "--in", work / "seq", "--mode", "greedy", "--out", work / "tracks.json")
    run("fuse", "--in", work / "seq", "--tracks", work / "tracks.json", "--strategy", "geometry",
        "--subsample-factor", "inf", "--seed", "0", "--out", work / "fused")
    run("eval", "--fused", work / "fused", "--truth", work / "seq", "--coverage-radius", "0.1",
        "--tracks", work / "tracks.json", "--out", work / "report.json")
    run("export-ply", "--in", work / "fused", "--frame", "0", "--out", work / "frame0.ply", "--highlight-added")
    print(f"outputs in {work}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="xray-cli-"))
