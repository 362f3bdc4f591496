# %% [markdown]
# # Command-line workflow
#
# Train from a bundled preset, score the checkpoint, solve the matching LP
# and merge the results into one comparison table.

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp())


def run(*args):
    cmd = [sys.executable, "-m", "redistribution", *args, "--out", str(out)]
    print("$", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


run("train", "--preset", "ow-homogeneous-linear-n3p1", "--epochs", "5000")
run("evaluate", str(out / "homogeneous-OW-linear-n3-p1-s0" / "checkpoint.json"))
run("oracle", "--n", "3", "--samples", "5000")

# %%
print((out / "table.csv").read_text())
