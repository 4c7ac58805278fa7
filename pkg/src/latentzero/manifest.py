"""Run manifest: config hash, checkpoints, produced files, phase timings.

Timings are the one field excluded from reproducibility comparisons, so
they live under their own key.
"""

from __future__ import annotations

import json
import os


def collect_files(out_dir, exclude=("manifest.json",)):
    files = []
    for root, _, names in os.walk(out_dir):
        for name in names:
            rel = os.path.relpath(os.path.join(root, name), out_dir)
            if rel not in exclude:
                files.append(rel)
    return sorted(files)


def write_manifest(out_dir, config_hash, checkpoints, phase_seconds):
    manifest = {
        "config_hash": config_hash,
        "checkpoints": sorted(os.path.relpath(c, out_dir) for c in checkpoints),
        "files": collect_files(out_dir),
        "timing": {k: round(v, 3) for k, v in phase_seconds.items()},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


def manifests_equal_excluding_timing(a, b):
    a = {k: v for k, v in a.items() if k != "timing"}
    b = {k: v for k, v in b.items() if k != "timing"}
    return a == b
