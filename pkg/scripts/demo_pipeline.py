"""
Run the full pipeline on the three built-in models and print the summaries.

    python scripts/demo_pipeline.py [out_root]
"""
import os
import sys

from phcharts.cli import report, run_pipeline
from phcharts.models import scenario_from_dict


def main(root="demo_runs"):
    for name in "ABC":
        out = os.path.join(root, name)
        run_pipeline(scenario_from_dict({"model": name}), None, out)
        print(report(out))


if __name__ == "__main__":
    main(*sys.argv[1:])
