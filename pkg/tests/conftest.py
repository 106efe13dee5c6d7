from __future__ import annotations

import stat
import textwrap
from pathlib import Path

import numpy as np
import pytest

from vcat_sim.dataset import ColumnSpec, Schema, TrialDataset
from vcat_sim.experiments import CategoricalCovariate, SimSpec, simulate_trial

# One mock external generator script is shared by the whole suite. It
# bootstrap-resamples its training file, so it inherits the membership
# property of the native bootstrap generator and stays dependency-free.
MOCK_GENERATOR = textwrap.dedent(
    """\
    #!/usr/bin/env python3
    import argparse, csv, random, shutil, sys
    from pathlib import Path

    def main():
        p = argparse.ArgumentParser()
        sub = p.add_subparsers(dest="cmd", required=True)
        f = sub.add_parser("fit")
        f.add_argument("--train", required=True)
        f.add_argument("--schema", required=True)
        f.add_argument("--model-dir", required=True)
        f.add_argument("--seed", type=int, required=True)
        s = sub.add_parser("sample")
        s.add_argument("--model-dir", required=True)
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--out", required=True)
        a = p.parse_args()
        md = Path(a.model_dir)
        if a.cmd == "fit":
            shutil.copy(a.train, md / "train.csv")
            shutil.copy(a.schema, md / "schema.json")
            return 0
        rows = list(csv.reader((md / "train.csv").open()))
        header, body = rows[0], rows[1:]
        rng = random.Random(a.seed)
        with open(a.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for _ in range(a.n):
                w.writerow(rng.choice(body))
        return 0

    if __name__ == "__main__":
        sys.exit(main())
    """
)


def write_executable(path: Path, body: str) -> Path:
    path.write_text(body)
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return path


@pytest.fixture(scope="session")
def mock_generator(tmp_path_factory) -> Path:
    return write_executable(tmp_path_factory.mktemp("mockgen") / "mockgen.py", MOCK_GENERATOR)


@pytest.fixture(scope="session")
def trial() -> TrialDataset:
    """Moderate simulated trial shared by read-only tests."""
    spec = SimSpec(
        m0=300,
        m1=300,
        p_treated=0.3,
        p_control_start=0.3,
        drift=0.0,
        numeric_covariates=2,
        categorical_covariates=(CategoricalCovariate("region", ("eu", "sa", "asia")),),
    )
    return simulate_trial(spec, seed=11)


def binary_schema(with_order: bool = False) -> Schema:
    specs = [ColumnSpec("outcome", "outcome"), ColumnSpec("arm", "arm")]
    if with_order:
        specs.append(ColumnSpec("enrolled", "enrolment_order"))
    return Schema(specs)


def binary_trial(treated: list[int], control: list[int]) -> TrialDataset:
    """Outcome-only trial: controls enrolled first, then treated."""
    outcome = np.array(control + treated, dtype=np.float64)
    arm = np.array([0] * len(control) + [1] * len(treated), dtype=np.float64)
    return TrialDataset(binary_schema(), {"outcome": outcome, "arm": arm})
