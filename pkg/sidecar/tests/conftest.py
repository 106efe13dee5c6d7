import json
import sys
import textwrap
import types

import pytest


def _wrapper(path, default_model: str) -> str:
    # single-file executable, as the host protocol passes one argv[0]
    path.write_text(textwrap.dedent(f"""\
        #!{sys.executable}
        import sys
        from gen_sidecar.cli import main
        sys.exit(main(sys.argv[1:], default_model={default_model!r}))
    """))
    path.chmod(0o755)
    return str(path)


@pytest.fixture(scope="session")
def gan_exe(tmp_path_factory):
    return _wrapper(tmp_path_factory.mktemp("exe-gan") / "sidecar-gan", "gan")


@pytest.fixture(scope="session")
def vae_exe(tmp_path_factory):
    return _wrapper(tmp_path_factory.mktemp("exe-vae") / "sidecar-vae", "vae")


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    """A small schema.json and train.csv pair; read-only across tests."""
    root = tmp_path_factory.mktemp("toy")
    schema = root / "schema.json"
    schema.write_text(json.dumps({"columns": [
        {"name": "age", "kind": "numeric"},
        {"name": "region", "kind": "categorical", "categories": ["north", "south"]},
        {"name": "outcome", "kind": "outcome"},
    ]}))
    train = root / "train.csv"
    lines = ["age,region,outcome"]
    for i in range(30):
        age = 40 + (i * 7) % 25 + 0.5
        region = "north" if i % 2 == 0 else "south"
        lines.append(f"{age},{region},{1 if i % 3 == 0 else 0}")
    train.write_text("\n".join(lines) + "\n")
    return types.SimpleNamespace(root=root, schema=schema, train=train)
