import json

import numpy as np
import pytest

from cmatorus import config, snapshot
from cmatorus.grid import TorusGrid
from conftest import random_hermitian


@pytest.mark.parametrize("n,m", [(2, 8), (2, 16), (3, 8)])
def test_scalar_roundtrip(tmp_path, rng, n, m):
    grid = TorusGrid(n, m)
    u = rng.standard_normal(grid.shape)
    digest = snapshot.write_field(tmp_path / "u.bin", grid, u, role="u")
    back, g2 = snapshot.read_field(tmp_path / "u.bin")
    assert np.array_equal(back, u) and (g2.n, g2.m) == (n, m)
    side = json.loads((tmp_path / "u.bin.json").read_text())
    assert side["sha256"] == digest and side["role"] == "u" and side["kind"] == "scalar"


@pytest.mark.parametrize("n", [2, 3])
def test_hermitian_roundtrip(tmp_path, rng, n):
    grid = TorusGrid(n, 8)
    H = np.stack([random_hermitian(rng, n) for _ in range(grid.size)]).reshape(grid.shape + (n, n))
    snapshot.write_field(tmp_path / "h.bin", grid, H)
    back, _ = snapshot.read_field(tmp_path / "h.bin", grid)
    assert np.array_equal(back, H)


def test_header_layout(tmp_path):
    grid = TorusGrid(2, 8)
    snapshot.write_field(tmp_path / "u.bin", grid, np.arange(grid.size, dtype=float).reshape(grid.shape))
    raw = (tmp_path / "u.bin").read_bytes()
    assert raw[:4] == b"CMAF" and len(raw) == 32 + 8 * grid.size
    assert np.frombuffer(raw[32:40], "<f8")[0] == 0.0 and np.frombuffer(raw[-8:], "<f8")[0] == grid.size - 1


def test_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE" + bytes(28) + bytes(8))
    with pytest.raises(snapshot.SnapshotError, match="magic"):
        snapshot.read_field(p)


def test_truncated(tmp_path):
    grid = TorusGrid(2, 8)
    p = tmp_path / "u.bin"
    snapshot.write_field(p, grid, grid.zeros())
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(snapshot.SnapshotError, match="expected"):
        snapshot.read_field(p)


def test_grid_mismatch(tmp_path):
    snapshot.write_field(tmp_path / "u.bin", TorusGrid(2, 8), TorusGrid(2, 8).zeros())
    with pytest.raises(snapshot.SnapshotError, match="does not match"):
        snapshot.read_field(tmp_path / "u.bin", TorusGrid(2, 16))


def test_wrong_shape_refused(tmp_path):
    with pytest.raises(snapshot.SnapshotError):
        snapshot.write_field(tmp_path / "u.bin", TorusGrid(2, 8), np.zeros((8, 8)))


def test_config_defaults():
    cfg = config.load()
    assert cfg.get("problem", "m") == 16 and cfg.get("problem", "psi") == "manufactured"
    assert cfg.psi_seed == cfg.seed == 0
    assert cfg.solver.tol_newton == 1e-10


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[problem]\nm = 8\nalpha = 2\n[solver]\ndtInit = 0.5\n[run]\nseed = 11\n")
    cfg = config.load(p, ["m=12", "solver.tolNewton=1e-9", "psiSeed=3"])
    assert cfg.get("problem", "m") == 12 and cfg.get("problem", "alpha") == 2
    assert cfg.solver.dt_init == 0.5 and cfg.solver.tol_newton == 1e-9
    assert cfg.seed == 11 and cfg.psi_seed == 3
    assert cfg.base_dir == tmp_path.resolve()
    echo = cfg.echo()
    assert echo["problem"]["m"] == 12 and echo["solver"]["dtInit"] == 0.5
    json.dumps(echo)


def test_config_relative_paths(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[problem]\npsi = explicit\npsiPath = data/psi.bin\n")
    assert config.load(p).path("problem", "psiPath") == tmp_path.resolve() / "data" / "psi.bin"


@pytest.mark.parametrize(
    "overrides",
    [
        ["bogus=1"],
        ["problem.bogus=1"],
        ["nosection.m=1"],
        ["m"],
        ["m=eight"],
        ["psi=magic"],
        ["chi=curved"],
        ["pipeline=fast"],
        ["psi=explicit"],
        ["solver.dtInit=2"],
        ["solver.nope=1"],
        ["seed=-1"],
    ],
)
def test_config_errors(overrides):
    with pytest.raises(config.ConfigError):
        config.load(None, overrides)


def test_config_unreadable(tmp_path):
    with pytest.raises(config.ConfigError):
        config.load(tmp_path / "missing.ini")
    bad = tmp_path / "bad.ini"
    bad.write_text("[extra]\nx = 1\n")
    with pytest.raises(config.ConfigError, match="section"):
        config.load(bad)
