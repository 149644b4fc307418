# File: tests/test_cli.py (Q2FMM)
import json

import numpy as np
import pytest

from app.main import EXIT_INTERNAL, EXIT_INVALID, EXIT_OK, main
from app.models import LatticeSpec
from q2fmm_utils import read_csv
from scripts.hierarchy import build_hierarchy
from scripts.multipole import brute_force_energy, fmm_total_energy, random_fock_state


def _config(tmp_path, payload) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _run(tmp_path, command, payload=None, *extra):
    out = tmp_path / "out"
    argv = [command, "--out", str(out)]
    if payload is not None:
        argv += ["--config", _config(tmp_path, payload)]
    return main(argv + list(extra)), out


def test_hierarchy_command(tmp_path):
    code, out = _run(tmp_path, "hierarchy")
    assert code == EXIT_OK
    records = (out / "hierarchy.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(records) == 1 + 4 + 16
    summary = json.loads((out / "hierarchy_summary.json").read_text(encoding="utf-8"))
    assert [lv["boxes"] for lv in summary["levels"]] == [1, 4, 16]
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "hierarchy"
    assert {f["name"] for f in manifest["files"]} == {"hierarchy.jsonl", "hierarchy_summary.json", "run_config.json"}


def test_odd_width_is_invalid_input(tmp_path):
    code, _ = _run(tmp_path, "hierarchy", {"lattice": {"width": 6}})
    assert code == EXIT_INVALID


def test_bad_config_is_invalid_input(tmp_path):
    code, _ = _run(tmp_path, "synth", {"synthesis": {"order_p": -1}})
    assert code == EXIT_INVALID


def test_energy_command(tmp_path, capsys):
    code, out = _run(tmp_path, "energy", {"lattice": {"width": 2}, "sweep": {"p_values": [0, 2]}},
                     "--state", "1,1,0,0")
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "E_exact = 1.0" in printed
    rows = read_csv(out / "energy.csv")
    assert list(rows[0]) == ["N", "p", "state_seed", "E_fmm", "E_exact", "rel_error"]
    assert [r["p"] for r in rows] == ["0", "2"]
    assert {r["N"] for r in rows} == {"4"}
    assert {r["state_seed"] for r in rows} == {""}
    assert all(float(r["rel_error"]) < 1e-12 for r in rows)


def test_energy_random_state_records_seed(tmp_path):
    code, out = _run(tmp_path, "energy", {"lattice": {"width": 4}, "seed": 7, "sweep": {"p_values": [1]}})
    assert code == EXIT_OK
    (row,) = read_csv(out / "energy.csv")
    assert row["state_seed"] == "7"
    state = random_fock_state(LatticeSpec(width=4), np.random.default_rng(7), 0.5)
    assert float(row["E_exact"]) == pytest.approx(brute_force_energy(state), rel=1e-12)


def test_energy_state_must_match_lattice(tmp_path):
    code, _ = _run(tmp_path, "energy", {"lattice": {"width": 2}}, "--state", "1,1,0")
    assert code == EXIT_INVALID


def test_synth_and_simulate(tmp_path, capsys):
    code, out = _run(tmp_path, "synth")
    assert code == EXIT_OK
    manifest = json.loads((out / "circuit_manifest.json").read_text(encoding="utf-8"))
    assert manifest["n_qubits"] == 16 + 12 + 16
    assert (out / "circuit.txt").read_text(encoding="utf-8").startswith("Q2FMM-CIRCUIT 1")

    code, out = _run(tmp_path, "simulate")
    assert code == EXIT_OK
    assert "ancillae restored: true; max |phase error|: 0" in capsys.readouterr().out
    report = json.loads((out / "simulate_report.json").read_text(encoding="utf-8"))
    assert report["n_states"] == 1 << 16


def test_simulate_sampled_chain(tmp_path):
    payload = {"lattice": {"width": 16, "dimension": 1}, "synthesis": {"order_p": 1},
               "sweep": {"n_samples": 50}}
    code, out = _run(tmp_path, "simulate", payload)
    assert code == EXIT_OK
    report = json.loads((out / "simulate_report.json").read_text(encoding="utf-8"))
    assert report["ancillae_restored"] is True
    assert report["max_energy_gap"] <= report["quantization_allowance"] + 1e-9


def test_estimate_command(tmp_path):
    payload = {"lattice": {"width": 16, "dimension": 1}, "synthesis": {"order_p": 1}}
    code, out = _run(tmp_path, "estimate", payload)
    assert code == EXIT_OK
    rows = read_csv(out / "estimate.csv")
    assert [r["model"] for r in rows] == ["NearestNeighbor2D", "Shuttling", "ShuttlingFanout"]
    assert int(rows[0]["depth"]) >= int(rows[1]["depth"])
    assert (out / "literature_bounds.csv").exists()


def test_estimate_capacity_error(tmp_path):
    payload = {"lattice": {"width": 16, "dimension": 1}, "synthesis": {"order_p": 1},
               "hardware": {"cell_capacity": 1}}
    code, _ = _run(tmp_path, "estimate", payload)
    assert code == EXIT_INVALID


def test_sweep_command(tmp_path):
    payload = {"sweep": {"sizes": [2, 4, 8], "p_values": [0, 1, 2], "n_states": 10,
                         "models": ["Shuttling"]}}
    code, out = _run(tmp_path, "sweep", payload)
    assert code == EXIT_OK
    energy = read_csv(out / "energy_sweep.csv")
    assert len(energy) == 3 * 3 * 10
    assert list(energy[0]) == ["N", "p", "state_seed", "E_fmm", "E_exact", "rel_error"]
    assert len(read_csv(out / "energy_summary.csv")) == 9
    row = next(r for r in energy if r["N"] == "16" and r["p"] == "2")
    state = random_fock_state(LatticeSpec(width=4), np.random.default_rng(int(row["state_seed"])), 0.5)
    assert float(row["E_fmm"]) == pytest.approx(fmm_total_energy(build_hierarchy(state.lattice), state, 2), rel=1e-12)
    scaling = read_csv(out / "scaling_sweep.csv")
    assert [int(r["N"]) for r in scaling] == [4, 16, 64]
    fits = json.loads((out / "fits.json").read_text(encoding="utf-8"))
    assert set(fits) >= {"energy", "scaling"}


def test_reruns_are_byte_identical(tmp_path):
    payload = {"lattice": {"width": 16, "dimension": 1}, "synthesis": {"order_p": 1}}
    code, out = _run(tmp_path, "synth", payload)
    assert code == EXIT_OK
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    code, _ = _run(tmp_path, "synth", payload)
    assert code == EXIT_OK
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_unexpected_failure_exit_code(tmp_path, monkeypatch):
    import app.commands.hierarchy as hierarchy_command

    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(hierarchy_command, "dump_hierarchy", boom)
    code, _ = _run(tmp_path, "hierarchy")
    assert code == EXIT_INTERNAL


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["teleport"])
