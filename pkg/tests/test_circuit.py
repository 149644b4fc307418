# File: tests/test_circuit.py (Q2FMM)
import pytest

from app.models import SynthesisOptions
from scripts.circuit import (Block, Circuit, Gate, QubitAllocator, Register, Template, circuit_manifest,
                             compose, invert, parse_circuit, serialize_circuit, single_block_circuit)
from scripts.errors import ConfigError, SynthesisError
from scripts.fixed_point import FixedPointFormat
from scripts.synthesizer import synthesize

BIT = FixedPointFormat(1, 0, False)


@pytest.mark.parametrize("kind, qubits, angle", [
    ("HADAMARD", (0,), None),
    ("CNOT", (0,), None),
    ("TOFFOLI", (0, 1, 1), None),
    ("PHASE", (0,), None),
    ("CNOT", (0, 1), 0.5),
    ("FANOUT", (0,), None),
])
def test_invalid_gates(kind, qubits, angle):
    with pytest.raises(SynthesisError):
        Gate(kind, qubits, angle)


def test_gate_inverse_and_remap():
    g = Gate("CPHASE", (0, 1), 0.25)
    assert g.inverse() == Gate("CPHASE", (0, 1), -0.25)
    assert Gate("TOFFOLI", (0, 1, 2)).inverse() == Gate("TOFFOLI", (0, 1, 2))
    assert g.remap([5, 7]).qubits == (5, 7)
    assert Gate("FANOUT", (0, 1, 2, 3)).cost(None) == 3
    assert Gate("FANOUT", (0, 1, 2, 3)).cost(1) == 1


def test_template_profile():
    t = Template((Gate("CNOT", (0, 1)), Gate("CNOT", (2, 3)), Gate("TOFFOLI", (1, 2, 4))), 5)
    assert t.profile().tolist() == [2, 1]
    assert t.depth() == 2
    assert t.inverse.gates[0].kind == "TOFFOLI"
    assert t.inverse.inverse is t


def test_register_width_and_views():
    with pytest.raises(SynthesisError):
        Register("r", "box_sum", (0, 1), BIT)
    with pytest.raises(SynthesisError):
        Register("r", "weird", (0,), BIT)
    reg = QubitAllocator(0).register("r", "box_sum", FixedPointFormat(4, 0, False))
    view = reg.view(1, FixedPointFormat(2, 0, False))
    assert view.qubits == (1, 2)
    with pytest.raises(SynthesisError):
        reg.view(3, FixedPointFormat(2, 0, False))


def test_compose_invert_and_conflicts():
    alloc = QubitAllocator(0)
    a = alloc.register("a", "system", FixedPointFormat(2, 0, False))
    c1 = single_block_circuit("direct", [a], [Gate("CPHASE", a.qubits, 0.5)], movers=(a.qubits[1],),
                              anchor=a.qubits[0])
    c2 = single_block_circuit("direct", [a], [Gate("CNOT", a.qubits)])
    both = compose(c1, c2)
    assert [b.kind for b in both.blocks] == ["direct", "direct"]
    inv = invert(both)
    assert inv.blocks[0].template.gates[0].kind == "CNOT"
    assert inv.blocks[1].template.gates[0].angle == -0.5
    clash = Register("a", "system", (7, 8), FixedPointFormat(2, 0, False))
    with pytest.raises(SynthesisError):
        compose(both, Circuit(registers=(clash,)))
    with pytest.raises(SynthesisError):
        Block("adder", (0, 1), Template((), 3))


def test_serialization_round_trip(h_chain16):
    c = synthesize(h_chain16, SynthesisOptions(order_p=1, use_copy=True))
    text = serialize_circuit(c)
    parsed = parse_circuit(text)
    assert serialize_circuit(parsed) == text
    assert parsed.gate_counts() == c.gate_counts()
    assert [r.name for r in parsed.registers] == [r.name for r in c.registers]


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_circuit("not a circuit\n")
    with pytest.raises(ConfigError):
        parse_circuit("Q2FMM-CIRCUIT 1\nREGISTERS 2\n")


def test_manifest(h4):
    c = synthesize(h4, SynthesisOptions())
    manifest = circuit_manifest(c)
    # four 3-bit box sums, each adder keeping a 3-bit extension and a carry
    assert manifest["n_qubits"] == 16 + 12 + 16
    assert manifest["qubits_by_role"] == {"box_sum": 12, "scratch": 16, "system": 16}
    assert manifest["gate_counts"] == {"CNOT": 8 * 56, "CPHASE": 120, "TOFFOLI": 8 * 24}
    assert manifest["block_kinds"] == {"adder": 4, "adder_inverse": 4, "direct": 120}


def test_inverted_blocks_keep_their_base_kind():
    block = Block("adder", (0, 1), Template((Gate("CNOT", (0, 1)), Gate("PHASE", (1,), 0.25)), 2), "add:x")
    c = Circuit(blocks=(block,))
    (inv,) = invert(c).blocks
    assert inv.kind == "adder_inverse"
    assert inv.base_kind == "adder" and inv.is_inverse
    assert inv.template.gates[0].angle == -0.25
    (back,) = invert(invert(c)).blocks
    assert back.kind == "adder" and not back.is_inverse


def test_unused_helpers_are_gone():
    import q2fmm_utils
    import scripts.circuit
    import scripts.revarith

    assert not hasattr(q2fmm_utils, "merge_rows")
    assert not hasattr(scripts.revarith, "format_for_count")
    assert not hasattr(scripts.circuit, "EMPTY_TEMPLATE")
