"""Golden rendering of a QASM file: the flat circuit, or the error it raises.

Run as a script to (re)write the ``.golden`` files next to the corpus.
Review any diff by hand before committing it.
"""

import sys
from pathlib import Path

from dqcsim.qasm import QasmError, format_circuit, load_qasm

CORPUS = Path(__file__).parent / "qasm_corpus"


def render(source: str) -> str:
    try:
        circ = load_qasm(source)
    except QasmError as e:
        return f"ERROR {type(e).__name__} line {e.line} col {e.col}: {e.message}\n"
    head = f"qubits {circ.num_qubits} clbits {circ.num_clbits}\n"
    notes = "".join(f"# {a}\n" for a in circ.annotations)
    return head + notes + format_circuit(circ)


if __name__ == "__main__":
    for path in sorted(CORPUS.glob("*.qasm")):
        path.with_suffix(".golden").write_text(render(path.read_text()))
        print("wrote", path.with_suffix(".golden").name, file=sys.stderr)
