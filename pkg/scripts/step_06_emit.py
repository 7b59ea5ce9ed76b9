#!/usr/bin/env python3
"""
Bytecode Emission

Turns a resolved program into EVM bytes and writes the three artifacts of a
compilation next to each other:

- ``<name>.evm``: lowercase hex, no prefix, newline-terminated
- ``<name>.asm``: one instruction per line, labels as ``Lname:``
- ``<name>.gasmap``: one add_gas site per line
"""

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .core_ir import CoreModule
from .errors import MlcError, TruncatedPush
from .opcodes import BY_BYTE, OPCODES
from .step_02_parse import Printer
from .step_03_typecheck import check_source
from .step_04_codegen import LayoutPlan, SymProgram, codegen, plan_layout
from .step_05_resolve_labels import AnnotationSite, Instr, SizedProgram, render_asm, resolve_labels


def emit(sized: SizedProgram) -> bytes:
    out = bytearray()
    for instr in sized.instrs if isinstance(sized, SizedProgram) else sized:
        op = OPCODES[instr.mnemonic]
        out.append(op.code)
        if op.immediate:
            out += (instr.immediate or 0).to_bytes(op.immediate, "big")
    return bytes(out)


def to_hex(code: bytes) -> str:
    return code.hex()


def disassemble(code: bytes) -> List[Instr]:
    """Decode bytes into instructions; bytes outside the supported set read as INVALID."""
    instrs = []
    pc = 0
    while pc < len(code):
        op = BY_BYTE.get(code[pc])
        if op is None:
            instrs.append(Instr(pc, "INVALID"))
            pc += 1
            continue
        if op.immediate:
            if pc + 1 + op.immediate > len(code):
                raise TruncatedPush(f"{op.mnemonic} at {pc:#x} needs {op.immediate} bytes, "
                                    f"{len(code) - pc - 1} remain")
            value = int.from_bytes(code[pc + 1:pc + 1 + op.immediate], "big")
            instrs.append(Instr(pc, op.mnemonic, value))
        else:
            instrs.append(Instr(pc, op.mnemonic))
        pc += 1 + op.immediate
    return instrs


def render_listing(instrs: List[Instr]) -> str:
    """`.asm`-style listing for decoded bytes; every JUMPDEST gets a label named by its offset."""
    lines = []
    for instr in instrs:
        if instr.mnemonic == "JUMPDEST":
            lines.append(f"L{instr.offset:#06x}:")
        lines.append(f"    {instr.render()}")
    return "\n".join(lines) + ("\n" if lines else "")


def _gas_argument(value: Optional[int], expr) -> str:
    if value is not None:
        return str(value)
    return "(" + Printer().render(expr).replace(" ", "") + ")"


def render_gasmap(sites: List[AnnotationSite]) -> str:
    lines = [f"{site.offset:#06x} {_gas_argument(site.used, site.used_expr)} "
             f"{_gas_argument(site.alloc, site.alloc_expr)} {site.function} {site.node}" for site in sites]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class CompiledContract:
    name: str
    core: CoreModule
    layout: LayoutPlan
    symbolic: SymProgram
    sized: SizedProgram
    code: bytes

    @property
    def annotations(self) -> List[AnnotationSite]:
        return self.sized.annotations

    @property
    def hex(self) -> str:
        return to_hex(self.code)

    def function_range(self, name: str):
        return self.sized.functions[name]


def compile_source(text: str, name: str = "main") -> CompiledContract:
    """Full pipeline: parse, typecheck, plan, codegen, resolve and emit."""
    core = check_source(text, name)
    layout = plan_layout(core)
    symbolic = codegen(core, layout)
    sized = resolve_labels(symbolic)
    return CompiledContract(name, core, layout, symbolic, sized, emit(sized))


def compile_file(input_file) -> CompiledContract:
    path = Path(input_file)
    return compile_source(path.read_text(encoding="utf-8"), path.stem)


def write_artifacts(contract: CompiledContract, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evm = out / f"{contract.name}.evm"
    asm = out / f"{contract.name}.asm"
    gasmap = out / f"{contract.name}.gasmap"
    evm.write_text(contract.hex + "\n", encoding="utf-8")
    asm.write_text(render_asm(contract.sized), encoding="utf-8")
    gasmap.write_text(render_gasmap(contract.annotations), encoding="utf-8")
    return [evm, asm, gasmap]


def read_code(path) -> bytes:
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("0x"):
        text = text[2:]
    try:
        return bytes.fromhex(text)
    except ValueError as e:
        raise MlcError(f"{path} is not a hex bytecode file: {e}")


def emit_file(input_file, out_dir="out"):
    try:
        contract = compile_file(input_file)
        paths = write_artifacts(contract, out_dir)
    except OSError as e:
        print(f"Error processing {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(f"Compiled {input_file}: {len(contract.code)} bytes, {len(contract.annotations)} gas annotations")
    for path in paths:
        print(f"  wrote {path}")
    return contract


def main():
    parser = argparse.ArgumentParser(description="Compile an .mlc source file to EVM bytecode.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("-o", "--out-dir", default="out", help="Directory for .evm/.asm/.gasmap")
    args = parser.parse_args()
    if emit_file(args.input, args.out_dir) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
