#!/usr/bin/env python3
"""
Label Resolution

Assigns absolute byte addresses to a symbolic program. A label push needs
enough immediate bytes for its target, and widening one push moves every
later label, so widths are found by a fixpoint: start every label push at
PUSH1, lay the program out, widen the pushes whose target no longer fits,
and repeat. Widths never shrink, so the loop terminates.
"""

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import MlcError
from .opcodes import OPCODES, push_for
from .step_03_typecheck import check_source
from .step_04_codegen import Annotate, LabelDef, Macro, Op, PushLabel, SymProgram, codegen


@dataclass
class Instr:
    offset: int
    mnemonic: str
    immediate: Optional[int] = None
    label: Optional[str] = None
    tag: Optional[str] = None
    resume: Optional[str] = None
    alloc: int = 0

    @property
    def size(self) -> int:
        return 1 + OPCODES[self.mnemonic].immediate

    @property
    def end(self) -> int:
        return self.offset + self.size

    def render(self) -> str:
        if self.immediate is None:
            return self.mnemonic
        return f"{self.mnemonic} {self.immediate:#x}"


@dataclass
class AnnotationSite:
    function: str
    node: str
    offset: int
    used: Optional[int]
    alloc: Optional[int]
    used_expr: object = None
    alloc_expr: object = None

    @property
    def constant(self) -> bool:
        return self.used is not None and self.alloc is not None


@dataclass
class SizedProgram:
    name: str
    instrs: List[Instr]
    labels: Dict[str, int]
    annotations: List[AnnotationSite] = field(default_factory=list)
    functions: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    public: List[str] = field(default_factory=list)
    iterations: int = 1
    push_widths: List[List[int]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.instrs[-1].end if self.instrs else 0

    def at(self, offset: int) -> Instr:
        for instr in self.instrs:
            if instr.offset == offset:
                return instr
        raise KeyError(offset)

    def function_at(self, offset: int) -> Optional[str]:
        for name, (start, end) in self.functions.items():
            if start <= offset < end:
                return name
        return None


def flatten(items) -> List[Tuple[object, Optional[Macro]]]:
    """Expand macros, remembering the macro each instruction came from."""
    flat = []
    for item in items:
        if isinstance(item, Macro):
            flat.extend((inner, item) for inner in item.body)
        else:
            flat.append((item, None))
    return flat


def _layout(flat, widths: Dict[int, int]) -> Dict[str, int]:
    labels = {}
    offset = 0
    for index, (item, _) in enumerate(flat):
        if isinstance(item, LabelDef):
            if item.label in labels:
                raise MlcError(f"label {item.label} defined twice")
            labels[item.label] = offset
        elif isinstance(item, PushLabel):
            offset += 1 + widths[index]
        elif isinstance(item, Op):
            offset += 1 + OPCODES[item.mnemonic].immediate
    return labels


def resolve_labels(sym: SymProgram) -> SizedProgram:
    flat = flatten(sym.instrs)
    widths = {i: 1 for i, (item, _) in enumerate(flat) if isinstance(item, PushLabel)}
    history = [sorted(widths.items())]
    iterations = 0
    while True:
        iterations += 1
        labels = _layout(flat, widths)
        changed = False
        for index in widths:
            label = flat[index][0].label
            if label not in labels:
                raise MlcError(f"jump to undefined label {label}")
            needed = OPCODES[push_for(labels[label])].immediate
            if needed > widths[index]:
                widths[index] = needed
                changed = True
        history.append(sorted(widths.items()))
        if not changed:
            break

    instrs: List[Instr] = []
    annotations: List[AnnotationSite] = []
    offset = 0
    for index, (item, macro) in enumerate(flat):
        if isinstance(item, LabelDef):
            continue
        if isinstance(item, Annotate):
            node = item.node
            annotations.append(AnnotationSite(item.function, node.name, offset, node.used, node.alloc,
                                              node.used_expr, node.alloc_expr))
            continue
        if isinstance(item, PushLabel):
            instr = Instr(offset, f"PUSH{widths[index]}", labels[item.label], label=item.label)
        else:
            instr = Instr(offset, item.mnemonic, item.immediate, tag=item.tag)
        if macro is not None:
            if instr.tag == "call":
                instr.resume = macro.resume
            if macro.kind == "alloc" and item is macro.body[-1]:
                instr.alloc = macro.alloc
        instrs.append(instr)
        offset = instr.end

    starts = sorted((labels[name], name) for name in sym.functions)
    functions = {}
    for i, (start, name) in enumerate(starts):
        end = starts[i + 1][0] if i + 1 < len(starts) else offset
        functions[name] = (start, end)
    sized = SizedProgram(sym.name, instrs, labels, annotations, functions, list(sym.public), iterations,
                         [[w for _, w in h] for h in history])
    verify_jump_targets(sized)
    return sized


def verify_jump_targets(program: SizedProgram) -> None:
    """Every label pushed for a jump must address a JUMPDEST."""
    starts = {instr.offset: instr for instr in program.instrs}
    for instr in program.instrs:
        if instr.label is None:
            continue
        target = starts.get(instr.immediate)
        if target is None or target.mnemonic != "JUMPDEST":
            raise MlcError(f"label {instr.label} at {instr.immediate:#x} does not address a JUMPDEST")


def render_asm(program: SizedProgram) -> str:
    by_offset: Dict[int, List[str]] = {}
    for name, address in program.labels.items():
        by_offset.setdefault(address, []).append(name)
    lines = []
    for instr in program.instrs:
        for name in sorted(by_offset.get(instr.offset, [])):
            lines.append(f"L{name}:")
        lines.append(f"    {instr.render()}")
    return "\n".join(lines) + ("\n" if lines else "")


def resolve_file(input_file, debug=False):
    try:
        sized = resolve_labels(codegen(check_source(Path(input_file).read_text(encoding="utf-8"),
                                                    Path(input_file).stem)))
    except OSError as e:
        print(f"Error reading {input_file}: {e}")
        return None
    except MlcError as e:
        print(f"{input_file}:{e}")
        return None
    print(f"Resolved {len(sized.labels)} labels in {sized.iterations} iterations; {sized.size} bytes")
    if debug:
        print(render_asm(sized), end="")
    return sized


def main():
    parser = argparse.ArgumentParser(description="Resolve label addresses for an .mlc source file.")
    parser.add_argument("input", help="Path to the .mlc source")
    parser.add_argument("--print", dest="show", action="store_true", help="Print the assembly listing")
    args = parser.parse_args()
    if resolve_file(args.input, debug=args.show) is None:
        sys.exit(1)


if __name__ == "__main__":
    main()
