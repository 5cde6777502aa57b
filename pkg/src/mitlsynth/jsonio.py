"""Deterministic JSON output.

The stdlib encoder prints floats with ``repr``, which is shortest-round-trip
but not a fixed width.  Artifacts here pin every real to 17 significant
digits so two runs of the pipeline produce byte-identical files.
"""

import math


def format_real(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite real {x!r} cannot be serialized")
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def dumps(obj, indent: int = 0) -> str:
    pad = " " * indent
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
        return f'"{out}"'
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_real(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        inner = ", ".join(dumps(v, indent) for v in obj)
        if len(inner) <= 88:
            return f"[{inner}]"
        body = (",\n" + pad + "  ").join(dumps(v, indent + 2) for v in obj)
        return "[\n" + pad + "  " + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            items.append(f'{dumps(k)}: {dumps(v, indent + 2)}')
        body = (",\n" + pad + "  ").join(items)
        return "{\n" + pad + "  " + body + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_path(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")
