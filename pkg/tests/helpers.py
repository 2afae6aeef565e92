"""Small utilities shared by the test modules."""


def scale_domains(chart: dict) -> list:
    """Every ``(path, channel, domain)`` triple of explicit scale domains, in document order."""
    out = []

    def walk(node, path):
        if isinstance(node, dict):
            enc = node.get("encoding")
            if isinstance(enc, dict):
                for ch in sorted(enc):
                    spec = enc[ch]
                    if isinstance(spec, dict) and isinstance(spec.get("scale"), dict) and "domain" in spec["scale"]:
                        out.append((path, ch, tuple(spec["scale"]["domain"])))
            for k in sorted(node):
                if k not in ("data", "usermeta", "encoding"):
                    walk(node[k], f"{path}.{k}")
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, f"{path}.{i}")

    walk(chart, "$")
    return out


def leaf_diff(a, b, path="$") -> list:
    """Paths of leaves that differ between two JSON-like documents."""
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                out.append(f"{path}.{k}")
            else:
                out += leaf_diff(a[k], b[k], f"{path}.{k}")
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        return [p for i, (x, y) in enumerate(zip(a, b)) for p in leaf_diff(x, y, f"{path}.{i}")]
    return [] if a == b else [path]
