"""Checkpoint serialization.

Layout: one ASCII header line

    HYPERFORMER v1 N d L m headKind scaleScores useFFN

followed by named sections in a fixed order (embedding, per-layer matrices
in equation order, head parameters, then the ablation flag).  Each section
is an ASCII line ``name rows cols`` followed by rows*cols little-endian
float64 values.  Round-trips are bitwise exact.
"""

import numpy as np

from .errors import ParseError
from .model import ModelConfig, ModelState, param_layout

MAGIC = "HYPERFORMER"
VERSION = "v1"


def _write_section(fh, name, array):
    a = np.ascontiguousarray(array, dtype="<f8")
    if a.ndim == 1:
        rows, cols = 1, a.shape[0]
    else:
        rows, cols = a.shape
    fh.write(f"{name} {rows} {cols}\n".encode("ascii"))
    fh.write(a.tobytes())


def save_model(state, path):
    c = state.config
    header = (f"{MAGIC} {VERSION} {state.num_features} {c.embed_dim} {c.num_layers} "
              f"{c.num_fields} {c.head} {int(c.scale_scores)} {int(c.use_ffn)}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for name, _, _ in param_layout(c, state.num_features):
            _write_section(fh, name, state.params[name])
        _write_section(fh, "ablation", np.array([[0.0 if c.use_hyperformer else 1.0]]))


def _read_line(fh):
    raw = bytearray()
    while True:
        b = fh.read(1)
        if not b:
            return None
        if b == b"\n":
            return raw.decode("ascii")
        raw += b


def read_header(path):
    with open(path, "rb") as fh:
        return _parse_header(_read_line(fh))


def _parse_header(line):
    parts = (line or "").split()
    if len(parts) != 9 or parts[0] != MAGIC or parts[1] != VERSION:
        raise ParseError(f"not a {MAGIC} {VERSION} checkpoint: {line!r}")
    return {"num_features": int(parts[2]), "embed_dim": int(parts[3]),
            "num_layers": int(parts[4]), "num_fields": int(parts[5]),
            "head": parts[6], "scale_scores": bool(int(parts[7])),
            "use_ffn": bool(int(parts[8]))}


def load_model(path):
    with open(path, "rb") as fh:
        header = _parse_header(_read_line(fh))
        sections = {}
        while True:
            line = _read_line(fh)
            if line is None:
                break
            name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            data = fh.read(rows * cols * 8)
            if len(data) != rows * cols * 8:
                raise ParseError(f"truncated section {name!r}")
            sections[name] = (rows, cols, np.frombuffer(data, dtype="<f8").astype(np.float64))

    def dims(name):
        return sections[name][0], sections[name][1]

    d = header["embed_dim"]
    config = ModelConfig(embed_dim=d, num_layers=header["num_layers"],
                         num_fields=header["num_fields"], head=header["head"],
                         scale_scores=header["scale_scores"], use_ffn=header["use_ffn"],
                         use_hyperformer=bool(sections.pop("ablation")[2][0] == 0.0))
    if config.use_ffn:
        config.ffn_hidden = dims("layer0.edge.ffn_w1")[1]
    if config.head == "mlp":
        config.mlp_hidden = (dims("head.w1")[1], dims("head.w2")[1])
    elif config.head == "two_tower":
        config.user_fields = dims("head.u_w1")[0] // d
        config.tower_hidden = dims("head.u_w1")[1]
        config.tower_out = dims("head.u_w2")[1]
    config.validate()

    params = {}
    for name, shape, _ in param_layout(config, header["num_features"]):
        if name not in sections:
            raise ParseError(f"checkpoint missing section {name!r}")
        params[name] = sections[name][2].reshape(shape).copy()
    return ModelState(config, header["num_features"], params)
