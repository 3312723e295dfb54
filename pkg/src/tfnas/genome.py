"""
Architecture genomes for the two search spaces.

``TransformerGenome`` is one point of a heterogeneous BERT grid (hidden size
and depth shared, every other choice per layer). ``RnnCellGenome`` is a
recurrent cell written as an acyclic graph of operations, stacked three
times by :mod:`tfnas.netbuild`.

Text format (one genome per line, canonical so equal genomes serialize
identically)::

    v=1;kind=transformer;hidden=128;layers=sa_sdp/2/512/1,lt_dct/4/1024/3
    v=1;kind=rnn;inputs=x:0,h:1;nodes=2:linear,3:tanh;edges=0>2,1>2,2>3;out=h:3

Layer fields are ``attn_op/num_heads/ff_dim/ff_stacks``. RNN inputs are
``x`` (token input), ``h`` (previous hidden) and optionally ``c`` (previous
memory); outputs are ``h`` and optionally ``c``.
"""
import hashlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, ParseError, ValidationError

FORMAT_VERSION = 1

HIDDEN_DIMS = (128, 256)
NUM_LAYERS = (2, 4)
ATTN_OPS = ("sa_sdp", "sa_mul", "lt_dft", "lt_dct", "conv_5", "conv_9")
NUM_HEADS = (2, 4)
FF_DIMS = (512, 1024)
FF_STACKS = (1, 3)

RNN_OPS = ("linear", "elementwise_sum", "elementwise_product", "tanh", "sigmoid")
ACTIVATIONS = ("tanh", "sigmoid")
ELEMENTWISE = ("elementwise_sum", "elementwise_product")

# defaults for instantiating networks; shared with netbuild so counts agree
DEFAULT_VOCAB = 2000
DEFAULT_SEQ_LEN = 32
DEFAULT_RNN_HIDDEN = 256


# -- transformer -------------------------------------------------------------
@dataclass(frozen=True)
class LayerSpec:
    attn_op: str
    num_heads: int
    ff_dim: int
    ff_stacks: int

    @property
    def family(self):
        return self.attn_op.split("_")[0]

    @property
    def kernel_size(self):
        return int(self.attn_op.split("_")[1]) if self.family == "conv" else None


@dataclass(frozen=True)
class TransformerGenome:
    hidden_dim: int
    layers: tuple

    kind = "transformer"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def num_layers(self):
        return len(self.layers)

    def validate(self):
        if self.hidden_dim not in HIDDEN_DIMS:
            raise ValidationError(f"hidden_dim {self.hidden_dim} not in {HIDDEN_DIMS}")
        if not self.layers:
            raise ValidationError("transformer genome has no layers")
        if self.num_layers not in NUM_LAYERS:
            raise ValidationError(f"num_layers {self.num_layers} not in {NUM_LAYERS}")
        for i, layer in enumerate(self.layers):
            if not isinstance(layer, LayerSpec):
                raise ValidationError(f"layer {i} is not a LayerSpec")
            if layer.attn_op not in ATTN_OPS:
                raise ValidationError(f"layer {i}: unknown attention op {layer.attn_op!r}")
            if layer.num_heads not in NUM_HEADS:
                raise ValidationError(f"layer {i}: num_heads {layer.num_heads} not in {NUM_HEADS}")
            if layer.ff_dim not in FF_DIMS:
                raise ValidationError(f"layer {i}: ff_dim {layer.ff_dim} not in {FF_DIMS}")
            if layer.ff_stacks not in FF_STACKS:
                raise ValidationError(f"layer {i}: ff_stacks {layer.ff_stacks} not in {FF_STACKS}")
            if self.hidden_dim % layer.num_heads:
                raise ValidationError(f"layer {i}: hidden_dim not divisible by num_heads")
        return self


def layer_grid():
    """Every per-layer configuration, in canonical order."""
    return [LayerSpec(*cfg) for cfg in itertools.product(ATTN_OPS, NUM_HEADS, FF_DIMS, FF_STACKS)]


def count_search_space(num_layers=NUM_LAYERS, hidden_dims=HIDDEN_DIMS):
    """Closed-form size of the transformer grid: sum over hidden sizes and depths of 48**depth."""
    per_layer = len(ATTN_OPS) * len(NUM_HEADS) * len(FF_DIMS) * len(FF_STACKS)
    return len(tuple(hidden_dims)) * sum(per_layer ** n for n in num_layers)


def enumerate_transformers(num_layers=NUM_LAYERS, hidden_dims=HIDDEN_DIMS):
    """Yield every genome of the (possibly reduced) grid."""
    grid = layer_grid()
    for hidden in hidden_dims:
        for n in num_layers:
            for layers in itertools.product(grid, repeat=n):
                yield TransformerGenome(hidden, layers)


def sample_transformer(rng):
    """Draw uniformly from the whole grid.

    Depth is drawn in proportion to the number of genomes at that depth, so
    that every genome is equally likely.
    """
    hidden = HIDDEN_DIMS[rng.integers(len(HIDDEN_DIMS))]
    per_layer = len(layer_grid())
    weights = np.array([float(per_layer) ** n for n in NUM_LAYERS])
    n = NUM_LAYERS[rng.choice(len(NUM_LAYERS), p=weights / weights.sum())]
    layers = [
        LayerSpec(
            ATTN_OPS[rng.integers(len(ATTN_OPS))],
            NUM_HEADS[rng.integers(len(NUM_HEADS))],
            FF_DIMS[rng.integers(len(FF_DIMS))],
            FF_STACKS[rng.integers(len(FF_STACKS))],
        )
        for _ in range(n)
    ]
    return TransformerGenome(hidden, layers)


# -- rnn cells ---------------------------------------------------------------
@dataclass(frozen=True)
class RnnCellGenome:
    """
    A recurrent cell as a DAG.

    ``nodes`` are ``(node_id, op)`` pairs for operation nodes only; the input
    ids ``x_in``, ``h_in`` (and optional ``c_in``) carry no op. Linear nodes
    accept one or more inputs and apply a separate weight to each plus one
    bias. Only linear nodes may read the token input.
    """

    nodes: tuple
    edges: tuple
    x_in: int
    h_in: int
    h_out: int
    c_in: int = None
    c_out: int = None

    kind = "rnn"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted((int(i), str(op)) for i, op in self.nodes)))
        object.__setattr__(self, "edges", tuple(sorted((int(a), int(b)) for a, b in self.edges)))

    @property
    def input_ids(self):
        ids = [self.x_in, self.h_in]
        if self.c_in is not None:
            ids.append(self.c_in)
        return ids

    @property
    def ops(self):
        return dict(self.nodes)

    def predecessors(self, node_id):
        return [a for a, b in self.edges if b == node_id]

    def topological_order(self):
        """Operation node ids in dependency order; raises on cycles."""
        ops = self.ops
        indeg = {i: 0 for i in ops}
        children = {}
        for a, b in self.edges:
            children.setdefault(a, []).append(b)
            if a in ops and b in indeg:
                indeg[b] += 1
        ready = sorted(i for i, d in indeg.items() if d == 0)
        order = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for b in children.get(node, []):
                if b in indeg:
                    indeg[b] -= 1
                    if indeg[b] == 0:
                        ready.append(b)
            ready.sort()
        if len(order) != len(ops):
            raise ValidationError("rnn cell graph contains a cycle")
        return order

    def validate(self):
        ops = self.ops
        if len(ops) != len(self.nodes):
            raise ValidationError("duplicate node id")
        inputs = self.input_ids
        if len(set(inputs)) != len(inputs):
            raise ValidationError("input ids must be distinct")
        if set(inputs) & set(ops):
            raise ValidationError("input ids collide with operation node ids")
        for node_id, op in self.nodes:
            if op not in RNN_OPS:
                raise ValidationError(f"node {node_id}: unknown op {op!r}")
        known = set(ops) | set(inputs)
        if len(set(self.edges)) != len(self.edges):
            raise ValidationError("duplicate edge")
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValidationError(f"edge {a}>{b} references an unknown node")
            if b in inputs:
                raise ValidationError(f"edge {a}>{b} points into an input")
            if a == b:
                raise ValidationError(f"self-loop on node {a}")
            if a == self.x_in and ops[b] != "linear":
                raise ValidationError(f"token input feeds non-linear node {b}")
        self.topological_order()
        for node_id, op in self.nodes:
            arity = len(self.predecessors(node_id))
            if op in ACTIVATIONS and arity != 1:
                raise ValidationError(f"activation node {node_id} needs exactly 1 input, has {arity}")
            if op in ELEMENTWISE and arity < 2:
                raise ValidationError(f"elementwise node {node_id} needs >= 2 inputs, has {arity}")
            if op == "linear" and arity < 1:
                raise ValidationError(f"linear node {node_id} has no inputs")
        if self.h_out not in ops:
            raise ValidationError("h output must be an operation node")
        if (self.c_in is None) != (self.c_out is None):
            raise ValidationError("c input and c output must be declared together")
        if self.c_out is not None and self.c_out not in ops:
            raise ValidationError("c output must be an operation node")
        reach = set(inputs)
        for node in self.topological_order():
            if any(p in reach for p in self.predecessors(node)):
                reach.add(node)
        missing = set(ops) - reach
        if missing:
            raise ValidationError(f"nodes unreachable from inputs: {sorted(missing)}")
        used = {a for a, _ in self.edges}
        if self.x_in not in used:
            raise ValidationError("token input is unused")
        return self


def vanilla_rnn():
    """``tanh(W x_t + U h_{t-1} + b)``: one two-input linear node and a tanh."""
    return RnnCellGenome(nodes=((2, "linear"), (3, "tanh")), edges=((0, 2), (1, 2), (2, 3)),
                         x_in=0, h_in=1, h_out=3)


def sample_rnn(rng, max_nodes=8, max_retries=100):
    """
    Grow a random cell of at most ``max_nodes`` operation nodes.

    The first node is always a linear map over the token input and previous
    hidden state; later nodes draw their inputs from anything created so far.
    Cells whose hidden output does not depend on the token input are redrawn.
    With ``max_nodes == 3`` the result is the vanilla tanh cell.
    """
    if max_nodes < 3:
        raise ValueError("max_nodes must be >= 3")
    if max_nodes == 3:
        return vanilla_rnn()
    for _ in range(max_retries):
        genome = _grow_cell(rng, max_nodes)
        try:
            genome.validate()
        except ValidationError:
            continue
        if genome.x_in in _ancestors(genome, genome.h_out):
            return genome
    raise GenerationError(f"no valid rnn cell after {max_retries} attempts")


def _ancestors(genome, node_id):
    seen, stack = set(), [node_id]
    while stack:
        for src in genome.predecessors(stack.pop()):
            if src not in seen:
                seen.add(src)
                stack.append(src)
    return seen


def _grow_cell(rng, max_nodes):
    use_memory = rng.random() < 0.3
    x_in, h_in = 0, 1
    c_in = 2 if use_memory else None
    next_id = 3 if use_memory else 2
    n_ops = int(rng.integers(3, max_nodes + 1))
    nodes, edges = [], []
    first = next_id
    nodes.append((first, "linear"))
    edges += [(x_in, first), (h_in, first)]
    next_id += 1
    pool = [h_in, first] + ([c_in] if use_memory else [])
    linear_sources = [x_in] + pool
    memory_used = False
    for k in range(1, n_ops):
        last = k == n_ops - 1
        op = RNN_OPS[rng.integers(len(RNN_OPS))]
        if last:
            op = ACTIVATIONS[rng.integers(2)] if rng.random() < 0.7 else op
        if op in ACTIVATIONS:
            srcs = [pool[-1] if rng.random() < 0.6 else pool[rng.integers(len(pool))]]
        elif op in ELEMENTWISE:
            n_in = min(len(pool), int(rng.integers(2, 4)))
            srcs = list(rng.choice(pool, size=n_in, replace=False))
            if pool[-1] not in srcs:
                srcs[0] = pool[-1]
        else:
            n_in = min(len(linear_sources), int(rng.integers(1, 3)))
            srcs = list(rng.choice(linear_sources, size=n_in, replace=False))
        if use_memory and not memory_used and last and c_in not in srcs and op not in ACTIVATIONS:
            srcs.append(c_in)
        node_id = next_id
        next_id += 1
        nodes.append((node_id, op))
        edges += [(int(s), node_id) for s in dict.fromkeys(int(s) for s in srcs)]
        memory_used |= c_in is not None and c_in in srcs
        pool.append(node_id)
        linear_sources.append(node_id)
    h_out = nodes[-1][0]
    c_out = None
    if use_memory:
        if not memory_used:
            node_id = next_id
            nodes.append((node_id, "elementwise_sum"))
            edges += [(c_in, node_id), (nodes[rng.integers(len(nodes))][0], node_id)]
            c_out = node_id
        else:
            candidates = [i for i, _ in nodes if i != h_out]
            c_out = candidates[rng.integers(len(candidates))] if candidates else h_out
    return RnnCellGenome(nodes=nodes, edges=edges, x_in=x_in, h_in=h_in, h_out=h_out,
                         c_in=c_in, c_out=c_out)


# -- parameter counts ----------------------------------------------------------
def cell_param_count(genome, input_dim, hidden_dim):
    """Trainable scalars of one cell: per linear node, one matrix per input plus a bias."""
    total = 0
    for node_id, op in genome.nodes:
        if op != "linear":
            continue
        for src in genome.predecessors(node_id):
            total += (input_dim if src == genome.x_in else hidden_dim) * hidden_dim
        total += hidden_dim
    return total


def param_count(genome, vocab=DEFAULT_VOCAB, seq_len=DEFAULT_SEQ_LEN, hidden_dim=DEFAULT_RNN_HIDDEN,
                embed_dim=None):
    """
    Number of trainable scalars in the network :mod:`tfnas.netbuild` builds.

    ``seq_len`` sizes the transformer's learned positional table;
    ``hidden_dim``/``embed_dim`` apply to RNN genomes only.
    """
    genome.validate()
    if genome.kind == "rnn":
        embed_dim = hidden_dim if embed_dim is None else embed_dim
        cells = cell_param_count(genome, embed_dim, hidden_dim) + 2 * cell_param_count(genome, hidden_dim, hidden_dim)
        return vocab * embed_dim + cells + hidden_dim * vocab + vocab
    d = genome.hidden_dim
    total = vocab * d + seq_len * d + 2 * d  # token + position tables, embedding layer norm
    for layer in genome.layers:
        if layer.family == "sa":
            total += 4 * (d * d + d)
            if layer.attn_op == "sa_mul":
                total += layer.num_heads * (d // layer.num_heads) ** 2
        elif layer.family == "conv":
            k = layer.kernel_size
            total += 2 * (d * d + d) + d * layer.num_heads * k + layer.num_heads * k
        total += 2 * d
        total += layer.ff_stacks * (d * layer.ff_dim + layer.ff_dim + layer.ff_dim * d + d + 2 * d)
    return total + d * vocab + vocab


# -- serialization ------------------------------------------------------------
def serialize(genome):
    """Canonical one-line text for a genome."""
    if genome.kind == "transformer":
        layers = ",".join(f"{l.attn_op}/{l.num_heads}/{l.ff_dim}/{l.ff_stacks}" for l in genome.layers)
        return f"v={FORMAT_VERSION};kind=transformer;hidden={genome.hidden_dim};layers={layers}"
    inputs = f"x:{genome.x_in},h:{genome.h_in}" + (f",c:{genome.c_in}" if genome.c_in is not None else "")
    outs = f"h:{genome.h_out}" + (f",c:{genome.c_out}" if genome.c_out is not None else "")
    nodes = ",".join(f"{i}:{op}" for i, op in genome.nodes)
    edges = ",".join(f"{a}>{b}" for a, b in genome.edges)
    return f"v={FORMAT_VERSION};kind=rnn;inputs={inputs};nodes={nodes};edges={edges};out={outs}"


def genome_id(genome):
    """Short stable identifier derived from the canonical text."""
    return hashlib.sha1(serialize(genome).encode()).hexdigest()[:12]


def _int(token, line, fieldname):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line, fieldname) from None


def deserialize(text, line=None):
    """Parse one genome line; errors carry the line number and field name."""
    text = text.strip()
    if not text:
        raise ParseError("empty genome record", line)
    fields = {}
    for part in text.split(";"):
        key, sep, value = part.partition("=")
        if not sep:
            raise ParseError(f"expected key=value, got {part!r}", line)
        if key in fields:
            raise ParseError(f"duplicate field {key!r}", line, key)
        fields[key] = value
    if fields.get("v") != str(FORMAT_VERSION):
        raise ParseError(f"unsupported format version {fields.get('v')!r}", line, "v")
    kind = fields.get("kind")
    if kind == "transformer":
        genome = _parse_transformer(fields, line)
    elif kind == "rnn":
        genome = _parse_rnn(fields, line)
    else:
        raise ParseError(f"unknown genome kind {kind!r}", line, "kind")
    return genome.validate()


def _require(fields, names, line):
    for name in names:
        if name not in fields:
            raise ParseError(f"missing field {name!r}", line, name)
    extra = set(fields) - set(names) - {"v", "kind"}
    if extra:
        raise ParseError(f"unexpected field {sorted(extra)[0]!r}", line, sorted(extra)[0])


def _parse_transformer(fields, line):
    _require(fields, ("hidden", "layers"), line)
    hidden = _int(fields["hidden"], line, "hidden")
    layers = []
    if fields["layers"]:
        for chunk in fields["layers"].split(","):
            parts = chunk.split("/")
            if len(parts) != 4:
                raise ParseError(f"layer {chunk!r} must be op/heads/ff_dim/ff_stacks", line, "layers")
            if parts[0] not in ATTN_OPS:
                raise ParseError(f"unknown attention op {parts[0]!r}", line, "layers")
            layers.append(LayerSpec(parts[0], *(_int(p, line, "layers") for p in parts[1:])))
    return TransformerGenome(hidden, layers)


def _parse_rnn(fields, line):
    _require(fields, ("inputs", "nodes", "edges", "out"), line)
    inputs = _parse_roles(fields["inputs"], ("x", "h", "c"), line, "inputs")
    outs = _parse_roles(fields["out"], ("h", "c"), line, "out")
    nodes = []
    for chunk in filter(None, fields["nodes"].split(",")):
        node_id, sep, op = chunk.partition(":")
        if not sep:
            raise ParseError(f"node {chunk!r} must be id:op", line, "nodes")
        if op not in RNN_OPS:
            raise ParseError(f"unknown cell op {op!r}", line, "nodes")
        nodes.append((_int(node_id, line, "nodes"), op))
    edges = []
    for chunk in filter(None, fields["edges"].split(",")):
        a, sep, b = chunk.partition(">")
        if not sep:
            raise ParseError(f"edge {chunk!r} must be src>dst", line, "edges")
        edges.append((_int(a, line, "edges"), _int(b, line, "edges")))
    if "x" not in inputs or "h" not in inputs:
        raise ParseError("inputs must name x and h", line, "inputs")
    if "h" not in outs:
        raise ParseError("out must name h", line, "out")
    return RnnCellGenome(nodes=nodes, edges=edges, x_in=inputs["x"], h_in=inputs["h"], h_out=outs["h"],
                         c_in=inputs.get("c"), c_out=outs.get("c"))


def _parse_roles(value, allowed, line, fieldname):
    roles = {}
    for chunk in value.split(","):
        role, sep, node_id = chunk.partition(":")
        if not sep or role not in allowed or role in roles:
            raise ParseError(f"bad role entry {chunk!r}", line, fieldname)
        roles[role] = _int(node_id, line, fieldname)
    return roles


# -- benchmark tables -----------------------------------------------------------
@dataclass(frozen=True)
class BenchmarkRecord:
    genome: object
    trained_score: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.trained_score):
            raise ValidationError("trained_score must be finite")


def format_record(record):
    parts = [serialize(record.genome), repr(float(record.trained_score))]
    parts += [f"{k}={v}" for k, v in sorted(record.metadata.items())]
    return "\t".join(parts)


def load_records(path):
    """Read a benchmark table: ``genome<TAB>score[<TAB>key=value...]`` per line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.rstrip("\n")
            if not raw.strip() or raw.startswith("#"):
                continue
            cols = raw.split("\t")
            if len(cols) < 2:
                raise ParseError("expected genome<TAB>score", lineno)
            genome = deserialize(cols[0], lineno)
            try:
                score = float(cols[1])
            except ValueError:
                raise ParseError(f"trained score {cols[1]!r} is not a number", lineno, "trained_score") from None
            if not math.isfinite(score):
                raise ParseError("trained score must be finite", lineno, "trained_score")
            meta = {}
            for col in cols[2:]:
                key, sep, value = col.partition("=")
                if not sep:
                    raise ParseError(f"metadata column {col!r} must be key=value", lineno, "metadata")
                meta[key] = value
            records.append(BenchmarkRecord(genome, score, meta))
    return records


def write_records(path, records, header=None):
    """Write a benchmark table; ``header`` lines are emitted as ``#`` comments."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in (header or "").splitlines():
            fh.write(f"# {line}\n")
        for record in records:
            fh.write(format_record(record) + "\n")


def load_genomes(path):
    """Read one serialized genome per line (blank lines and ``#`` comments skipped)."""
    genomes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if raw.strip() and not raw.startswith("#"):
                genomes.append(deserialize(raw.split("\t")[0], lineno))
    return genomes
