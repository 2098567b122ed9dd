"""Sparse-feature datasets: vocabulary, parsing, splits, frequency buckets.

Text format, one instance per line:

    label,field:value,field:value,...

Repeated ``field:`` tokens form a multi-hot slot.  ``,`` and ``:`` are
forbidden inside values; blank lines and ``#`` comments are skipped.
Vocabulary files: header line ``N m``, then one ``id<TAB>field<TAB>value
<TAB>frequency`` line per id.

Global feature ids are dense in [0, N): for each field in schema order, its
values in first-seen order, then the field's reserved unknown id.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ParseError

UNKNOWN_VALUE = "__unknown__"


class FeatureVocabulary:
    """Field schema plus the value <-> global-feature-id maps and frequencies."""

    def __init__(self, fields, value_to_id, id_to_field, id_to_value, frequency, unknown_ids):
        self.fields = list(fields)
        self.value_to_id = value_to_id        # list of dicts, one per field
        self.id_to_field = np.asarray(id_to_field, dtype=np.int64)
        self.id_to_value = list(id_to_value)
        self.frequency = np.asarray(frequency, dtype=np.int64)
        self.unknown_ids = list(unknown_ids)  # one reserved id per field

    @property
    def num_features(self):
        return len(self.id_to_value)

    @property
    def num_fields(self):
        return len(self.fields)

    def encode_record(self, record):
        """Record (field -> list of raw values) to per-field id slots.

        Unseen values map to the field's unknown id; a field with no values
        contributes its unknown id alone, so no slot is ever empty.  Ids
        within a slot are deduplicated preserving order.
        """
        slots = []
        for f_idx, f_name in enumerate(self.fields):
            table = self.value_to_id[f_idx]
            unk = self.unknown_ids[f_idx]
            ids = []
            for v in record.get(f_name, ()):
                gid = table.get(v, unk)
                if gid not in ids:
                    ids.append(gid)
            if not ids:
                ids = [unk]
            slots.append(ids)
        return slots


@dataclass
class SparseInstance:
    label: int
    slots: list  # per-field list of global feature ids, each non-empty

    def all_ids(self):
        return [gid for slot in self.slots for gid in slot]


@dataclass
class Dataset:
    vocabulary: FeatureVocabulary
    instances: list


@dataclass
class FrequencyBuckets:
    """Contiguous equal-count-by-id slices of the frequency-sorted id list."""
    bucket_count: int
    boundaries: list                 # per bucket (min_freq, max_freq)
    assignment: np.ndarray           # global id -> bucket, -1 if absent from training
    frequency: np.ndarray            # training frequency per global id

    def bucket_of_instance(self, instance):
        """Bucket of the instance's rarest feature; unseen features are rarest."""
        ids = instance.all_ids()
        best = None
        for gid in ids:
            key = (int(self.frequency[gid]), gid)
            if best is None or key < best:
                best = key
        b = int(self.assignment[best[1]])
        return 0 if b < 0 else b


def build_vocabulary(records, schema):
    """Assign dense global ids and count per-value frequencies.

    Ids are grouped by field in schema order, values in first-seen order
    across the record stream, with the field's unknown id appended after its
    values.  Frequencies count one occurrence per record per value; records
    missing a field count toward that field's unknown id.
    """
    records = list(records)
    if not records:
        raise EmptyInputError("build_vocabulary: empty record set")
    schema = list(schema)
    declared = set(schema)
    seen_values = [[] for _ in schema]          # first-seen order per field
    seen_sets = [set() for _ in schema]
    counts = [{} for _ in schema]               # value -> count, None key = unknown
    for rec in records:
        for f_name in rec:
            if f_name not in declared:
                raise ParseError(f"undeclared field {f_name!r}")
        for f_idx, f_name in enumerate(schema):
            values = rec.get(f_name, ())
            distinct = []
            for v in values:
                if v not in distinct:
                    distinct.append(v)
            if not distinct:
                counts[f_idx][None] = counts[f_idx].get(None, 0) + 1
                continue
            for v in distinct:
                if v not in seen_sets[f_idx]:
                    seen_sets[f_idx].add(v)
                    seen_values[f_idx].append(v)
                counts[f_idx][v] = counts[f_idx].get(v, 0) + 1

    value_to_id = []
    id_to_field = []
    id_to_value = []
    frequency = []
    unknown_ids = []
    for f_idx in range(len(schema)):
        table = {}
        for v in seen_values[f_idx]:
            table[v] = len(id_to_value)
            id_to_field.append(f_idx)
            id_to_value.append(v)
            frequency.append(counts[f_idx].get(v, 0))
        unknown_ids.append(len(id_to_value))
        id_to_field.append(f_idx)
        id_to_value.append(UNKNOWN_VALUE)
        frequency.append(counts[f_idx].get(None, 0))
        value_to_id.append(table)
    return FeatureVocabulary(schema, value_to_id, id_to_field, id_to_value,
                             frequency, unknown_ids)


def _parse_line(line, line_number):
    tokens = line.split(",")
    try:
        label = int(tokens[0])
    except ValueError:
        raise ParseError(f"bad label {tokens[0]!r}", line_number) from None
    if label not in (0, 1):
        raise ParseError(f"label must be 0 or 1, got {label}", line_number)
    record = {}
    for tok in tokens[1:]:
        if ":" not in tok:
            raise ParseError(f"malformed token {tok!r} (expected field:value)", line_number)
        f_name, value = tok.split(":", 1)
        if not f_name or not value:
            raise ParseError(f"malformed token {tok!r}", line_number)
        record.setdefault(f_name, []).append(value)
    return label, record


def read_raw(path):
    """Read (label, record) pairs plus the field order of first appearance."""
    labels, records, schema = [], [], []
    seen_fields = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            label, record = _parse_line(line, line_number)
            labels.append(label)
            records.append(record)
            for f_name in record:
                if f_name not in seen_fields:
                    seen_fields.add(f_name)
                    schema.append(f_name)
    return labels, records, schema


def parse_dataset(path, vocabulary=None, mode="build"):
    """Parse a dataset file; build mode constructs the vocabulary first."""
    if mode not in ("build", "apply"):
        raise ValueError(f"parse_dataset: unknown mode {mode!r}")
    labels, records, schema = read_raw(path)
    if mode == "build":
        vocabulary = build_vocabulary(records, schema)
    elif vocabulary is None:
        raise ValueError("parse_dataset: apply mode requires a vocabulary")
    instances = [SparseInstance(label=lab, slots=vocabulary.encode_record(rec))
                 for lab, rec in zip(labels, records)]
    return Dataset(vocabulary=vocabulary, instances=instances)


def serialize_dataset(dataset, path):
    vocab = dataset.vocabulary
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            parts = [str(inst.label)]
            for slot in inst.slots:
                for gid in slot:
                    f_name = vocab.fields[vocab.id_to_field[gid]]
                    parts.append(f"{f_name}:{vocab.id_to_value[gid]}")
            fh.write(",".join(parts) + "\n")


def save_vocabulary(vocabulary, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{vocabulary.num_features} {vocabulary.num_fields}\n")
        for gid in range(vocabulary.num_features):
            f_name = vocabulary.fields[vocabulary.id_to_field[gid]]
            fh.write(f"{gid}\t{f_name}\t{vocabulary.id_to_value[gid]}"
                     f"\t{vocabulary.frequency[gid]}\n")


def load_vocabulary(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("vocabulary header must be 'N m'", 1)
        n, m = int(header[0]), int(header[1])
        fields = []
        field_index = {}
        value_to_id = []
        id_to_field = np.empty(n, dtype=np.int64)
        id_to_value = [None] * n
        frequency = np.empty(n, dtype=np.int64)
        unknown_ids = []
        for line_number in range(2, n + 2):
            parts = fh.readline().rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ParseError("vocabulary row must have 4 tab-separated fields", line_number)
            gid, f_name, value, freq = int(parts[0]), parts[1], parts[2], int(parts[3])
            if f_name not in field_index:
                field_index[f_name] = len(fields)
                fields.append(f_name)
                value_to_id.append({})
                unknown_ids.append(None)
            f_idx = field_index[f_name]
            id_to_field[gid] = f_idx
            id_to_value[gid] = value
            frequency[gid] = freq
            if value == UNKNOWN_VALUE:
                unknown_ids[f_idx] = gid
            else:
                value_to_id[f_idx][value] = gid
    if len(fields) != m or any(u is None for u in unknown_ids):
        raise ParseError("vocabulary file inconsistent with its header")
    return FeatureVocabulary(fields, value_to_id, id_to_field, id_to_value,
                             frequency, unknown_ids)


def split_dataset(dataset, ratios, seed):
    """Deterministic three-way split; sizes are cumulative-rounded ratios."""
    if not dataset.instances:
        raise EmptyInputError("split_dataset: empty dataset")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"split_dataset: ratios must be 3 positive values, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split_dataset: ratios must sum to 1, got {sum(ratios)}")
    n = len(dataset.instances)
    perm = np.random.default_rng(seed).permutation(n)
    cuts = [int(round(sum(ratios[:k + 1]) * n)) for k in range(3)]
    cuts[2] = n
    pieces = []
    lo = 0
    for hi in cuts:
        idx = perm[lo:hi]
        pieces.append(Dataset(vocabulary=dataset.vocabulary,
                              instances=[dataset.instances[i] for i in idx]))
        lo = hi
    return tuple(pieces)


def count_frequencies(split, num_features):
    """Occurrences of each global id across a split (once per instance slot)."""
    freq = np.zeros(num_features, dtype=np.int64)
    for inst in split.instances:
        for gid in inst.all_ids():
            freq[gid] += 1
    return freq


def compute_frequency_buckets(train_split, bucket_count):
    """Sort training ids by frequency and slice into near-equal-count buckets.

    Bucket 0 holds the rarest ids; ties break by id.  Sizes differ by at
    most one, with the remainder going to the rarest buckets.
    """
    if bucket_count < 2:
        raise ValueError(f"compute_frequency_buckets: bucketCount must be >= 2, got {bucket_count}")
    num_features = train_split.vocabulary.num_features
    freq = count_frequencies(train_split, num_features)
    present = np.flatnonzero(freq > 0)
    if present.size < bucket_count:
        raise ValueError(f"compute_frequency_buckets: only {present.size} distinct ids "
                         f"for {bucket_count} buckets")
    order = present[np.lexsort((present, freq[present]))]
    base, extra = divmod(order.size, bucket_count)
    assignment = np.full(num_features, -1, dtype=np.int64)
    boundaries = []
    lo = 0
    for b in range(bucket_count):
        size = base + (1 if b < extra else 0)
        ids = order[lo:lo + size]
        assignment[ids] = b
        boundaries.append((int(freq[ids].min()), int(freq[ids].max())))
        lo += size
    return FrequencyBuckets(bucket_count=bucket_count, boundaries=boundaries,
                            assignment=assignment, frequency=freq)
