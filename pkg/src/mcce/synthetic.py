"""Synthetic concept data with exact effect oracles.

Generative model, per sample:

    u ~ N(0, I)                                  latent state
    level(a) = argmax(mixing[a] @ u + Gumbel)    per-attribute labels
    e = embed_map @ c + embed_noise * g_e        embedding
    y = c @ outcome_coef + outcome_noise * g_y   black-box logits

where c is the complete one-hot concept vector. Attributes that share a
latent coordinate through their mixing rows are confounded. Adding
standard Gumbel noise before the argmax makes each label a categorical
draw with softmax probabilities, so ties are non-degenerate.

Counterfactual pairs replay a sample's noise draws with one attribute's
level forced, so the paired outputs differ by the exact coefficient
contrast and the paired embeddings by the exact embedding-map contrast.

Stream layout (numpy SeedSequence spawn keys, portable across runs):

    (0, i)  per-sample draws for sample i, in order: latent state,
            per-attribute Gumbel noise in schema order, embedding
            noise, output noise
    (1,)    pair selection (which attributes flip, and to what)
    (2,)    parameter draws for generated configs, rooted at param_seed
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    ConceptSchema,
    Dataset,
    EditPair,
    Sample,
    encode,
    softmax,
    write_text_atomic,
)
from .errors import ValidationError

DEFAULT_ATTRIBUTES = (
    ("ambiance", ("neg", "unk", "pos")),
    ("food", ("neg", "unk", "pos")),
    ("noise", ("neg", "unk", "pos")),
    ("service", ("neg", "unk", "pos")),
)


@dataclass(eq=False)
class SynthConfig:
    """Complete description of one synthetic data draw."""

    n: int
    exo_dim: int
    schema: ConceptSchema
    mixing: dict[str, np.ndarray]  # (n_levels, exo_dim) per attribute
    embed_map: np.ndarray  # (embed_dim, width)
    outcome_coef: np.ndarray  # (width, n_outputs)
    embed_noise: float = 0.0
    outcome_noise: float = 0.0
    hidden: frozenset[str] = frozenset()
    seed: int = 0
    exact_recovery: bool = False

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.exo_dim, (int, np.integer)) or self.exo_dim < 1:
            raise ValidationError(f"exo_dim must be a positive integer, got {self.exo_dim!r}")
        self.hidden = self.schema.check_hidden(self.hidden)
        self.mixing = {name: np.asarray(m, dtype=np.float64) for name, m in self.mixing.items()}
        self.embed_map = np.asarray(self.embed_map, dtype=np.float64)
        self.outcome_coef = np.asarray(self.outcome_coef, dtype=np.float64)
        for name, levels in self.schema.attributes:
            m = self.mixing.get(name)
            if m is None:
                raise ValidationError(f"missing mixing matrix for attribute {name!r}")
            if m.shape != (len(levels), self.exo_dim):
                raise ValidationError(
                    f"mixing[{name!r}] must have shape {(len(levels), self.exo_dim)}, got {m.shape}"
                )
            if not np.isfinite(m).all():
                raise ValidationError(f"mixing[{name!r}] contains non-finite entries")
        extra = set(self.mixing) - set(self.schema.names)
        if extra:
            raise ValidationError(f"mixing matrices for unknown attributes: {sorted(extra)}")
        width = self.schema.width
        if self.embed_map.ndim != 2 or self.embed_map.shape[1] != width:
            raise ValidationError(
                f"embed_map must have {width} columns, got shape {self.embed_map.shape}"
            )
        if self.outcome_coef.ndim != 2 or self.outcome_coef.shape[0] != width:
            raise ValidationError(
                f"outcome_coef must have {width} rows, got shape {self.outcome_coef.shape}"
            )
        if not (np.isfinite(self.embed_map).all() and np.isfinite(self.outcome_coef).all()):
            raise ValidationError("embed_map or outcome_coef contains non-finite entries")
        for label, value in (("embed_noise", self.embed_noise), ("outcome_noise", self.outcome_noise)):
            if not np.isfinite(value) or value < 0.0:
                raise ValidationError(f"{label} must be a finite nonnegative float, got {value!r}")
        if self.exact_recovery:
            if self.embed_noise != 0.0:
                raise ValidationError("exact_recovery requires embed_noise = 0")
            if np.linalg.matrix_rank(self.embed_map) < width:
                raise ValidationError(
                    "exact_recovery requires an embedding map of full column rank"
                )

    @property
    def width(self) -> int:
        return self.schema.width

    @property
    def embed_dim(self) -> int:
        return self.embed_map.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.outcome_coef.shape[1]


@dataclass(eq=False)
class SynthGroundTruth:
    """Oracle bookkeeping: complete labels, clean logits, exact pair effects."""

    outcome_coef: np.ndarray
    labels: dict[str, dict[str, str]] = field(default_factory=dict)
    clean_logits: dict[str, np.ndarray] = field(default_factory=dict)
    pair_effects: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    seed: int = 0
    hidden: tuple[str, ...] = ()


def _sample_rng(config: SynthConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, index)))


def synthesize_sample(
    config: SynthConfig,
    index: int,
    overrides: dict[str, str] | None = None,
    sample_id: str | None = None,
) -> tuple[Sample, np.ndarray]:
    """Draw sample `index`, optionally forcing some attribute levels.

    Noise draws depend only on (seed, index), so a forced-level call
    regenerates the counterfactual of the same underlying draw. Returns
    the sample and its clean (noise-free) output vector; the gold label
    is the argmax of the clean outputs.
    """
    rng = _sample_rng(config, index)
    u = rng.standard_normal(config.exo_dim)
    labels: dict[str, str] = {}
    for name, levels in config.schema.attributes:
        scores = config.mixing[name] @ u + rng.gumbel(size=len(levels))
        labels[name] = levels[int(np.argmax(scores))]
    g_embed = rng.standard_normal(config.embed_dim)
    g_out = rng.standard_normal(config.n_outputs)
    if overrides:
        for attr, level in overrides.items():
            if level not in config.schema.levels(attr):
                raise ValidationError(f"unknown level {level!r} for attribute {attr!r}")
            labels[attr] = level
    c = encode(config.schema, labels)
    clean = c @ config.outcome_coef
    sample = Sample(
        id=sample_id if sample_id is not None else f"s{index:06d}",
        concept_labels=labels,
        embedding=config.embed_map @ c + config.embed_noise * g_embed,
        blackbox_output=clean + config.outcome_noise * g_out,
        gold_label=int(np.argmax(clean)),
    )
    return sample, clean


def generate(config: SynthConfig) -> tuple[Dataset, SynthGroundTruth]:
    """Draw the configured dataset; hidden attributes are masked in the view."""
    truth = SynthGroundTruth(
        outcome_coef=config.outcome_coef.copy(),
        seed=config.seed,
        hidden=tuple(sorted(config.hidden)),
    )
    samples = []
    for i in range(config.n):
        sample, clean = synthesize_sample(config, i)
        samples.append(sample)
        truth.labels[sample.id] = dict(sample.concept_labels)
        truth.clean_logits[sample.id] = clean
    dataset = Dataset(
        schema=config.schema,
        samples=tuple(samples),
        pairs=(),
        hidden_attributes=config.hidden,
    )
    return dataset, truth


def make_pairs(
    dataset: Dataset,
    truth: SynthGroundTruth,
    config: SynthConfig,
    edits_per_sample: int = 1,
) -> tuple[Dataset, list[EditPair]]:
    """Append counterfactual edits of every sample and register their oracles.

    Each sample gets `edits_per_sample` flips on distinct attributes
    (chosen from the pair-selection stream; any attribute may flip,
    hidden or not), regenerated with the sample's own noise draws. The
    edited rows are appended to the returned dataset; fitting still sees
    only the factual rows.
    """
    if dataset.pairs:
        raise ValidationError("make_pairs expects a dataset without existing pairs")
    n_attrs = len(config.schema.names)
    if not isinstance(edits_per_sample, (int, np.integer)) or not 1 <= edits_per_sample <= n_attrs:
        raise ValidationError(
            f"edits_per_sample must be an integer in [1, {n_attrs}], got {edits_per_sample!r}"
        )
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
    names = config.schema.names
    pairs: list[EditPair] = []
    edited_samples: list[Sample] = []
    for i, sample in enumerate(dataset.samples):
        chosen = rng.choice(n_attrs, size=edits_per_sample, replace=False)
        for a in chosen:
            attribute = names[int(a)]
            levels = config.schema.levels(attribute)
            current = sample.concept_labels[attribute]
            alternatives = [lv for lv in levels if lv != current]
            to_level = alternatives[int(rng.integers(len(alternatives)))]
            edited_id = f"{sample.id}__{attribute}__{to_level}"
            edited, clean_edited = synthesize_sample(
                config, i, overrides={attribute: to_level}, sample_id=edited_id
            )
            pairs.append(EditPair(sample.id, edited_id, attribute, current, to_level))
            edited_samples.append(edited)
            truth.labels[edited_id] = dict(edited.concept_labels)
            truth.clean_logits[edited_id] = clean_edited
            truth.pair_effects[(sample.id, edited_id)] = (
                clean_edited - truth.clean_logits[sample.id]
            )
    new_dataset = Dataset(
        schema=dataset.schema,
        samples=dataset.samples + tuple(edited_samples),
        pairs=tuple(pairs),
        hidden_attributes=dataset.hidden_attributes,
        space=dataset.space,
    )
    return new_dataset, pairs


def true_icace(truth: SynthGroundTruth, pair: EditPair) -> np.ndarray:
    """Exact noise-free effect of a registered pair (logit space)."""
    key = (pair.original_id, pair.edited_id)
    if key not in truth.pair_effects:
        raise ValidationError(f"pair {key!r} is not registered in the ground truth")
    return truth.pair_effects[key]


def oracle_effect(truth: SynthGroundTruth, pair: EditPair, space: str) -> np.ndarray:
    """Exact effect in the requested space, from the clean logits."""
    if space == "logit":
        return true_icace(truth, pair)
    if space == "probability":
        key = (pair.original_id, pair.edited_id)
        if key not in truth.pair_effects:
            raise ValidationError(f"pair {key!r} is not registered in the ground truth")
        return softmax(truth.clean_logits[pair.edited_id]) - softmax(
            truth.clean_logits[pair.original_id]
        )
    raise ValidationError(f"space must be 'logit' or 'probability', got {space!r}")


# ---------------------------------------------------------------------------
# generated default configuration


def default_config(
    n: int = 2000,
    seed: int = 0,
    *,
    hidden=(),
    attributes=None,
    n_classes: int = 5,
    embed_dim: int = 16,
    confounding: float = 1.0,
    beta_scale: float = 0.4,
    beta_decay: float = 0.6,
    embed_noise: float = 0.0,
    outcome_noise: float = 0.05,
    param_seed: int = 7,
    exact_recovery: bool = True,
) -> SynthConfig:
    """Confounded default: latent coordinate 0 is shared by every attribute.

    Attribute a with L levels scores level l as
    confounding * w_l * u[0] + w_l * u[1 + a] with w = linspace(-1, 1, L),
    so all attributes co-vary through u[0] and `confounding` sets how
    strongly. The embedding map and outcome coefficients come from the
    parameter stream rooted at `param_seed` (outcome entries are standard
    normal times `beta_scale`), which keeps them fixed while `seed`
    varies the data. When embed_dim >= concept width the embedding map
    is orthonormalized, so each attribute occupies its own embedding
    subspace; a raw Gaussian map leaks every attribute into every
    direction, which penalizes residual-based recovery for reasons that
    have nothing to do with hiding concepts.
    """
    schema = ConceptSchema.of(attributes if attributes is not None else DEFAULT_ATTRIBUTES)
    n_attrs = len(schema.names)
    exo_dim = 1 + n_attrs
    mixing = {}
    for a, (name, levels) in enumerate(schema.attributes):
        w = np.linspace(-1.0, 1.0, len(levels))
        m = np.zeros((len(levels), exo_dim))
        m[:, 0] = confounding * w
        m[:, 1 + a] = w
        mixing[name] = m
    rng = np.random.default_rng(np.random.SeedSequence(param_seed, spawn_key=(2,)))
    embed_map = rng.standard_normal((embed_dim, schema.width))
    if embed_dim >= schema.width:
        q, r = np.linalg.qr(embed_map)
        embed_map = q * np.sign(np.diag(r))  # pin QR's per-column sign
    outcome_coef = beta_scale * rng.standard_normal((schema.width, n_classes))
    # Concepts matter unequally for the outcome, in schema order; mirrors
    # benchmarks where one or two concepts dominate the prediction.
    col = 0
    for a, (_, levels) in enumerate(schema.attributes):
        outcome_coef[col : col + len(levels)] *= beta_decay**a
        col += len(levels)
    return SynthConfig(
        n=n,
        exo_dim=exo_dim,
        schema=schema,
        mixing=mixing,
        embed_map=embed_map,
        outcome_coef=outcome_coef,
        embed_noise=embed_noise,
        outcome_noise=outcome_noise,
        hidden=frozenset(hidden),
        seed=seed,
        exact_recovery=exact_recovery,
    )


# ---------------------------------------------------------------------------
# config and ground-truth files


def load_synth_config(path: str | Path) -> tuple[SynthConfig, int]:
    """Read a config JSON; returns (config, edits_per_sample).

    Two forms are accepted. The explicit form carries the matrices
    (`mixing`, `embed_map`, `outcome_coef`, `exo_dim`). The generated
    form omits all of them and instead accepts the `default_config`
    knobs (`n_classes`, `embed_dim`, `confounding`, `beta_scale`,
    `param_seed`). Common keys: n, seed, attributes, hidden,
    embed_noise, outcome_noise, exact_recovery, edits_per_sample.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    edits = obj.get("edits_per_sample", 1)
    explicit_keys = {"mixing", "embed_map", "outcome_coef"}
    present = explicit_keys & set(obj)
    if present and present != explicit_keys:
        raise ValidationError(
            f"{path}: explicit configs need all of {sorted(explicit_keys)}, got {sorted(present)}"
        )
    try:
        if present:
            schema = ConceptSchema.of(
                (entry["name"], entry["levels"]) for entry in obj["attributes"]
            )
            config = SynthConfig(
                n=obj["n"],
                exo_dim=obj["exo_dim"],
                schema=schema,
                mixing=obj["mixing"],
                embed_map=obj["embed_map"],
                outcome_coef=obj["outcome_coef"],
                embed_noise=float(obj.get("embed_noise", 0.0)),
                outcome_noise=float(obj.get("outcome_noise", 0.0)),
                hidden=frozenset(obj.get("hidden", ())),
                seed=int(obj.get("seed", 0)),
                exact_recovery=bool(obj.get("exact_recovery", False)),
            )
        else:
            attributes = None
            if "attributes" in obj:
                attributes = [(entry["name"], entry["levels"]) for entry in obj["attributes"]]
            kwargs = {}
            for key in (
                "n_classes",
                "embed_dim",
                "confounding",
                "beta_scale",
                "embed_noise",
                "outcome_noise",
                "param_seed",
                "exact_recovery",
            ):
                if key in obj:
                    kwargs[key] = obj[key]
            config = default_config(
                n=obj.get("n", 2000),
                seed=int(obj.get("seed", 0)),
                hidden=frozenset(obj.get("hidden", ())),
                attributes=attributes,
                **kwargs,
            )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed config ({exc})") from exc
    if not isinstance(edits, (int, np.integer)) or edits < 0:
        raise ValidationError(f"{path}: edits_per_sample must be a nonnegative integer")
    return config, int(edits)


def save_ground_truth(truth: SynthGroundTruth, path: str | Path) -> Path:
    obj = {
        "outcome_coef": truth.outcome_coef.tolist(),
        "labels": {sid: truth.labels[sid] for sid in sorted(truth.labels)},
        "clean_logits": {sid: truth.clean_logits[sid].tolist() for sid in sorted(truth.clean_logits)},
        "pairs": [
            {
                "original_id": orig,
                "edited_id": edited,
                "effect": truth.pair_effects[(orig, edited)].tolist(),
            }
            for orig, edited in sorted(truth.pair_effects)
        ],
        "seed": truth.seed,
        "hidden": list(truth.hidden),
    }
    return write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_ground_truth(path: str | Path) -> SynthGroundTruth:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"ground truth file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        truth = SynthGroundTruth(
            outcome_coef=np.asarray(obj["outcome_coef"], dtype=np.float64),
            labels={sid: dict(labels) for sid, labels in obj["labels"].items()},
            clean_logits={
                sid: np.asarray(v, dtype=np.float64) for sid, v in obj["clean_logits"].items()
            },
            pair_effects={
                (p["original_id"], p["edited_id"]): np.asarray(p["effect"], dtype=np.float64)
                for p in obj["pairs"]
            },
            seed=int(obj.get("seed", 0)),
            hidden=tuple(obj.get("hidden", ())),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: malformed ground truth ({exc})") from exc
    return truth
