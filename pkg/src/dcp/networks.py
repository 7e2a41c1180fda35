"""Small fully connected networks: feature extractors, heads, discriminator.

Both branches of the model use structurally identical extractors with
independent parameters; architecture defaults live in the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor, matmul

OUTPUT_ACTIVATIONS = ("none", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (first entry = input dim) plus the output nonlinearity.

    Hidden layers are always relu; the output layer is linear or sigmoid.
    """

    layer_widths: tuple[int, ...]
    output_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError(f"need at least input and output widths, got {widths}")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}, got {self.output_activation!r}"
            )

    @property
    def d_in(self) -> int:
        return self.layer_widths[0]

    @property
    def d_out(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


@dataclass
class Params:
    """Per-layer weight (w_out x w_in) and bias (w_out x 1) tensors."""

    weights: list[Tensor]
    biases: list[Tensor]

    def tensors(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_params(spec: MlpSpec, seed: int) -> Params:
    """Glorot-uniform weights and zero biases from a seeded generator."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for w_in, w_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = np.sqrt(6.0 / (w_in + w_out))
        weights.append(Tensor(rng.uniform(-bound, bound, size=(w_out, w_in)), requires_grad=True))
        biases.append(Tensor(np.zeros((w_out, 1)), requires_grad=True))
    return Params(weights=weights, biases=biases)


def forward(params: Params, spec: MlpSpec, x: Tensor) -> Tensor:
    """Run the batch (rows = samples) through every layer."""
    if x.cols != spec.d_in:
        raise ShapeError(f"input has {x.cols} columns, spec expects {spec.d_in}")
    h = x
    last = spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = matmul(h, w.T) + b.T
        if i < last:
            h = h.relu()
        elif spec.output_activation == "sigmoid":
            h = h.sigmoid()
    return h


@dataclass
class Mlp:
    """A spec bundled with its parameters; callable on a batch tensor."""

    spec: MlpSpec
    params: Params

    @classmethod
    def create(cls, spec: MlpSpec, seed: int) -> "Mlp":
        return cls(spec=spec, params=init_params(spec, seed))

    def __call__(self, x: Tensor) -> Tensor:
        return forward(self.params, self.spec, x)


def softmax_rows(values: np.ndarray) -> np.ndarray:
    """Row-stabilized softmax on a plain array (reporting path, no gradient)."""
    z = values - values.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


@dataclass
class BranchOutputs:
    """Features, logits, and the derived hard labels and confidences."""

    features: Tensor
    logits: Tensor
    predicted_labels: np.ndarray = field(repr=False)
    confidence: np.ndarray = field(repr=False)


def branch_outputs(extractor: Mlp, head: Mlp, x: Tensor) -> BranchOutputs:
    """Extractor then head; argmax ties break toward the lowest index."""
    features = extractor(x)
    logits = head(features)
    probs = softmax_rows(logits.values)
    return BranchOutputs(
        features=features,
        logits=logits,
        predicted_labels=probs.argmax(axis=1),
        confidence=probs.max(axis=1),
    )
