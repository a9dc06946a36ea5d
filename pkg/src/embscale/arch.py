"""Decoder-only transformer architecture descriptors and the bundled registry.

A descriptor records only the structural quantities that parameter accounting
needs. Attention flavour (rotary positions, fused QKV) follows the GPT-NeoX
convention: there is no learned positional table, and the attention input
projection is a single fused d_model -> 3*d_model dense layer.
"""

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .errors import FormatError, ValidationError

_REGISTRY_RESOURCE = "registry.json"


@dataclass(frozen=True)
class ModelArch:
    """Structural description of a decoder-only transformer."""

    name: str
    n_layers: int
    d_model: int
    d_ff: int
    n_heads: int
    vocab_size: int
    max_seq_len: int = 2048
    tie_embeddings: bool = True

    def __post_init__(self):
        for field_name in ("n_layers", "d_model", "d_ff", "n_heads", "vocab_size", "max_seq_len"):
            value = getattr(self, field_name)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(f"{field_name} must be an integer >= 1, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise ValidationError(
                f"d_model must be divisible by n_heads, got d_model={self.d_model}, n_heads={self.n_heads}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def arch_from_dict(payload: dict) -> ModelArch:
    """Build a descriptor from a plain JSON object, validating field presence."""
    required = {"name", "n_layers", "d_model", "d_ff", "n_heads", "vocab_size"}
    missing = sorted(required - payload.keys())
    if missing:
        raise ValidationError(f"architecture descriptor missing fields: {', '.join(missing)}")
    known = {
        "name", "n_layers", "d_model", "d_ff", "n_heads",
        "vocab_size", "max_seq_len", "tie_embeddings",
    }
    return ModelArch(**{k: v for k, v in payload.items() if k in known})


def load_arch_file(path: str | Path) -> tuple[ModelArch, ...]:
    """Load one descriptor or a registry of descriptors from a JSON document.

    Accepts a single descriptor object, a bare list of descriptors, or a
    wrapper object with a "models" list.
    """
    raw = Path(path).read_bytes()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc.msg}", byte_offset=exc.pos) from exc
    if isinstance(payload, dict) and "models" in payload:
        payload = payload["models"]
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise FormatError(f"{path}: expected a descriptor object or list")
    return tuple(arch_from_dict(entry) for entry in payload)


def builtin_registry() -> tuple[ModelArch, ...]:
    """The bundled registry: the eight Pythia-suite descriptors plus Gemma-2B-class ones."""
    text = resources.files(__package__).joinpath("data", _REGISTRY_RESOURCE).read_text()
    payload = json.loads(text)
    return tuple(arch_from_dict(entry) for entry in payload["models"])


def pythia_registry() -> tuple[ModelArch, ...]:
    """Just the Pythia-suite entries of the bundled registry."""
    return tuple(a for a in builtin_registry() if a.name.startswith("pythia-"))


def find_arch(name: str, registry: tuple[ModelArch, ...] | None = None) -> ModelArch | None:
    """Case-insensitive lookup by name; returns None when unknown."""
    wanted = name.strip().lower()
    for arch in registry if registry is not None else builtin_registry():
        if arch.name.lower() == wanted:
            return arch
    return None
