from departnet.exceptions import ConfigError
from departnet.nn import NetworkSpec

# Hidden layer widths, widest first
ABLATION_HIDDEN: tuple[tuple[int, ...], ...] = (
    (256,),
    (256, 32),
    (256, 64),
    (512, 128, 64),
    (1024, 512, 64, 32),
    (512, 256, 128, 64, 32),
    (1024, 512, 128, 64, 32),
)
OPTIMAL_HIDDEN: tuple[int, ...] = (512, 128, 64)

PRESET_REGISTRY: dict[str, tuple[tuple[int, ...], ...]] = {
    "ablation": ABLATION_HIDDEN,
    "baseline": ((),),
    "optimal": (OPTIMAL_HIDDEN,),
    "ablation+baseline": ((), *ABLATION_HIDDEN),
}


def get_preset(
    name: str, input_dim: int = 173, output_dim: int = 1
) -> list[NetworkSpec]:
    """
    Resolve a preset name to concrete network specs.

    Raises:
        ConfigError: Unknown preset name
    """
    key = name.lower().strip()
    if key not in PRESET_REGISTRY:
        choices = ", ".join(PRESET_REGISTRY)
        msg = f"Unknown architecture preset {name!r}; choose from {choices}"
        raise ConfigError(msg)
    return [
        NetworkSpec(input_dim, hidden, output_dim) for hidden in PRESET_REGISTRY[key]
    ]
