"""White-box attacks: PGD, MI-FGSM, and SIA, with an optional
quantization-aware (informed) mode.

All three attacks maximize a loss inside an l-inf ball of radius epsilon
around the original image, projecting back to the ball and to [0, 1] after
every step. The informed mode models a defender who dithers inputs: at each
iteration, with probability p_q, the current iterate is quantized before
gradients are taken, and the quantization step is differentiated with a
straight-through estimator (gradient passes through unchanged).

Determinism: every random draw comes from one of three independent streams
spawned from the config seed (random start, STE Bernoulli draws, SIA block
transforms). Attacks with the same arguments produce bit-identical results,
and a p_q = 0 informed attack consumes no draws that the update rule sees,
so it matches the oblivious attack byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dither, imagecore, tinymodel

__all__ = [
    "AttackConfig",
    "SteConfig",
    "SiaParams",
    "AttackResult",
    "SIA_TRANSFORMS",
    "ste_transform",
    "ste_backward",
    "pgd",
    "mifgsm",
    "sia",
    "run_attack",
    "derive_image_seed",
]

_FAMILIES = ("pgd", "mifgsm", "sia")
_STE_MODES = ("fs_dither", "uniform_quantize")

# Per-block transforms with exact adjoints. Scaling multiplies the gradient
# by the same factor; noise addition has identity adjoint; zeroing a block
# zeroes its gradient.
SIA_TRANSFORMS = (
    "identity",
    "hflip",
    "vflip",
    "rot180",
    "scale_0.5",
    "scale_0.8",
    "noise",
    "zero",
)


@dataclass(frozen=True)
class SiaParams:
    """Copy count, per-side block splits, and the block transform set."""

    copies: int = 8
    block_splits: int = 4
    transforms: tuple[str, ...] = SIA_TRANSFORMS

    def __post_init__(self):
        if self.copies < 1:
            raise ValueError(f"copies must be >= 1, got {self.copies}")
        if self.block_splits < 1:
            raise ValueError(f"block_splits must be >= 1, got {self.block_splits}")
        if len(self.transforms) == 0:
            raise ValueError("transform set must not be empty")
        unknown = [t for t in self.transforms if t not in SIA_TRANSFORMS]
        if unknown:
            raise ValueError(
                f"unknown transforms {unknown}; valid: {list(SIA_TRANSFORMS)}"
            )


@dataclass(frozen=True)
class SteConfig:
    """Informed-attacker quantization settings.

    When enabled, each attack iteration quantizes the iterate to k_attack
    levels with probability p_q (one Bernoulli draw per iteration, shared
    by all SIA copies) before gradients are computed.
    """

    enabled: bool = False
    k_attack: int = 3
    p_q: float = 1.0
    mode: str = "fs_dither"

    def __post_init__(self):
        if not 2 <= self.k_attack <= 256:
            raise ValueError(f"k_attack must be in [2, 256], got {self.k_attack}")
        if not 0.0 <= self.p_q <= 1.0:
            raise ValueError(f"p_q must be in [0, 1], got {self.p_q}")
        if self.mode not in _STE_MODES:
            raise ValueError(f"mode must be one of {_STE_MODES}, got {self.mode!r}")


OBLIVIOUS = SteConfig(enabled=False)


@dataclass(frozen=True)
class AttackConfig:
    """Attack family and its l-inf budget, schedule, and seed.

    step_size defaults to 4 * epsilon / steps when left unset. momentum only
    affects mifgsm and sia. sia parameters may be given only for the sia
    family; omitted ones take the documented defaults.
    """

    family: str
    epsilon: float
    steps: int = 50
    step_size: float | None = None
    momentum: float = 1.0
    sia: SiaParams | None = None
    seed: int = 0
    random_start: bool = False

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.step_size is not None and self.steps > 0 and not self.step_size > 0.0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if not self.momentum >= 0.0:
            raise ValueError(f"momentum must be >= 0, got {self.momentum}")
        if self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        if self.sia is not None and self.family != "sia":
            raise ValueError(f"sia parameters are only valid for family 'sia', not {self.family!r}")
        if self.family == "sia" and self.sia is None:
            object.__setattr__(self, "sia", SiaParams())

    @property
    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        if self.steps == 0:
            return 0.0
        return 4.0 * self.epsilon / self.steps


@dataclass
class AttackResult:
    """The adversarial image plus diagnostics.

    linf_norm is the realized max deviation from the original; psnr_db is
    math.inf when the attack left the image untouched. loss_trace holds the
    pre-update loss of each iteration.
    """

    adversarial: np.ndarray
    final_loss: float
    linf_norm: float
    psnr_db: float
    iterations_run: int
    loss_trace: tuple[float, ...] = field(default=())


def derive_image_seed(base_seed: int, image_index: int) -> int:
    """Mix a sweep-level seed with an image index into a per-image seed.

    Uses SeedSequence so the result is stable across platforms and
    independent of evaluation order.
    """
    if base_seed < 0 or image_index < 0:
        raise ValueError("base_seed and image_index must be non-negative")
    ss = np.random.SeedSequence([int(base_seed), int(image_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# STE
# ---------------------------------------------------------------------------

def ste_transform(
    img: np.ndarray, ste: SteConfig | None, rng: np.random.Generator
) -> tuple[np.ndarray, bool]:
    """Quantize img with probability p_q; report whether quantization fired.

    Disabled (or missing) configs return the image unchanged without
    consuming a draw. The backward contract is ste_backward: gradients with
    respect to the transformed image pass through to img unchanged.
    """
    if ste is None or not ste.enabled:
        return img, False
    if rng.random() >= ste.p_q:
        return img, False
    spec = dither.QuantSpec(ste.k_attack)
    if ste.mode == "fs_dither":
        return dither.fs_dither(img, spec), True
    return dither.quantize_uniform(img, spec), True


def ste_backward(grad: np.ndarray) -> np.ndarray:
    """Straight-through estimator backward pass: the gradient is unchanged."""
    return grad


# ---------------------------------------------------------------------------
# SIA block transforms
# ---------------------------------------------------------------------------

def _make_block_plans(
    rng: np.random.Generator,
    params: SiaParams,
    splits: int,
    block_shape: tuple[int, int, int],
    epsilon: float,
) -> list[list[tuple[str, np.ndarray | None]]]:
    """Pre-draw one transform (plus any noise payload) per copy per block.

    Draws happen in a fixed sequential order (copy-major, then block
    row-major) so results do not depend on how copies are later scheduled.
    """
    names = params.transforms
    plans = []
    for _ in range(params.copies):
        plan = []
        for _ in range(splits * splits):
            name = names[int(rng.integers(len(names)))]
            payload = None
            if name == "noise":
                payload = rng.uniform(-epsilon / 2.0, epsilon / 2.0, block_shape)
            plan.append((name, payload))
        plans.append(plan)
    return plans


def _block_forward(block: np.ndarray, name: str, payload) -> np.ndarray:
    if name == "identity":
        return block
    if name == "hflip":
        return block[:, ::-1, :]
    if name == "vflip":
        return block[::-1, :, :]
    if name == "rot180":
        return block[::-1, ::-1, :]
    if name == "scale_0.5":
        return 0.5 * block
    if name == "scale_0.8":
        return 0.8 * block
    if name == "noise":
        return block + payload
    if name == "zero":
        return np.zeros_like(block)
    raise ValueError(f"unknown transform {name!r}")


def _block_adjoint(grad: np.ndarray, name: str, payload) -> np.ndarray:
    if name in ("identity", "noise"):
        return grad
    if name == "hflip":
        return grad[:, ::-1, :]
    if name == "vflip":
        return grad[::-1, :, :]
    if name == "rot180":
        return grad[::-1, ::-1, :]
    if name == "scale_0.5":
        return 0.5 * grad
    if name == "scale_0.8":
        return 0.8 * grad
    if name == "zero":
        return np.zeros_like(grad)
    raise ValueError(f"unknown transform {name!r}")


def _apply_plan(img: np.ndarray, plan, splits: int, adjoint: bool) -> np.ndarray:
    h, w = img.shape[:2]
    bh, bw = h // splits, w // splits
    out = np.empty_like(img)
    k = 0
    for bi in range(splits):
        for bj in range(splits):
            rows = slice(bi * bh, (bi + 1) * bh)
            cols = slice(bj * bw, (bj + 1) * bw)
            name, payload = plan[k]
            block = img[rows, cols, :]
            if adjoint:
                out[rows, cols, :] = _block_adjoint(block, name, payload)
            else:
                out[rows, cols, :] = _block_forward(block, name, payload)
            k += 1
    return out


def _tree_sum(arrays: list[np.ndarray]) -> np.ndarray:
    """Pairwise sum with a fixed reduction tree.

    For identical inputs and a power-of-two count the mean computed from
    this sum reproduces the common value bit-exactly, which keeps the
    identity-transform SIA path indistinguishable from plain MI-FGSM.
    """
    items = list(arrays)
    while len(items) > 1:
        merged = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            merged.append(items[-1])
        items = merged
    return items[0]


def _sia_gradient(
    model: tinymodel.TinyModel,
    img: np.ndarray,
    loss: tinymodel.LossFn,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> tuple[float, np.ndarray]:
    """Average the adjoint-pulled-back gradients over n transformed copies."""
    params = cfg.sia
    splits = params.block_splits
    bh = img.shape[0] // splits
    bw = img.shape[1] // splits
    plans = _make_block_plans(
        rng, params, splits, (bh, bw, img.shape[2]), cfg.epsilon
    )
    grads = []
    losses = []
    for plan in plans:
        copy = _apply_plan(img, plan, splits, adjoint=False)
        value, g = tinymodel.loss_and_input_gradient(model, copy, loss)
        grads.append(_apply_plan(g, plan, splits, adjoint=True))
        losses.append(value)
    mean_grad = _tree_sum(grads) / len(grads)
    return float(np.mean(losses)), mean_grad


# ---------------------------------------------------------------------------
# Attack loop
# ---------------------------------------------------------------------------

def _attack_loop(
    model: tinymodel.TinyModel,
    x_o: np.ndarray,
    loss: tinymodel.LossFn,
    cfg: AttackConfig,
    ste: SteConfig | None,
    use_momentum: bool,
    use_sia: bool,
) -> AttackResult:
    x_o = imagecore.as_image(x_o)
    if x_o.shape != (model.height, model.width, model.channels):
        raise ValueError(
            f"model expects input shape {(model.height, model.width, model.channels)}, "
            f"got {x_o.shape}"
        )
    if use_sia:
        splits = cfg.sia.block_splits
        if x_o.shape[0] % splits or x_o.shape[1] % splits:
            raise ValueError(
                f"image dims {x_o.shape[0]}x{x_o.shape[1]} are not divisible into "
                f"{splits}x{splits} blocks; no implicit padding"
            )

    init_ss, ste_ss, sia_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng = np.random.Generator(np.random.PCG64(init_ss))
    ste_rng = np.random.Generator(np.random.PCG64(ste_ss))
    sia_rng = np.random.Generator(np.random.PCG64(sia_ss))

    eps = cfg.epsilon
    nu = cfg.resolved_step_size
    x = x_o.copy()
    if cfg.random_start and cfg.steps > 0 and eps > 0.0:
        x = np.clip(x_o + init_rng.uniform(-eps, eps, x_o.shape), 0.0, 1.0)

    momentum_buf = np.zeros_like(x_o)
    trace = []
    for _ in range(cfg.steps):
        x_tilde, _ = ste_transform(x, ste, ste_rng)
        if use_sia:
            value, g = _sia_gradient(model, x_tilde, loss, cfg, sia_rng)
        else:
            value, g = tinymodel.loss_and_input_gradient(model, x_tilde, loss)
        g = ste_backward(g)
        trace.append(value)
        if use_momentum:
            l1 = float(np.abs(g).sum())
            if l1 >= 1e-12:
                momentum_buf = cfg.momentum * momentum_buf + g / l1
            direction = np.sign(momentum_buf)
        else:
            direction = np.sign(g)
        x = x + nu * direction
        x = x_o + np.clip(x - x_o, -eps, eps)
        x = np.clip(x, 0.0, 1.0)

    final_loss, _ = tinymodel.loss_and_input_gradient(model, x, loss)
    linf = float(np.max(np.abs(x - x_o)))
    return AttackResult(
        adversarial=x,
        final_loss=final_loss,
        linf_norm=linf,
        psnr_db=imagecore.psnr(x_o, x),
        iterations_run=cfg.steps,
        loss_trace=tuple(trace),
    )


def pgd(model, x_o, loss, cfg: AttackConfig, ste: SteConfig | None = None) -> AttackResult:
    """Projected gradient descent (ascent on the loss) with sign steps."""
    if cfg.family != "pgd":
        raise ValueError(f"pgd requires cfg.family == 'pgd', got {cfg.family!r}")
    return _attack_loop(model, x_o, loss, cfg, ste, use_momentum=False, use_sia=False)


def mifgsm(model, x_o, loss, cfg: AttackConfig, ste: SteConfig | None = None) -> AttackResult:
    """Momentum iterative FGSM: l1-normalized gradients accumulate into the
    momentum buffer; iterations with near-zero gradient leave it unchanged."""
    if cfg.family != "mifgsm":
        raise ValueError(f"mifgsm requires cfg.family == 'mifgsm', got {cfg.family!r}")
    return _attack_loop(model, x_o, loss, cfg, ste, use_momentum=True, use_sia=False)


def sia(model, x_o, loss, cfg: AttackConfig, ste: SteConfig | None = None) -> AttackResult:
    """Structure-invariant attack: each iteration averages gradients over n
    copies whose s x s blocks each receive a random exact-adjoint transform,
    then applies the MI-FGSM update. When quantization fires, it is applied
    to the iterate once, before the copies are built."""
    if cfg.family != "sia":
        raise ValueError(f"sia requires cfg.family == 'sia', got {cfg.family!r}")
    return _attack_loop(model, x_o, loss, cfg, ste, use_momentum=True, use_sia=True)


_RUNNERS = {"pgd": pgd, "mifgsm": mifgsm, "sia": sia}


def run_attack(model, x_o, loss, cfg: AttackConfig, ste: SteConfig | None = None) -> AttackResult:
    """Dispatch to the attack named by cfg.family."""
    return _RUNNERS[cfg.family](model, x_o, loss, cfg, ste)


def attack_config_from_dict(entry: dict) -> AttackConfig:
    """Build an AttackConfig from a JSON-style mapping.

    epsilon may be a number or a string fraction like "8/255". The optional
    "sia" sub-mapping carries copies / block_splits / transforms.
    """
    known = {
        "family", "epsilon", "steps", "step_size", "momentum",
        "sia", "seed", "random_start",
    }
    unknown = entry.keys() - known - {"id", "loss"}
    if unknown:
        raise ValueError(f"unknown attack config keys {sorted(unknown)}")
    if "family" not in entry or "epsilon" not in entry:
        raise ValueError("attack config requires 'family' and 'epsilon'")
    sia_params = None
    if entry.get("sia") is not None:
        s = dict(entry["sia"])
        unknown = s.keys() - {"copies", "block_splits", "transforms"}
        if unknown:
            raise ValueError(f"unknown sia config keys {sorted(unknown)}")
        if "transforms" in s:
            s["transforms"] = tuple(s["transforms"])
        sia_params = SiaParams(**s)
    kwargs = {k: entry[k] for k in known & entry.keys() if k != "sia"}
    kwargs["epsilon"] = parse_intensity(entry["epsilon"])
    if kwargs.get("step_size") is not None:
        kwargs["step_size"] = parse_intensity(kwargs["step_size"])
    return AttackConfig(sia=sia_params, **kwargs)


def ste_config_from_dict(entry: dict) -> SteConfig:
    """Build an SteConfig from a JSON-style mapping."""
    known = {"enabled", "k_attack", "p_q", "mode"}
    unknown = entry.keys() - known - {"id"}
    if unknown:
        raise ValueError(f"unknown ste config keys {sorted(unknown)}")
    return SteConfig(**{k: entry[k] for k in known & entry.keys()})


def parse_intensity(value) -> float:
    """Accept a number or an "a/b" fraction string (e.g. "8/255")."""
    if isinstance(value, str):
        parts = value.split("/")
        if len(parts) != 2:
            raise ValueError(f"expected a number or 'a/b' fraction, got {value!r}")
        try:
            return float(parts[0]) / float(parts[1])
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad fraction {value!r}: {exc}") from exc
    return float(value)
