"""Run configuration: ``[section]`` headers with ``key = value`` lines and ``#`` comments.

Every key has a typed default below; unknown sections or keys are rejected.
The effective (defaults-merged) configuration is echoed into every report.
"""

import configparser
from dataclasses import dataclass

from ..exceptions import ConfigError


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


_PARSERS = {bool: _bool, int: int, float: float, str: str, tuple: _ints}

# section -> key -> (type, default, description)
SCHEMA = {
    "data": {
        "n": (int, 2500, "images generated before the train/test split"),
        "classes": (int, 3, "number of shape classes (2-4)"),
        "size": (int, 8, "image side length in pixels"),
        "noise_std": (float, 0.03, "Gaussian pixel noise"),
        "intensity_min": (float, 0.1, "lowest stroke contrast above the background"),
        "intensity_max": (float, 0.2, "highest stroke contrast above the background"),
        "background": (float, 0.4, "constant background level"),
        "jitter": (bool, True, "random +-1 px offsets"),
        "train_fraction": (float, 0.8, "stratified train share"),
    },
    "flow": {
        "high_res_blocks": (int, 4, "coupling pairs before the squeeze"),
        "low_res_blocks": (int, 6, "coupling pairs after the squeeze"),
        "fc_blocks": (int, 6, "coupling pairs on the split-off quarter"),
        "hidden": (tuple, (64, 64), "subnet hidden widths"),
        "alpha": (float, 1.5, "soft clamp bound on log-scales"),
        "delta": (float, 0.05, "logit preprocessing margin"),
        "lr": (float, 1e-4, "initial Adam learning rate"),
        "lr_final": (float, 1e-6, "final learning rate of the exponential schedule"),
        "batch_size": (int, 64, "minibatch size"),
        "epochs": (int, 30, "training epochs"),
        "dequantize": (bool, True, "uniform dequantization of training images"),
    },
    "classifier": {
        "hidden": (tuple, (64, 64), "hidden widths of the target MLP"),
        "lr": (float, 1e-3, "Adam learning rate"),
        "epochs": (int, 30, "training epochs"),
        "batch_size": (int, 64, "minibatch size"),
        "adv_eps": (float, 8 / 255, "PGD training radius (defended model)"),
        "adv_steps": (int, 7, "inner PGD steps (defended model)"),
        "adv_step_size": (float, 2 / 255, "inner PGD step size (defended model)"),
    },
    "attack": {
        "eps": (float, 8 / 255, "threat-ball radius"),
        "norm": (str, "inf", "threat-ball norm: inf or 2"),
        "budget": (int, 10_000, "oracle queries per example"),
        "examples": (int, 100, "correctly classified test images attacked by eval"),
        "sigma": (float, 0.1, "latent noise std"),
        "n_samples": (int, 20, "latent candidates per iteration"),
        "k": (int, 4, "elites averaged into the latent shift"),
        "max_iters": (int, 500, "latent search iterations"),
        "sigma_init": (float, 0.01, "scale of the initial latent shift"),
        "nes_profile": (str, "vanilla", "NES hyperparameter profile: vanilla or defended"),
        "nes_lr": (float, 0.01, "NES image learning rate"),
        "nes_max_iters": (int, 10_000, "NES iteration cap"),
        "pgd_steps": (int, 100, "white-box PGD steps"),
        "index": (int, 0, "test example attacked by the attack subcommand"),
    },
    "io": {
        "out": (str, "runs", "output directory"),
        "seed": (int, 0, "master seed for every stage"),
        "gain": (float, 5.0, "perturbation magnification in image dumps"),
    },
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self):
        return {s: {k: list(v) if isinstance(v, tuple) else v for k, v in kv.items()}
                for s, kv in self.values.items()}

    def override(self, section, key, value):
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"unknown key [{section}] {key}")
        self.values[section][key] = value
        validate(self.values)


def defaults():
    return {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def validate(values):
    d, a, f = values["data"], values["attack"], values["flow"]
    checks = [
        (d["classes"] in (2, 3, 4), "[data] classes must be 2, 3 or 4"),
        (d["size"] >= 8 and d["size"] % 2 == 0, "[data] size must be even and >= 8"),
        (0 < d["train_fraction"] < 1, "[data] train_fraction must lie in (0, 1)"),
        (0 <= d["background"] + d["intensity_max"] <= 1, "[data] background + intensity_max must lie in [0, 1]"),
        (0 <= d["intensity_min"] <= d["intensity_max"], "[data] intensity range is empty"),
        (a["norm"] in ("inf", "2"), "[attack] norm must be inf or 2"),
        (a["eps"] > 0 and a["sigma"] > 0, "[attack] eps and sigma must be positive"),
        (1 <= a["k"] <= a["n_samples"], "[attack] need 1 <= k <= n_samples"),
        (a["budget"] >= 1, "[attack] budget must be positive"),
        (a["nes_profile"] in ("vanilla", "defended"), "[attack] nes_profile must be vanilla or defended"),
        (0 < f["delta"] < 0.5, "[flow] delta must lie in (0, 0.5)"),
        (f["alpha"] > 0, "[flow] alpha must be positive"),
        (f["lr"] > 0 and f["lr_final"] > 0, "[flow] learning rates must be positive"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def parse_config(text=""):
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from err
    values = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
            typ = SCHEMA[section][key][0]
            try:
                values[section][key] = _PARSERS[typ](raw)
            except ValueError as err:
                raise ConfigError(f"[{section}] {key}: {err}") from err
    validate(values)
    return RunConfig(values)


def load_config(path=None):
    if path is None:
        return parse_config("")
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from err


def render_defaults():
    """The default configuration as config-file text, one documented key per line."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (typ, default, doc) in keys.items():
            value = ",".join(map(str, default)) if typ is tuple else str(default).lower() \
                if typ is bool else str(default)
            lines.append(f"{key} = {value}  # {doc}")
        lines.append("")
    return "\n".join(lines)
