"""Project configuration and the on-disk workspace the CLI operates on.

A workspace holds input meshes, hash-keyed caches of the expensive
precomputations, and an output directory with training artifacts,
correspondence files and reports. Config files are TOML (JSON accepted as
a fallback); every command is idempotent because caches are keyed by mesh
content hashes.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .bench import make_features
from .descriptors import FeatureKind, FeatureSet, FeatureTransform
from .errors import InputError
from .learn import ShapeBundle, TrainConfig
from .mesh import build_operators, geodesic_matrix, load_mesh
from .spectral import eigendecompose, load_spectrum, save_spectrum


@dataclass(frozen=True)
class ProjectConfig:
    """Everything a workspace run needs; mirrors the TOML layout."""

    workspace: str = "."
    meshes: tuple = ()
    k: int = 40
    alpha: float = 0.07
    normalize: bool = True
    feature_kind: str = "hks"
    feature_count: int = 16
    lam_reg: float = 1e-3
    variant: str = "learned"
    route: str = "projection"
    refine: bool = False
    refine_k_init: int = 20
    refine_k_end: int = 40
    refine_step: int = 1
    geodesic_samples: int = 16
    output_dir: str = "out"
    one_based: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not (1 <= self.train.k_init <= self.train.k_end <= self.k):
            raise InputError(
                f"truncation schedule [{self.train.k_init}, {self.train.k_end}] "
                f"not within [1, k={self.k}]"
            )
        if self.variant not in ("fixed", "learned"):
            raise InputError(f"variant must be fixed|learned, got {self.variant!r}")
        if self.route not in ("solver", "projection"):
            raise InputError(f"route must be solver|projection, got {self.route!r}")

    @property
    def workspace_path(self):
        return Path(self.workspace)

    @property
    def cache_dir(self):
        return self.workspace_path / "cache"

    @property
    def out_dir(self):
        return self.workspace_path / self.output_dir

    def mesh_path(self, name):
        """Resolve a mesh reference (path or stem) against the mesh list."""
        candidates = [m for m in self.meshes if m == name or Path(m).stem == name]
        if not candidates:
            raise InputError(f"mesh {name!r} is not in the configured mesh list")
        return self.workspace_path / candidates[0]


_DEFAULT_TOML = """\
[project]
workspace = "{workspace}"
meshes = {meshes}
k = {k}
alpha = {alpha}
normalize = {normalize}
output_dir = "{output_dir}"
geodesic_samples = {geodesic_samples}

[features]
kind = "{feature_kind}"
count = {feature_count}

[match]
variant = "{variant}"
route = "{route}"
refine = {refine}
refine_k_init = {refine_k_init}
refine_k_end = {refine_k_end}
refine_step = {refine_step}
lambda_reg = {lam_reg}
one_based = {one_based}

[train]
learning_rate = {learning_rate}
iterations = {iterations}
k_init = {k_init}
k_end = {k_end}
k_step = {k_step}
seed = {seed}
optimizer = "{optimizer}"
gradient_mode = "{gradient_mode}"
fd_step = {fd_step}
bidirectional = {bidirectional}
shuffle = {shuffle}
pairs = {pairs}
"""


def dump_config(config=None):
    """The configuration rendered as TOML text (defaults when omitted)."""
    config = config or ProjectConfig()
    t = config.train

    def toml_bool(value):
        return "true" if value else "false"

    return _DEFAULT_TOML.format(
        workspace=config.workspace,
        meshes=json.dumps(list(config.meshes)),
        k=config.k,
        alpha=config.alpha,
        normalize=toml_bool(config.normalize),
        output_dir=config.output_dir,
        geodesic_samples=config.geodesic_samples,
        feature_kind=config.feature_kind,
        feature_count=config.feature_count,
        variant=config.variant,
        route=config.route,
        refine=toml_bool(config.refine),
        refine_k_init=config.refine_k_init,
        refine_k_end=config.refine_k_end,
        refine_step=config.refine_step,
        lam_reg=config.lam_reg,
        one_based=toml_bool(config.one_based),
        learning_rate=t.learning_rate,
        iterations=t.iterations,
        k_init=t.k_init,
        k_end=t.k_end,
        k_step=t.k_step,
        seed=t.seed,
        optimizer=t.optimizer,
        gradient_mode=t.gradient_mode,
        fd_step=t.fd_step,
        bidirectional=toml_bool(t.bidirectional),
        shuffle=toml_bool(t.shuffle),
        pairs=json.dumps([list(p) for p in t.pairs]),
    )


def load_config(path):
    """Read a TOML (or JSON) config file into a ProjectConfig."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file {path} does not exist")
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(raw.decode("utf-8"))
    else:
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: bad TOML: {exc}") from exc
    return config_from_dict(data, default_workspace=str(path.parent))


def config_from_dict(data, default_workspace="."):
    project = data.get("project", {})
    features = data.get("features", {})
    match = data.get("match", {})
    train_raw = dict(data.get("train", {}))
    train_raw["pairs"] = tuple(tuple(p) for p in train_raw.get("pairs", ()))
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(train_raw) - known
    if unknown:
        raise InputError(f"unknown train option(s): {sorted(unknown)}")
    train = TrainConfig(**train_raw)
    try:
        return ProjectConfig(
            workspace=project.get("workspace", default_workspace),
            meshes=tuple(project.get("meshes", ())),
            k=int(project.get("k", 40)),
            alpha=float(project.get("alpha", 0.07)),
            normalize=bool(project.get("normalize", True)),
            feature_kind=features.get("kind", "hks"),
            feature_count=int(features.get("count", 16)),
            lam_reg=float(match.get("lambda_reg", 1e-3)),
            variant=match.get("variant", "learned"),
            route=match.get("route", "projection"),
            refine=bool(match.get("refine", False)),
            refine_k_init=int(match.get("refine_k_init", 20)),
            refine_k_end=int(match.get("refine_k_end", 40)),
            refine_step=int(match.get("refine_step", 1)),
            geodesic_samples=int(project.get("geodesic_samples", 16)),
            output_dir=project.get("output_dir", "out"),
            one_based=bool(match.get("one_based", False)),
            train=train,
        )
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc


# -- caches ---------------------------------------------------------------


def _cache_paths(config, stem, mesh_hash):
    prefix = f"{stem}.{mesh_hash[:16]}"
    return {
        "spectrum": config.cache_dir / f"{prefix}.k{config.k}.spec1",
        "features": config.cache_dir
        / f"{prefix}.{config.feature_kind}{config.feature_count}.features.npz",
        "geodesics": config.cache_dir / f"{prefix}.geo{config.geodesic_samples}.npz",
    }


def precompute_mesh(config, mesh_name, force=False):
    """Build (or reuse) every cache for one mesh; returns (paths, fresh)."""
    path = config.mesh_path(mesh_name)
    if not path.exists():
        raise InputError(f"mesh file {path} does not exist")
    mesh = load_mesh(path, normalize=config.normalize)
    paths = _cache_paths(config, Path(path).stem, mesh.content_hash())
    fresh = force or not all(p.exists() for p in paths.values())
    if not fresh:
        return paths, False

    config.cache_dir.mkdir(parents=True, exist_ok=True)
    ops = build_operators(mesh)
    spec = eigendecompose(ops, config.k)
    save_spectrum(spec, paths["spectrum"])
    feats = make_features(mesh, spec, config.feature_kind, config.feature_count)
    np.savez(paths["features"], values=feats.values, kind=feats.kind.value)
    rng = np.random.default_rng(0)
    count = min(config.geodesic_samples, mesh.vertex_count)
    sources = np.sort(rng.choice(mesh.vertex_count, size=count, replace=False))
    np.savez(paths["geodesics"], sources=sources,
             distances=geodesic_matrix(mesh, sources))
    return paths, True


def load_bundle(config, mesh_name):
    """Assemble a ShapeBundle from the caches written by precompute."""
    path = config.mesh_path(mesh_name)
    mesh = load_mesh(path, normalize=config.normalize)
    paths = _cache_paths(config, Path(path).stem, mesh.content_hash())
    if not paths["spectrum"].exists() or not paths["features"].exists():
        raise InputError(
            f"missing cache for mesh {mesh_name!r}; run 'specmatch precompute'"
        )
    ops = build_operators(mesh)
    spec = load_spectrum(paths["spectrum"], ops)
    data = np.load(paths["features"])
    feats = FeatureSet(data["values"], FeatureKind(str(data["kind"])))
    return ShapeBundle(mesh, spec, feats, ops, name=Path(path).stem)


# -- training artifacts ----------------------------------------------------


def save_train_artifacts(config, state):
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    spectrum_hash = ""
    (out / "filter.json").write_text(state.filter.to_json(spectrum_hash))
    (out / "transform.json").write_text(
        json.dumps(
            {
                "rows": state.transform.shape[0],
                "cols": state.transform.shape[1],
                "matrix": state.transform.matrix.tolist(),
            },
            indent=2,
        )
    )
    write_loss_csv(state.loss_history, out / "loss_history.csv")
    return out


def write_loss_csv(losses, path):
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, value in enumerate(losses):
            fh.write(f"{i},{float(value)!r}\n")


def read_loss_csv(path):
    losses = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            losses.append(float(line.split(",")[1]))
    return losses


def load_trained_filter(config, k):
    """The trained filter, or the identity when no training artifact exists."""
    from .basis import InhibitionFilter

    path = config.out_dir / "filter.json"
    if not path.exists():
        return InhibitionFilter.identity(k), False
    filt, _ = InhibitionFilter.from_json(path.read_text())
    if filt.k != k:
        raise InputError(
            f"trained filter has k={filt.k}, configuration wants k={k}"
        )
    return filt, True


def load_trained_transform(config, d):
    path = config.out_dir / "transform.json"
    if not path.exists():
        return FeatureTransform.identity(d), False
    data = json.loads(path.read_text())
    transform = FeatureTransform(np.asarray(data["matrix"], dtype=np.float64))
    if transform.shape[0] != d:
        raise InputError(
            f"trained transform expects d={transform.shape[0]}, features have {d}"
        )
    return transform, True
