"""Problem generation and JSON (de)serialization for the command line tools.

A problem file is a single JSON document with a ``kind`` tag (spectrum,
chain, piecewise, nonlinear) and the numeric payload as nested arrays.
Numbers are encoded with 17 significant digits, so files round-trip without
numeric loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BadInput
from .galerkin import ProjectionSpec
from .linalg import SpectrumSpec, make_similar
from .mcsim import ChainSpec, default_proposal, stationary_distribution
from .nonlinear import NonlinearMap
from .proxmulti import AffineMap
from .pwlinear import PiecewiseAffineMap

KINDS = ("spectrum", "chain", "piecewise", "nonlinear")

__all__ = [
    "Problem",
    "gen_chain",
    "gen_nonlinear",
    "gen_piecewise",
    "gen_problem",
    "gen_spectrum",
    "load_problem",
    "save_problem",
]


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


@dataclass(frozen=True)
class Problem:
    """Deserialized problem file: a kind tag plus its numeric payload."""

    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadInput(f"unknown problem kind {self.kind!r}")

    @property
    def n(self) -> int:
        return int(self.payload["n"])

    @property
    def metadata(self) -> dict:
        return self.payload.get("metadata", {})

    def affine_map(self) -> AffineMap:
        if self.kind not in ("spectrum", "chain"):
            raise BadInput(f"problem kind {self.kind!r} has no single affine map")
        sigma = self.metadata.get("sigma")
        return AffineMap(
            np.array(self.payload["A"], dtype=float),
            np.array(self.payload["b"], dtype=float),
            sigma=None if sigma is None else float(sigma),
        )

    def chain(self) -> ChainSpec:
        if self.kind != "chain":
            raise BadInput("only chain problems carry a sampling chain")
        c = self.payload["chain"]
        return ChainSpec(
            np.array(c["P"], dtype=float),
            np.array(c["initial"], dtype=float),
            int(c.get("seed", 0)),
        )

    def projection(self, xi=None) -> ProjectionSpec:
        """Feature projection; xi defaults to the chain's stationary distribution."""
        if self.kind != "chain":
            raise BadInput("only chain problems carry a feature basis")
        phi = np.array(self.payload["phi"], dtype=float)
        if xi is None:
            xi = stationary_distribution(self.chain())
        return ProjectionSpec(phi, xi)

    def piecewise(self) -> PiecewiseAffineMap:
        if self.kind != "piecewise":
            raise BadInput("not a piecewise problem")
        comps = tuple(
            AffineMap(
                np.array(c["A"], dtype=float),
                np.array(c["b"], dtype=float),
                check_invertible=False,
            )
            for c in self.payload["components"]
        )
        groups = self.payload.get("groups")
        return PiecewiseAffineMap(
            comps,
            self.payload.get("combinator", "min"),
            None if groups is None else tuple(tuple(g) for g in groups),
        )

    def nonlinear_map(self) -> NonlinearMap:
        if self.kind != "nonlinear":
            raise BadInput("not a nonlinear problem")
        spec = self.payload["nonlinear"]
        if spec.get("form") != "tanh_affine":
            raise BadInput(f"unknown nonlinear form {spec.get('form')!r}")
        scale = float(spec["scale"])
        W = np.array(spec["W"], dtype=float)
        offset = np.array(spec["offset"], dtype=float)
        return NonlinearMap(
            self.n,
            lambda x: scale * np.tanh(W @ x) + offset,
            modulus=float(spec["modulus"]),
        )


def save_problem(problem: Problem, path) -> None:
    doc = {"kind": problem.kind, **_encode(problem.payload)}
    text = json.dumps(doc, indent=1, sort_keys=True)
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def load_problem(path) -> Problem:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadInput(f"cannot read problem file {path}: {exc}") from exc
    kind = doc.pop("kind", None)
    if kind not in KINDS:
        raise BadInput(f"problem file {path} has unknown kind {kind!r}")
    return Problem(kind, doc)


def _conjugate_closed_draw(rng, n: int, sigma: float):
    """Random conjugate-closed eigenvalue list with max modulus exactly sigma."""
    evs = [complex(sigma)]
    while len(evs) < n:
        if n - len(evs) >= 2 and rng.random() < 0.5:
            radius = rng.uniform(0.1, 0.9) * sigma
            angle = rng.uniform(0.15, np.pi - 0.15)
            z = radius * np.exp(1j * angle)
            evs.extend([z, z.conjugate()])
        else:
            evs.append(complex(rng.uniform(-0.9, 0.9) * sigma))
    return tuple(evs[:n])


def gen_spectrum(eigenvalues, seed: int = 0, description: str = "") -> Problem:
    """Problem with A = make_similar(eigenvalues) and a random b."""
    evs = tuple(complex(z) for z in eigenvalues)
    A = make_similar(SpectrumSpec(evs, seed))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    b = rng.standard_normal(A.shape[0])
    sigma = max(abs(z) for z in evs)
    payload = {
        "n": A.shape[0],
        "A": A,
        "b": b,
        "metadata": {
            "seed": seed,
            "description": description,
            "eigenvalues": [[z.real, z.imag] for z in evs],
            "sigma": sigma,
        },
    }
    return Problem("spectrum", _encode(payload))


def gen_chain(n: int, s: int, seed: int = 0, sigma: float = 0.8, description: str = "") -> Problem:
    """Linear problem with known sigma, a feature basis, and its proposal chain."""
    if n < 1 or s < 1 or s > n:
        raise BadInput("need 1 <= s <= n")
    if not 0.0 < sigma < 1.0:
        raise BadInput("sigma must lie in (0,1) for chain problems")
    root = np.random.SeedSequence([seed, 2])
    rng = np.random.default_rng(root)
    evs = _conjugate_closed_draw(rng, n, sigma)
    A = make_similar(SpectrumSpec(evs, seed))
    b = rng.standard_normal(n)
    phi = rng.standard_normal((n, s))
    m = AffineMap(A, b, sigma=sigma)
    chain = default_proposal(m, seed)
    payload = {
        "n": n,
        "s": s,
        "A": A,
        "b": b,
        "phi": phi,
        "chain": {"P": chain.P, "initial": chain.initial, "seed": seed},
        "metadata": {"seed": seed, "description": description, "sigma": sigma},
    }
    return Problem("chain", _encode(payload))


def gen_piecewise(
    n: int,
    num_components: int = 2,
    seed: int = 0,
    sigma: float = 0.8,
    combinator: str = "min",
    description: str = "",
) -> Problem:
    """Family of nonnegative row-contraction components (common modulus sigma).

    Nonnegative rows scaled to row sums <= sigma make every component (and
    every row mixture) a sup-norm contraction, so both the monotone and the
    randomized solver apply.
    """
    if num_components < 1:
        raise BadInput("need at least one component")
    if not 0.0 < sigma < 1.0:
        raise BadInput("sigma must lie in (0,1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    components = []
    for _ in range(num_components):
        A = np.abs(rng.standard_normal((n, n)))
        A *= (sigma * rng.uniform(0.5, 1.0, size=n) / A.sum(axis=1))[:, None]
        b = rng.standard_normal(n)
        components.append({"A": A, "b": b})
    payload = {
        "n": n,
        "combinator": combinator,
        "components": components,
        "metadata": {"seed": seed, "description": description, "sigma": sigma},
    }
    return Problem("piecewise", _encode(payload))


def gen_nonlinear(n: int, scale: float = 0.8, seed: int = 0, description: str = "") -> Problem:
    """Componentwise tanh contraction T(x) = scale * tanh(W x) + offset.

    W is orthogonal, so the declared Euclidean modulus is exactly ``scale``.
    """
    if not 0.0 < scale < 1.0:
        raise BadInput("scale must lie in (0,1) to declare a contraction modulus")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    W, _ = np.linalg.qr(rng.standard_normal((n, n)))
    offset = rng.standard_normal(n)
    payload = {
        "n": n,
        "nonlinear": {
            "form": "tanh_affine",
            "scale": scale,
            "W": W,
            "offset": offset,
            "modulus": scale,
        },
        "metadata": {"seed": seed, "description": description},
    }
    return Problem("nonlinear", _encode(payload))


def gen_problem(kind: str, seed: int = 0, **params) -> Problem:
    """Dispatch to the per-kind generator; deterministic given the seed."""
    if kind == "spectrum":
        return gen_spectrum(params.pop("eigenvalues"), seed, **params)
    if kind == "chain":
        return gen_chain(params.pop("n"), params.pop("s"), seed, **params)
    if kind == "piecewise":
        return gen_piecewise(params.pop("n"), params.pop("num_components", 2), seed, **params)
    if kind == "nonlinear":
        return gen_nonlinear(params.pop("n"), params.pop("scale", 0.8), seed, **params)
    raise BadInput(f"unknown problem kind {kind!r}")
