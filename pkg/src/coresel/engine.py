"""Method registry and dispatch.

Every selection method is callable by name through :func:`run_method`, which
the CLI and the estimator layer both use, so those surfaces stay thin
wrappers over the same code path. Requirements (which trace fields and
splits a method needs) are declared per method and checked up front so a
missing capability fails with the offending artifact files named.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import boundary, geometry, matching, scores, submodular
from .artifact import CoresetResult, DatasetArtifact, budget_from_fraction
from .errors import ArtifactValidationError, MissingTraceError
from .selection import random_select
from .trainer import TrainConfig, train

DEFAULT_PARAMS = {
    "knn": 10,                    # cal neighborhood size
    "gc_lambda": 0.5,             # graph-cut redundancy coefficient
    "omp_lambda": 1.0,            # gradmatch ridge coefficient
    "omp_nonneg": True,
    "eta": 0.1,                   # glister step size
    "refresh_every": None,        # glister relinearization block (default k // 10)
    "grad_space": "error_vector",
    "deepfool_max_iters": 50,
    "deepfool_overshoot": 0.02,
    "head_epochs": 20,            # linear head fit for the deepfool method
    "include_bias": True,         # grand score bias column
    "similarity": "cosine_shifted",
}


@dataclass(frozen=True)
class MethodSpec:
    name: str
    trace_fields: tuple[str, ...] = ()
    needs_validation: bool = False
    scoreable: bool = False  # produces a ScoreVector; supports multi-run averaging
    used_params: tuple[str, ...] = ()


METHODS = {
    spec.name: spec
    for spec in (
        MethodSpec("random"),
        MethodSpec("herding"),
        MethodSpec("kcenter"),
        MethodSpec("cd", trace_fields=("softmax",)),
        MethodSpec("lc", trace_fields=("softmax",), scoreable=True),
        MethodSpec("entropy", trace_fields=("softmax",), scoreable=True),
        MethodSpec("margin", trace_fields=("softmax",), scoreable=True),
        MethodSpec("forgetting", trace_fields=("correctness",), scoreable=True),
        MethodSpec("grand", trace_fields=("error_vectors", "penultimate"),
                   scoreable=True, used_params=("include_bias",)),
        MethodSpec("el2n", trace_fields=("error_vectors",), scoreable=True),
        MethodSpec("importance", trace_fields=("losses",)),
        MethodSpec("cal", trace_fields=("softmax",), scoreable=True,
                   used_params=("knn",)),
        MethodSpec("deepfool", trace_fields=("penultimate",), scoreable=True,
                   used_params=("head_epochs",)),
        MethodSpec("craig", trace_fields=("error_vectors", "penultimate"),
                   used_params=("grad_space",)),
        MethodSpec("gradmatch", trace_fields=("error_vectors", "penultimate"),
                   used_params=("grad_space", "omp_lambda", "omp_nonneg")),
        MethodSpec("glister", trace_fields=("error_vectors", "penultimate"),
                   needs_validation=True, used_params=("eta", "refresh_every")),
        MethodSpec("fl", used_params=("similarity",)),
        MethodSpec("gc", used_params=("similarity", "gc_lambda")),
    )
}


def method_names() -> list[str]:
    return list(METHODS)


def check_requirements(artifact: DatasetArtifact, method: str) -> MethodSpec:
    spec = METHODS.get(method)
    if spec is None:
        raise ArtifactValidationError(
            f"unknown method {method!r}; choose from {', '.join(METHODS)}"
        )
    if spec.trace_fields and artifact.trace is None:
        files = ", ".join(f"{f}.dctf" for f in spec.trace_fields)
        raise MissingTraceError(
            f"method {method!r} requires trace fields {', '.join(spec.trace_fields)} "
            f"({files}) but the artifact has no trace"
        )
    if spec.needs_validation and artifact.validation is None:
        raise MissingTraceError(
            f"method {method!r} requires a validation split "
            "(val_features.dctf, val_labels.dctf and the val_* trace files)"
        )
    return spec


def _merged(params: dict | None) -> dict:
    merged = dict(DEFAULT_PARAMS)
    for key, value in (params or {}).items():
        if key not in DEFAULT_PARAMS:
            raise ArtifactValidationError(f"unknown method parameter {key!r}")
        if value is not None:
            merged[key] = value
    return merged


def _fit_linear_head(artifact: DatasetArtifact, seed: int, epochs: int):
    """Small multinomial logistic head on penultimate features.

    The artifact stores the gradient factorization, not the reference model's
    weights, so the closed-form boundary distance is taken against a freshly
    fitted head in the same representation space.
    """
    cfg = TrainConfig(epochs=epochs, seed=seed)
    model = train("linear", artifact.trace.penultimate, artifact.labels, cfg=cfg)
    return model.w2, model.b2


def compute_scores(artifact: DatasetArtifact, method: str, seed: int = 0,
                   params: dict | None = None) -> scores.ScoreVector:
    """Score vector for a scoreable method (used directly and for averaging)."""
    spec = check_requirements(artifact, method)
    if not spec.scoreable:
        raise ArtifactValidationError(f"method {method!r} does not produce a score vector")
    p = _merged(params)
    trace = artifact.trace
    if method == "lc":
        return scores.least_confidence(trace)
    if method == "entropy":
        return scores.entropy_score(trace)
    if method == "margin":
        return scores.margin_score(trace)
    if method == "forgetting":
        return scores.forgetting_count(trace)
    if method == "grand":
        return scores.grand_score(trace, include_bias=p["include_bias"])
    if method == "el2n":
        return scores.el2n_score(trace)
    if method == "cal":
        return boundary.cal_scores(artifact.features, trace, k_neighbors=p["knn"])
    if method == "deepfool":
        w, b = _fit_linear_head(artifact, seed, p["head_epochs"])
        return boundary.deepfool_margin_linear(w, b, trace.penultimate, artifact.labels)
    raise ArtifactValidationError(f"no score rule for {method!r}")


def run_method(artifact: DatasetArtifact, method: str, fraction: float,
               balanced: bool = False, seed: int = 0,
               params: dict | None = None,
               extra_artifacts: tuple[DatasetArtifact, ...] = ()) -> CoresetResult:
    """Run one selection method at the given fraction and return its coreset.

    ``extra_artifacts`` are additional runs of the same dataset whose score
    vectors are averaged with the primary one before selection (only valid
    for scoreable methods).
    """
    spec = check_requirements(artifact, method)
    p = _merged(params)
    k = budget_from_fraction(artifact.n, fraction)
    labels = artifact.labels

    if extra_artifacts and not spec.scoreable:
        raise ArtifactValidationError(
            f"method {method!r} cannot average scores across runs"
        )

    if spec.scoreable:
        vectors = [compute_scores(artifact, method, seed, p)]
        for other in extra_artifacts:
            check_requirements(other, method)
            if other.n != artifact.n:
                raise ArtifactValidationError("run artifacts disagree in sample count")
            vectors.append(compute_scores(other, method, seed, p))
        vec = scores.average_scores(vectors)
        result = scores.select_by_score(vec, labels, k, balanced, seed, fraction)
        if len(vectors) > 1:
            result.metadata["runs_averaged"] = len(vectors)
        return result

    if method == "random":
        return random_select(labels, k, balanced, seed, fraction)
    if method == "herding":
        return geometry.herding(artifact.features, labels, k, balanced, fraction, seed)
    if method == "kcenter":
        return geometry.k_center_greedy(artifact.features, labels, k, balanced,
                                        seed, fraction=fraction)
    if method == "cd":
        return geometry.contextual_diversity(artifact.trace, labels, k, balanced,
                                             seed, fraction=fraction)
    if method == "importance":
        return scores.importance_sample(artifact.trace, labels, k, balanced,
                                        seed, fraction)
    if method in ("fl", "gc"):
        kind = "facility_location" if method == "fl" else "graph_cut"
        return submodular.submodular_select(
            artifact.features, labels, k, balanced, kind,
            lam=p["gc_lambda"], similarity=p["similarity"], seed=seed,
            fraction=fraction,
        )
    if method in ("craig", "gradmatch"):
        gs = matching.build_gradient_set(artifact.trace, p["grad_space"])
        if method == "craig":
            return matching.craig_select(gs, labels, k, balanced, seed, fraction)
        return matching.omp_gradmatch(gs, labels, k, balanced,
                                      lam=p["omp_lambda"], nonneg=p["omp_nonneg"],
                                      seed=seed, fraction=fraction)
    if method == "glister":
        return matching.glister_select(artifact, artifact.validation, k, balanced,
                                       eta=p["eta"], refresh_every=p["refresh_every"],
                                       seed=seed, fraction=fraction)
    raise ArtifactValidationError(f"no dispatch rule for {method!r}")
