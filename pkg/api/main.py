from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from horpca import metrics, synth
from horpca.errors import IngestError
from horpca.ingest import run_detection
from horpca.solver import Regularizer, SolverConfig, solve

# Créer l'application FastAPI
app = FastAPI(title="Robust Tensor Events API")


# Modèles de données pour les requêtes
class ExperimentRequest(BaseModel):
    spec: synth.SynthSpec
    lambda_: float | None = Field(None, gt=0, alias="lambda")
    mu: float | None = Field(None, gt=0)
    epsilon: float | None = Field(None, gt=0)
    max_iters: int | None = Field(None, ge=1)
    regularizer: Regularizer = Regularizer.L21


class DetectRequest(BaseModel):
    source: str = "dummy"
    start: str
    weeks: int = Field(ge=1)
    lambda_: float | None = Field(None, gt=0, alias="lambda")
    target_ratio: float | None = Field(None, gt=0, lt=1)
    min_coverage: float | None = Field(None, ge=0, le=1)
    timezone: str | None = None
    standardize: bool = False


def _solver_config(lambda_=None, **overrides):
    values = {"lambda_": lambda_, **overrides}
    return SolverConfig(**{key: value for key, value in values.items() if value is not None})


# Endpoint d'expérience synthétique
@app.post("/experiments")
def run_experiment(request: ExperimentRequest):
    """Génère une instance, la résout et renvoie le score"""
    cfg = _solver_config(
        request.lambda_,
        mu=request.mu,
        epsilon=request.epsilon,
        max_iters=request.max_iters,
        regularizer=request.regularizer,
        outlier_mode=request.spec.outlier_mode,
    )
    truth = synth.generate(request.spec)
    result = solve(truth.b, truth.mask, cfg)
    score = metrics.score(result, truth)
    return {"spec": request.spec.model_dump(), "score": score.as_row(), "outlier_fibers": list(result.outlier_fibers)}


# Endpoint de détection d'événements
@app.post("/detect")
def detect(request: DetectRequest):
    """Lance le pipeline d'ingestion et renvoie le rapport d'événements"""
    try:
        _, result, report = run_detection(
            request.source,
            request.start,
            request.weeks,
            lambda_=request.lambda_,
            target_ratio=request.target_ratio,
            min_coverage=request.min_coverage,
            timezone=request.timezone,
            standardize=request.standardize,
            verbose=False,
        )
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except IngestError as e:
        raise HTTPException(status_code=422, detail=str(e))
    payload = report.to_dict()
    payload["iterations"] = result.iterations
    return payload


# Endpoint de santé
@app.get("/health")
def health_check():
    """Vérifier que l'API fonctionne"""
    return {"status": "ok"}
