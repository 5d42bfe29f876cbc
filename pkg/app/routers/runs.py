"""
Experiment routes: run any command over HTTP and read back persisted runs.
"""

from typing import List

from fastapi import APIRouter, Depends, HTTPException
from fastapi.concurrency import run_in_threadpool

from app.core.dependencies import get_run_store
from app.core.errors import InputError, NLWaveError, NumericalError, ShapeError
from app.services import runner
from app.services.run_store import RunStore
from app.utils.config_loader import load_config_dict
from schemas import RunManifest, RunRequest, RunResponse

router = APIRouter(prefix="/runs", tags=["Runs"])


def raise_http_error(error: NLWaveError):
    """Map simulator errors onto HTTP status codes."""
    if isinstance(error, ShapeError):
        raise HTTPException(status_code=422, detail=error.message) from error
    if isinstance(error, NumericalError):
        raise HTTPException(status_code=500, detail=f"Numerical failure: {error.message}") from error
    raise HTTPException(status_code=400, detail=error.message) from error


async def _execute(command: str, request: RunRequest, store: RunStore) -> RunResponse:
    try:
        config = load_config_dict(request.config, request.overrides)
        if command in ("sweep", "pair"):
            result = await run_in_threadpool(
                getattr(runner, f"execute_{command}"), config, request.seed, None, request.workers, store
            )
        else:
            result = await run_in_threadpool(getattr(runner, f"execute_{command}"), config, request.seed, None, store)
    except NLWaveError as e:
        raise_http_error(e)

    return RunResponse(
        run_id=result.out_dir.name,
        out_dir=str(result.out_dir),
        manifest=result.manifest,
        report=result.report,
    )


@router.post("/simulate", response_model=RunResponse)
async def simulate(request: RunRequest, store: RunStore = Depends(get_run_store)):
    """Integrate one trajectory and persist its records."""
    return await _execute("simulate", request, store)


@router.post("/verify", response_model=RunResponse)
async def verify(request: RunRequest, store: RunStore = Depends(get_run_store)):
    """Run the property suite."""
    return await _execute("verify", request, store)


@router.post("/sweep", response_model=RunResponse)
async def sweep(request: RunRequest, store: RunStore = Depends(get_run_store)):
    """Estimate the absorbing radius from trajectories at several energies."""
    return await _execute("sweep", request, store)


@router.post("/pair", response_model=RunResponse)
async def pair(request: RunRequest, store: RunStore = Depends(get_run_store)):
    """Pair contraction experiment."""
    return await _execute("pair", request, store)


@router.post("/resolvent", response_model=RunResponse)
async def resolvent(request: RunRequest, store: RunStore = Depends(get_run_store)):
    """Solve the stationary resolvent problem."""
    return await _execute("resolvent", request, store)


@router.get("", response_model=List[str])
async def list_runs(store: RunStore = Depends(get_run_store)):
    """Names of the persisted runs."""
    return await run_in_threadpool(store.list_runs)


@router.get("/{run_id}", response_model=RunManifest)
async def get_run(run_id: str, store: RunStore = Depends(get_run_store)):
    """Manifest of a persisted run."""
    try:
        path = store.resolve(run_id)
        return await run_in_threadpool(store.load_manifest, path)
    except InputError as e:
        raise HTTPException(status_code=404, detail=e.message) from e
