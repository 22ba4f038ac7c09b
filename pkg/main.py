from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from datetime import datetime, timezone
from contextlib import asynccontextmanager
import uvicorn

from spiketest import __version__
from spiketest.asymptotics import summarize
from spiketest.config_models import ModelConfig
from spiketest.constants import SERVICE_HOST, SERVICE_PORT
from spiketest.errors import SpikeTestError
from spiketest.factor_inference import CORRECTED, run_test
from spiketest.simulation import sample_spectrum
from response_model import (
    AsymptoticsResponse,
    HealthResponse,
    SimulateRequest,
    SimulateResponse,
    TestRequest,
    TestResponse,
)


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    print(f"Spike test service {__version__} ready")
    yield
    # Shutdown
    print("Spike test service shutdown")

app = FastAPI(title="Spike Test API", version=__version__, lifespan=lifespan)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.post("/api/asymptotics", response_model=AsymptoticsResponse)
async def asymptotics(config: ModelConfig):
    try:
        print(f"📝 Asymptotics for {len(config.alphas or config.lambda_block)} spikes")
        summary = summarize(config.to_model())
        print("✅ Asymptotic summary computed")
        return summary.to_dict()
    except SpikeTestError as e:
        print(f"❌ Asymptotics error: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        print(f"❌ Unexpected asymptotics error: {e}")
        raise HTTPException(status_code=500, detail="Internal server error")


@app.post("/api/test", response_model=TestResponse)
async def factor_test(request: TestRequest):
    try:
        cfg = request.config
        print(f"📝 Testing m0={cfg.m0}, c={cfg.c} on {len(request.eigenvalues)} eigenvalues")
        outcome = run_test(request.eigenvalues, cfg.to_config(), corrected=cfg.procedure == CORRECTED)
        print(f"✅ {outcome.verdict}")
        return TestResponse(**outcome.to_dict(), verdict=outcome.verdict)
    except SpikeTestError as e:
        print(f"❌ Test error: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        print(f"❌ Unexpected test error: {e}")
        raise HTTPException(status_code=500, detail="Internal server error")


@app.post("/api/simulate", response_model=SimulateResponse)
async def simulate(request: SimulateRequest):
    try:
        print(f"📝 Simulating n={request.n}, seed={request.seed}")
        sample = sample_spectrum(request.to_spec(), request.n, request.dist.to_distribution(), request.seed)
        print(f"✅ Drew {sample.p} eigenvalues")
        return sample.to_dict()
    except SpikeTestError as e:
        print(f"❌ Simulation error: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    except Exception as e:
        print(f"❌ Unexpected simulation error: {e}")
        raise HTTPException(status_code=500, detail="Internal server error")


@app.get("/health", response_model=HealthResponse)
async def health_check():
    return HealthResponse(
        status="healthy",
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


if __name__ == "__main__":
    uvicorn.run(app, host=SERVICE_HOST, port=SERVICE_PORT, log_level="info")
