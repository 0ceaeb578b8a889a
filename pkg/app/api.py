"""
Channel Prediction API
----------------------
Exposes a trained ChannelPredictor via REST endpoints.
Features:
1. Input validation using Pydantic.
2. Lazy loading of the checkpoint (path from CHANPRED_CHECKPOINT).
3. Health check endpoint.
"""

import logging
import os
from functools import lru_cache
from typing import List

import numpy as np
from fastapi import Depends, FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from src.exceptions import DomainError
from src.inference import DEFAULT_CHECKPOINT, ChannelPredictor
from src.predictor import PredictionMode

logger = logging.getLogger(__name__)

app = FastAPI(title="Channel Prediction API", version="1.0")


@lru_cache(maxsize=1)
def get_predictor() -> ChannelPredictor:
    path = os.environ.get("CHANPRED_CHECKPOINT", str(DEFAULT_CHECKPOINT))
    dl_fraction = float(os.environ.get("CHANPRED_DL_FRACTION", "0.5"))
    return ChannelPredictor(path, dl_fraction=dl_fraction)


# --- INPUT SCHEMA ---
class EstimateBlock(BaseModel):
    """UL estimates as (frames x subcarriers) real and imaginary parts."""

    estimates_re: List[List[float]]
    estimates_im: List[List[float]]
    mode: PredictionMode = PredictionMode.OPEN_LOOP
    horizon: int = Field(1, ge=1, le=1000)

    @model_validator(mode="after")
    def _same_shape(self) -> "EstimateBlock":
        re = np.asarray(self.estimates_re, dtype=float)
        im = np.asarray(self.estimates_im, dtype=float)
        if re.ndim != 2 or re.shape != im.shape or re.size == 0:
            raise ValueError("estimates_re and estimates_im must be non-empty matrices of equal shape")
        return self


class Forecast(BaseModel):
    mode: PredictionMode
    n_steps: int
    n_subcarriers: int
    uplink_re: List[List[float]]
    uplink_im: List[List[float]]
    downlink_re: List[List[float]]
    downlink_im: List[List[float]]


@app.get("/")
def health_check():
    """Simple health check to ensure API is running."""
    return {"status": "ok", "service": "Channel Predictor"}


@app.post("/predict", response_model=Forecast)
def predict_channel(block: EstimateBlock, predictor: ChannelPredictor = Depends(get_predictor)):
    """Forecasts UL responses and the DL readout from a block of UL estimates."""
    estimates = np.asarray(block.estimates_re) + 1j * np.asarray(block.estimates_im)
    try:
        result = predictor.predict(estimates, mode=block.mode, horizon=block.horizon)
    except DomainError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception("Prediction failed")
        raise HTTPException(status_code=500, detail=str(e))

    uplink, downlink = result["uplink_forecast"], result["downlink_forecast"]
    return Forecast(
        mode=result["mode"],
        n_steps=result["n_steps"],
        n_subcarriers=result["n_subcarriers"],
        uplink_re=uplink.real.tolist(),
        uplink_im=uplink.imag.tolist(),
        downlink_re=downlink.real.tolist(),
        downlink_im=downlink.imag.tolist(),
    )


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
