"""
FastAPI server for binary inference and checkpoint inspection.
Serves exported bit-packed models and per-layer weight statistics.
"""
from fastapi import FastAPI, File, UploadFile, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from typing import List, Dict, Any, Optional
from pydantic import BaseModel, Field
import logging

import numpy as np

from config import settings
from engines import PackedModel
from models.analysis_output import LayerReport
from training.checkpoint import Checkpoint
from training.evaluation import layer_reports
from utils.errors import BdbnnError, ShapeError

logger = logging.getLogger(__name__)

app = FastAPI(title="BD-BNN Inference API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://localhost:3001"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Request / response models
class ModelInfo(BaseModel):
    model_id: str
    file_name: str
    arch: Optional[str] = None
    variant: Optional[str] = None
    input_shape: List[int]
    num_classes: int
    binarized_layers: int
    word_bits: int
    bytes_packed: int
    bytes_float32: int


class PredictRequest(BaseModel):
    inputs: List[Any] = Field(..., description="Batch shaped [N, *input_shape]")


class PredictResponse(BaseModel):
    model_id: str
    logits: List[List[float]]
    predictions: List[int]


class CheckpointAnalysis(BaseModel):
    checkpoint: str
    mode: str
    layers: List[LayerReport]


# In-memory model registry
packed_models: Dict[str, PackedModel] = {}
model_info: Dict[str, ModelInfo] = {}


async def _read_upload(file: UploadFile) -> bytes:
    content = await file.read()
    limit = settings.max_upload_mb * 1024 * 1024
    if len(content) > limit:
        raise HTTPException(status_code=413, detail=f"Upload exceeds {settings.max_upload_mb} MB")
    return content


@app.get("/")
async def root():
    """Health check endpoint."""
    return {
        "service": "BD-BNN Inference API",
        "status": "running",
        "version": "1.0.0",
        "models_loaded": len(packed_models)
    }


@app.post("/api/models")
async def upload_model(file: UploadFile = File(...)) -> ModelInfo:
    """Register an exported .bdbn model for inference."""
    content = await _read_upload(file)
    try:
        packed = PackedModel.from_bytes(content, source=file.filename or "upload")
    except BdbnnError as e:
        raise HTTPException(status_code=400, detail=str(e))

    model_id = f"model_{len(packed_models) + 1}"
    memory = packed.memory_report()
    info = ModelInfo(
        model_id=model_id,
        file_name=file.filename or "",
        arch=packed.descriptor.get("arch"),
        variant=packed.descriptor.get("variant"),
        input_shape=list(packed.input_shape),
        num_classes=packed.num_classes,
        binarized_layers=len(memory),
        word_bits=packed.word_bits,
        bytes_packed=sum(row.bytes_packed for row in memory),
        bytes_float32=sum(row.bytes_float32 for row in memory),
    )
    packed_models[model_id] = packed
    model_info[model_id] = info
    logger.info("Registered %s (%s, %d binarized layers)", model_id, info.arch, info.binarized_layers)
    return info


@app.post("/api/models/{model_id}/predict")
async def predict(model_id: str, request: PredictRequest) -> PredictResponse:
    """Logits and argmax classes for a batch."""
    packed = packed_models.get(model_id)
    if packed is None:
        raise HTTPException(status_code=404, detail=f"Model not found: {model_id}")
    try:
        images = np.asarray(request.inputs, dtype=np.float64)
        logits = packed.predict(images)
    except (ShapeError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return PredictResponse(
        model_id=model_id,
        logits=logits.tolist(),
        predictions=[int(k) for k in logits.argmax(axis=1)],
    )


@app.post("/api/analyze")
async def analyze_checkpoint(file: UploadFile = File(...)) -> CheckpointAnalysis:
    """Per-layer kurtosis and binarization cosine of an uploaded .bdck checkpoint."""
    content = await _read_upload(file)
    try:
        ckpt = Checkpoint.from_bytes(content, source=file.filename or "upload")
        model = ckpt.to_model()
    except BdbnnError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return CheckpointAnalysis(checkpoint=ckpt.name, mode=ckpt.mode.value, layers=layer_reports(model, with_gradients=False))


@app.get("/api/models")
async def list_models() -> List[ModelInfo]:
    return list(model_info.values())


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("api_server:app", host="0.0.0.0", port=8000, reload=True)
