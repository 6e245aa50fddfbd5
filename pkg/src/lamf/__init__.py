"""Group-wise quantized Llama2-architecture inference engine.

Core pieces: INT8 group quantization (`quant`), the GQMV matrix-vector
kernels (`gqmv`), the transformer forward pass (`model`), double-buffered
layer streaming (`stream`), a stage-level accelerator timing simulator
(`pipesim`), tokenizer and sampling (`textio`), the LAMF model file format
(`modelfile`), and a FastAPI service (`service`) fronted by a thin CLI.
"""

__version__ = "0.1.0"

from .config import ModelConfig
from .engine import GenerateResult, InferenceEngine
from .quant import QuantSpec, QuantizedTensor, dequantize, error_stats, quantize

__all__ = [
    "GenerateResult",
    "InferenceEngine",
    "ModelConfig",
    "QuantSpec",
    "QuantizedTensor",
    "__version__",
    "dequantize",
    "error_stats",
    "quantize",
]
