"""Teacher-supervised time series forecasting with a student-only runtime.

A lightweight temporal-spectral teacher supervises a LoRA-adapted
transformer student during training; the teacher is stripped at export so
inference runs on the student alone.
"""

from .errors import (ConfigError, DataError, ExportError, NonFiniteError, ShapeError,
                     TllmError)
from .tensor import (ParameterSet, Tensor, check_finite, concat, default_dtype, gelu,
                     matmul, no_grad, set_default_dtype, sigmoid, softmax, tabs, tanh,
                     using_dtype)
from .spectral import (ComplexSpectrum, cs_add, cs_magnitude, cs_mul, cs_power,
                       cs_project, cs_scale, irfft, rfft, threshold_mask)
from .gradcheck import GradCheckReport, grad_check
from .seeding import spawn_rng
from .input_block import (InputBlockParams, build_dictionary, cross_attend, embed,
                          encode, init_input_block, mha, read_embedding_file,
                          self_attend, write_embedding_file)
from .teacher import (CapacitySchedule, TeacherState, adaptive_spectral, attention_pool,
                      decompose, dsp, fusion_gate, init_teacher, select_capacity,
                      teacher_forward, trend_head, warm_init_thresholds)
from .student import (LoraPair, StudentState, TransformerBlockParams, init_student,
                      lora_linear, merge_lora, student_forward)
from .model import GuidanceHeads, JointModel, ModelSpec, build_model
from .distill import (DistillLossReport, EarlyStopper, LossWeights, TrainConfig,
                      TrainResult, guidance_loss, loss_schedule_for_task, sim,
                      total_loss, train, write_history_csv)
from .optim import Adam
from .data import (SeriesDataset, SeriesWindow, ZeroShotBinding, fewshot_take, load_csv,
                   make_splits, synthesize, window_arrays, windows, zeroshot_pair)
from .metrics import (MetricReport, Naive2Model, average_reports, evaluate, fit_naive2,
                      mae, mase, mse, naive2_forecast, owa, repeat_last_forecast, smape)
from .analysis import (AttentionTrace, cka, cka_vs_reference, emit_heatmap_data,
                       group_attention_means, trace_attention, trace_from_snapshots)
from .checkpoint import load_checkpoint, save_checkpoint
from .export import ExportInfo, StudentArtifact, export_student, load_student_artifact
from .config import RunConfig, load_config, save_config_snapshot

__version__ = "0.1.0"
