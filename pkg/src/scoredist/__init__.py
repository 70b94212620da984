"""Distribution-based image quality scoring toolkit."""

from .distributions import (
    BucketScale,
    ScoreDistribution,
    ava_scale,
    cross_entropy_grad,
    cross_entropy_loss,
    emd,
    softmax,
    squared_emd_grad,
    squared_emd_loss,
    tid_scale,
)
from .errors import (
    DataError,
    DegenerateInputError,
    InfeasibleMomentsError,
    NonConvergenceError,
    NumericalError,
    ScaleMismatchError,
)
from .images import ImageTensor, read_image, write_image
from .maxent import MaxEntSolution, MomentTarget, feasible, fit_maxent
from .metrics import EvalReport, evaluate, lcc, srcc, two_class_accuracy
from .model import (
    ModelParams,
    TrainConfig,
    backward,
    extract_features,
    forward,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .data_io import (
    DatasetRecord,
    SplitSpec,
    generate_synthetic,
    load_counts_file,
    load_dataset_dir,
    load_mos_file,
    save_dataset_dir,
    split,
)
from .tuner import (
    OperatorGrid,
    TuneProtocol,
    TuneResult,
    add_awgn,
    crop_averaged_score,
    default_denoise_grid,
    default_tone_grid,
    denoise,
    tone_adjust,
    tune,
)

__version__ = "0.1.0"
