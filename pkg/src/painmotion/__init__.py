"""Body-movement time-series analysis for pain-related behaviour.

A numpy library implementing sparsely-connected GRU autoencoder ensembles
with a shared latent layer, DTW/barycenter-based information-theoretic
features, a glocal multi-label classifier, example-based multi-label
metrics, and a leave-one-subject-out evaluation pipeline.
"""

__version__ = "0.1.0"

from . import dataset, dtwfeat, glocal, metrics, pipeline, srnn
from .dataset import (
    ChannelStats,
    Dataset,
    MiniBatch,
    MultistreamSample,
    SynthConfig,
    load_dataset,
    loso_splits,
    make_minibatches,
    synthesize_dataset,
    write_dataset,
)
from .dtwfeat import (
    DtwFeatureExtractor,
    HandcraftedFeatures,
    dba,
    discretize,
    dtw,
    export_feature_cdf,
    extract_feature_vector,
    lz76_complexity,
    renyi_entropy,
    shannon_entropy,
    simpson_diversity,
)
from .glocal import (
    GlocalHyper,
    GlocalModel,
    SoftmaxHead,
    encode_labels,
    fit_binary_softmax,
    fit_glocal,
    predict_binary,
    predict_multilabel,
)
from .metrics import (
    EvalReport,
    coverage,
    example_based_accuracy,
    f_measure_multilabel,
    hamming_loss,
    precision_recall_f1_binary,
    ranking_loss,
)
from .pipeline import PipelineConfig, ablation_matrix, cross_validate
from .srnn import (
    EnsembleModel,
    ModelConfig,
    TrainConfig,
    gru_decoder_step,
    gru_encoder_step,
    project_and_fuse,
    sparse_mix,
    train,
)
