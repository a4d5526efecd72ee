"""nidskit: a deterministic network-intrusion-detection workbench.

Pipeline: KDD-format ingestion -> fit/apply preprocessing (imputation,
fence clipping, one-hot, scaling) -> information-gain feature selection
-> square-grid embedding -> a from-scratch CNN with stochastic pooling
and an optional linear-SVM refinement head, next to six classical
baselines -> stratified holdout / 10-fold evaluation with confusion
metrics and raw-vs-preprocessed comparison reports.
"""

__version__ = "0.1.0"

from .kdd_data import (AttackClass, Dataset, KddRecord, load_dataset,  # noqa: F401
                       map_label, parse_record)
from .preprocess import (PreprocessConfig, PreprocessPlan, apply_plan,  # noqa: F401
                         fit_plan, iqr_fences)
from .feature_select import (DiscretizationSpec, FeatureScore,  # noqa: F401
                             SelectionResult, embed_grid, entropy,
                             info_gain, select_top_k)
from .nn import SgdConfig, grad_check, softmax_cross_entropy  # noqa: F401
from .encnn import (EnCnnConfig, EnCnnModel, build_model, fit_svm_head,  # noqa: F401
                    load_model, predict, save_model, train_model)
from .baselines import (BaselineConfig, TrainedClassifier, fit_classifier,  # noqa: F401
                        load_classifier, predict_classifier, save_classifier)
from .evaluation import (Metrics, confusion_and_metrics, compare_stages,  # noqa: F401
                         cross_validate, grid_search, holdout_split,
                         stratified_kfold)
from .pipeline import ModelSpec, StageConfig, fit_pipeline, load_pipeline  # noqa: F401
