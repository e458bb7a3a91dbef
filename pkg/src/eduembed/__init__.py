"""Cognitive diagnosis and adaptive testing with role-aware text embeddings.

Two-stage engine: Stage 1 fine-tunes a desk-scale attribute encoder
through an interactive diagnoser and freezes per-role textual embedding
tables; Stage 2 integrates those tables with learnable ID embeddings via
task adapters, convex fusion, and contrastive alignment, feeding
transductive, inductive, and zero-shot diagnosis plus a computerized
adaptive testing simulator.
"""

from .aari import AdapterParams, FusionConfig, adapt, align_loss, fuse, total_loss
from .attributes import (AttributeRecord, concept_attribute, exercise_attribute,
                         export_attribute_file, load_attribute_file,
                         student_attribute)
from .cat import CatSession, answer_oracle, pretrain_cat, run_cat, select, update_estimate
from .cdmodels import (CognitiveDiagnoser, FusedCDModel, diagnose, infer_inductive,
                       load_diagnoser, predict_mirt, predict_monotone_mlp,
                       run_zeroshot, save_diagnoser, train_transductive)
from .corpus import (CatSplit, Corpus, DataError, DomainSpec, InductiveSplit,
                     ScoreMatrix, TransductiveSplit, cap_student_responses,
                     compute_acr, filter_min_responses, load_corpus,
                     make_domain_spec, merge_corpora, save_corpus, split_cat,
                     split_inductive, split_transductive, subset_responses,
                     to_score_matrix)
from .encoder import (AttributeEncoder, EmbeddingTable, hash_tokens,
                      load_embedding_file, pool_student, save_embedding_file)
from .metrics import MetricError, acc, auc, doa
from .nncore import (NumericError, OptimState, ParamStore, adam_step, affine,
                     bce, grad_check, load_checkpoint, log_softmax_excluding,
                     save_checkpoint, sigmoid)
from .raif import (DiagnoserState, FrozenTextEncoder, RoleAwareFineTuner,
                   TableEmbedder, concept_align, drp_predict, stage1_loss,
                   train_stage1)
from .synthetic import PlantedModel, make_domain_pair, make_planted_corpus

__version__ = "0.1.0"
