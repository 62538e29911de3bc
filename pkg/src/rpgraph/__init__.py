"""Generalizable node representations from random projections of
transition-matrix powers."""
from .graph import (SparseGraph, TransitionMatrix, NodeSplit, load_edge_list,
                    load_labels, transition_matrix, bipartite_square, split_nodes)
from .rproj import (ProjectionConfig, ProjectionSet, init_projection, propagate,
                    save_projections, load_projections)
from .features import (FeatureTable, ExternalEmbeddings, IGF_NAMES, rp_node_features,
                       rp_pair_features, rp_node_table, rp_pair_table, oracle_features,
                       node_feature_names, pair_feature_names, igf_features, igf_table,
                       ri_gram_features, load_embeddings)
from .metrics import (metric_accuracy, metric_auc, metric_mapped_accuracy,
                      majority_baseline)
from .neuralnet import (TrainConfig, mlp, convnet, build_convnet_input, convnet_inputs,
                        train, save_model, load_model)
from .eval import (SbmSpec, generate_sbm, make_pair_samples, GraphSource, ExperimentSpec,
                   load_experiment, evaluate)

__version__ = "0.1.0"
