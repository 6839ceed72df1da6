"""Deep discriminant-analysis clustering (DDAC) and its graph extension (DDAC-G)."""

from .autoencoder import AutoencoderParams, encode, pretrain, reconstruct_loss
from .gcn import DDACG, DdacgConfig, g_clus_loss, gcn_forward, train_ddacg
from .graph import SparseAdjacency, knn_graph, normalize_adjacency, read_edge_list, write_edge_list
from .kmeans import KMeans, KMeansResult, kmeans_fit
from .losses import (
    clus_loss,
    confidence_mask,
    disc_loss,
    orth_loss,
    soft_assign,
    target_distribution,
    total_loss,
)
from .metrics import acc, ari, evaluate, nmi
from .model import DDAC, PRESETS, DdacConfig, TrainResult, train_ddac
from .optim import Adam

__version__ = "0.1.0"
