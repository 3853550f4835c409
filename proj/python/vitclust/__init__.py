"""ViT image embeddings, UMAP reduction, k-means clustering and cluster-quality metrics."""

from ._core import (
    ModelConfig,
    ModelWeights,
    VitclustError,
    attention_weights,
    calinski_harabasz,
    davies_bouldin,
    deduplicate,
    embed,
    embed_files,
    fit_ab,
    format_table,
    ingest,
    kmeans,
    load_weights,
    make_blobs,
    model_preset,
    pca,
    predict,
    preprocess,
    random_weights,
    read_store,
    representatives,
    set_num_threads,
    silhouette,
    silhouette_samples,
    umap,
    version,
    write_store,
)

__version__ = version()

__all__ = [
    "ModelConfig",
    "ModelWeights",
    "VitclustError",
    "attention_weights",
    "calinski_harabasz",
    "davies_bouldin",
    "deduplicate",
    "embed",
    "embed_files",
    "fit_ab",
    "format_table",
    "ingest",
    "kmeans",
    "load_weights",
    "make_blobs",
    "model_preset",
    "pca",
    "predict",
    "preprocess",
    "random_weights",
    "read_store",
    "representatives",
    "set_num_threads",
    "silhouette",
    "silhouette_samples",
    "umap",
    "version",
    "write_store",
]
