//! Evaluation of latent embeddings: partition agreement, batch mixing on
//! kNN graphs, PCA-based batch regression, k-means and cross-validated
//! classification.

mod agreement;
mod classify;
mod kmeans;
mod knn;
mod labels;
mod pca;

pub use agreement::{ami, ari, fmi, nmi};
pub use classify::{classify_knn_cv, macro_scores, stratified_folds, ClassificationScores};
pub use kmeans::{kmeans, KMeansResult};
pub use knn::{graph_connectivity, ilisi, knet_entropy, knn_graph, KnnGraph};
pub use labels::LabelVector;
pub use pca::{pca, pcr_r2, Pca};
