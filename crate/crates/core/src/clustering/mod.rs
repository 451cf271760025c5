//! K-means (batch and streaming), PCA, grid connected components and
//! cluster purity.

mod components;
mod kmeans;
mod minibatch;
mod pca;
mod purity;

pub use components::{connected_components, Components, Connectivity, LabelGrid, BACKGROUND};
pub use kmeans::{inertia_of, kmeans, kmeans_with, KMeansConfig, KMeansResult};
pub use minibatch::MiniBatchKMeans;
pub use pca::{pca_fit_transform, PcaBasis};
pub use purity::{cluster_purity, contingency};
