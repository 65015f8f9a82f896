pub mod bipartite;
pub mod error;
pub mod estimator;
pub mod generators;
pub mod graph;
pub mod inference;
pub mod io;
pub mod moments;
pub mod simulation;
pub mod solve;
pub mod sparse;
pub mod spectral;
pub mod stats;

pub use error::{NetError, Result};
pub use graph::{build_graph, connected_components, largest_component, Graph, GraphMatrices};
