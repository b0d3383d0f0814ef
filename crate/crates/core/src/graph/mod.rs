//! Single-hop node classification over undirected attributed graphs.

mod head;
mod store;
mod synthetic;

pub use head::{masked_aggregate, node_rep_deepsets, node_rep_set_twister, node_rho_input, NodeModel};
pub use store::{load_graph, save_graph, Graph, GraphFiles};
pub use synthetic::{generate_synthetic_graph, SyntheticGraphConfig};
