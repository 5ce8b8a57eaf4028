pub mod engine;
pub mod error;
pub mod field;
pub mod graph;
pub mod integrator_tree;
pub mod interpolation;
pub mod learnfit;
pub mod mesh;
pub mod rff;
pub mod scalar_map;
pub mod separator;
pub mod spectral;
pub mod structured;
pub mod topmask;

pub use engine::{btfi_integrate, bgfi_integrate, ftfi_integrate, EngineOptions, IntegrationSession};
pub use error::{ErrorKind, FtfiError, Result};
pub use field::TensorField;
pub use graph::{Edge, WeightedGraph, WeightedTree};
pub use integrator_tree::{build_integrator_tree, IntegratorTree, ItConfig};
pub use scalar_map::ScalarMap;
pub use structured::{build_multiplier, CrossMultiplier, MultiplierOptions, Strategy, StrategyHint};
