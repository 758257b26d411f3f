//! CNN inference synthesis: network/parameter parsing, map-major blocked
//! data layouts with zero-overhead output reordering, a scalar reference
//! engine, a parallel vectorized engine with selectable inexact arithmetic
//! modes, and a per-layer mode analyzer driven by a validation dataset.

mod bytes;

pub mod analyzer;
pub mod dataset;
pub mod engine;
pub mod layout;
pub mod model;
pub mod stats;
pub mod tensor;

pub use analyzer::{evaluate_accuracy, select_modes, AnalyzerConfig, ModeAssignment};
pub use dataset::LabeledDataset;
pub use engine::{
    build_execution_plan, run_layer_reference, run_layer_vectorized, run_network, ArithmeticMode,
    EngineError, ExecutionPlan, ModeSpec, PlanConfig, RunResult,
};
pub use layout::{
    coords_map_major, coords_row_major, reorder_from_map_major, reorder_to_map_major,
    reorder_weights, LayoutDescriptor, OutputCoordinate, ThreadIndex,
};
pub use model::{
    parse_model_parameters, parse_network_description, validate, LayerKind, LayerParams,
    LayerSpec, NetworkModel, ParamOrdering, ParameterSet,
};
pub use tensor::{LayoutTag, Tensor, TensorShape};
