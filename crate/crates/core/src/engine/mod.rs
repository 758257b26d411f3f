//! Network execution: the scalar reference path, the parallel vectorized
//! path, and the plan-driven runner that wires layers together with
//! zero-overhead map-major boundaries.

pub mod mode;
pub mod plan;
pub mod reference;
pub mod vectorized;

use std::collections::HashMap;
use std::time::Instant;

use thiserror::Error;

use crate::layout::{
    reorder_from_map_major, reorder_to_map_major, reorder_weight_block, restore_weight_block,
};
use crate::model::{LayerKind, LayerParams, NetworkModel, ParamOrdering, ParameterSet};
use crate::tensor::{LayoutTag, Tensor, TensorShape};

pub use mode::ArithmeticMode;
pub use plan::{build_execution_plan, check_plan, ExecutionPlan, LayerPlan, ModeSpec, PlanConfig};
pub use reference::{run_layer_reference, ConvGeometry};
pub use vectorized::run_layer_vectorized;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("layer `{layer}` is not a conv layer")]
    NotAConvLayer { layer: String },
    #[error("layer `{layer}`: shape mismatch: {msg}")]
    ShapeMismatch { layer: String, msg: String },
    #[error("layout mismatch: expected {expected}, got {actual}")]
    LayoutMismatch { expected: String, actual: String },
    #[error("vector width {0} must be a power of two in [1, 16]")]
    BadVectorWidth(usize),
    #[error("inconsistent configuration: {0}")]
    BadConfig(String),
    #[error("plan parse error: {0}")]
    PlanParse(String),
    #[error("plan does not match model: {0}")]
    PlanMismatch(String),
    #[error("plan built for u={plan} but parameters are reordered for u={params}")]
    WidthMismatch { plan: usize, params: usize },
    #[error("layer `{layer}`: missing parameters")]
    MissingParams { layer: String },
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
}

/// Wall-clock duration of one layer's compute, reorders excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTiming {
    pub layer: String,
    pub millis: f64,
}

/// Counts of explicit reorder passes performed during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReorderStats {
    /// Reorders of the network input before the first consumer.
    pub entry: usize,
    /// Reorders at boundaries between interior layers.
    pub interior: usize,
    /// Final reorder of a map-major terminal output back to row-major.
    pub exit: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: Tensor,
    pub timings: Vec<LayerTiming>,
    pub total_millis: f64,
    pub reorders: ReorderStats,
    /// Map-major terminal buffer before the exit reorder, when the
    /// terminal layer ran map-major. Kept for instrumentation.
    pub terminal_map_major: Option<Tensor>,
}

fn weight_geometry(model: &NetworkModel, idx: usize) -> (usize, usize, usize) {
    match model.layers()[idx].kind {
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (out_channels, in_channels, kernel),
        LayerKind::FullyConnected { out_features } => {
            (out_features, model.layer_input_shape(idx).elements(), 1)
        }
        _ => unreachable!("layer has no parameters"),
    }
}

/// Bring each parameter-carrying layer's weights into the ordering its
/// scheduled path needs: Original for the scalar path, Reordered(u) for
/// the vectorized path. Happens once, before any timing starts.
fn prepare_parameters(
    plan: &ExecutionPlan,
    model: &NetworkModel,
    params: &ParameterSet,
) -> Result<HashMap<usize, LayerParams>, EngineError> {
    if let ParamOrdering::Reordered { u } = params.ordering() {
        if u != plan.u {
            return Err(EngineError::WidthMismatch { plan: plan.u, params: u });
        }
    }
    let mut prepared = HashMap::new();
    for (idx, _, _) in model.parameter_layers() {
        let name = &model.layers()[idx].name;
        let p = params.get(name).ok_or_else(|| EngineError::MissingParams {
            layer: name.clone(),
        })?;
        let (m, n, k) = weight_geometry(model, idx);
        let scalar_path = plan.layers[idx].mode == ArithmeticMode::Precise;
        let entry = match (params.ordering(), scalar_path) {
            (ParamOrdering::Original, true) => p.clone(),
            (ParamOrdering::Original, false) => {
                let mut weights = Vec::new();
                for bank in 0..m {
                    let block = &p.weights[bank * n * k * k..(bank + 1) * n * k * k];
                    weights.extend(reorder_weight_block(block, n, k, plan.u));
                }
                LayerParams {
                    weights,
                    biases: p.biases.clone(),
                }
            }
            (ParamOrdering::Reordered { u }, true) => {
                let padded_bank = crate::tensor::pad_channels(n, u) * k * k;
                let mut weights = Vec::new();
                for bank in 0..m {
                    let block = &p.weights[bank * padded_bank..(bank + 1) * padded_bank];
                    weights.extend(restore_weight_block(block, n, k, u));
                }
                LayerParams {
                    weights,
                    biases: p.biases.clone(),
                }
            }
            (ParamOrdering::Reordered { .. }, false) => p.clone(),
        };
        prepared.insert(idx, entry);
    }
    Ok(prepared)
}

fn convert_layout(t: &Tensor, target: LayoutTag) -> Result<Tensor, EngineError> {
    match (t.layout(), target) {
        (a, b) if a == b => Ok(t.clone()),
        (LayoutTag::RowMajor, LayoutTag::MapMajor { u }) => Ok(reorder_to_map_major(t, u)?),
        (LayoutTag::MapMajor { .. }, LayoutTag::RowMajor) => Ok(reorder_from_map_major(t)?),
        (LayoutTag::MapMajor { .. }, LayoutTag::MapMajor { u }) => {
            Ok(reorder_to_map_major(&reorder_from_map_major(t)?, u)?)
        }
        _ => unreachable!(),
    }
}

/// Execute a network under a plan. The input is reordered once at entry
/// if the first consumer runs map-major; consecutive map-major layers
/// hand buffers over with no reordering; the final output is reordered
/// back to row-major and pad-stripped. Per-layer wall clock is recorded
/// around compute only.
pub fn run_network(
    plan: &ExecutionPlan,
    model: &NetworkModel,
    params: &ParameterSet,
    input: &Tensor,
) -> Result<RunResult, EngineError> {
    check_plan(plan, model)?;
    if input.layout() != LayoutTag::RowMajor {
        return Err(EngineError::LayoutMismatch {
            expected: "row".into(),
            actual: input.layout().to_string(),
        });
    }
    if input.shape() != model.input_shape() {
        return Err(EngineError::ShapeMismatch {
            layer: "input".into(),
            msg: format!(
                "input tensor is {}, model expects {}",
                input.shape(),
                model.input_shape()
            ),
        });
    }
    let prepared = prepare_parameters(plan, model, params)?;

    let mut outputs: Vec<Option<Tensor>> = vec![None; model.layers().len()];
    let mut timings = Vec::new();
    let mut reorders = ReorderStats::default();
    let mut terminal_map_major = None;

    for (idx, layer) in model.layers().iter().enumerate() {
        if layer.kind == LayerKind::Input {
            outputs[idx] = Some(input.clone());
            continue;
        }
        let lp = &plan.layers[idx];

        let mut inputs: Vec<Tensor> = Vec::new();
        for &p in model.predecessors(idx) {
            let t = outputs[p].as_ref().expect("topological order");
            if t.layout() != lp.layout_in {
                if p == model.input_index() {
                    reorders.entry += 1;
                } else {
                    reorders.interior += 1;
                }
                inputs.push(convert_layout(t, lp.layout_in)?);
            } else {
                inputs.push(t.clone());
            }
        }
        let input_refs: Vec<&Tensor> = inputs.iter().collect();

        let start = Instant::now();
        let out = match &layer.kind {
            LayerKind::Input => unreachable!(),
            LayerKind::Conv { .. } => {
                let geom = ConvGeometry::resolve(layer, inputs[0].shape())?;
                let p = prepared.get(&idx).ok_or_else(|| EngineError::MissingParams {
                    layer: layer.name.clone(),
                })?;
                if lp.mode == ArithmeticMode::Precise {
                    reference::conv_reference(&geom, &inputs[0], p)
                } else {
                    run_layer_vectorized(&geom, &inputs[0], p, lp.mode, lp.u, plan.workers)?
                }
            }
            LayerKind::ReLU => reference::relu(&inputs[0]),
            LayerKind::MaxPool { window, stride } => {
                reference::max_pool(&inputs[0], *window, *stride)?
            }
            LayerKind::AvgPool { window, stride } => {
                reference::avg_pool(&inputs[0], *window, *stride)?
            }
            LayerKind::FullyConnected { .. } => {
                let p = prepared.get(&idx).ok_or_else(|| EngineError::MissingParams {
                    layer: layer.name.clone(),
                })?;
                if lp.mode == ArithmeticMode::Precise {
                    reference::fully_connected_reference(&inputs[0], p)
                } else {
                    run_fc_vectorized(&inputs[0], p, lp.mode, lp.u, plan.workers)?
                }
            }
            LayerKind::Softmax => reference::softmax(&inputs[0]),
            LayerKind::Concat => reference::concat(&input_refs)?,
        };
        timings.push(LayerTiming {
            layer: layer.name.clone(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        outputs[idx] = Some(out);
    }

    let terminal = model.terminal_index();
    let mut output = outputs[terminal].take().expect("terminal computed");
    if let LayoutTag::MapMajor { .. } = output.layout() {
        terminal_map_major = Some(output.clone());
        reorders.exit += 1;
        output = reorder_from_map_major(&output)?;
    }
    let total_millis = timings.iter().map(|t| t.millis).sum();
    Ok(RunResult {
        output,
        timings,
        total_millis,
        reorders,
        terminal_map_major,
    })
}

/// Fully connected on the vectorized path: lowered to a 1x1 convolution
/// over the flattened input, which makes the map-major reorder of the
/// flat vector a plain copy plus padding.
fn run_fc_vectorized(
    input: &Tensor,
    params: &LayerParams,
    mode: ArithmeticMode,
    u: usize,
    workers: usize,
) -> Result<Tensor, EngineError> {
    let flat = input.shape().elements();
    let flat_shape = TensorShape::new(flat, 1, 1).expect("non-empty input");
    let flat_input = Tensor::row_major(flat_shape, input.data().to_vec()).expect("length matches");
    let mm = reorder_to_map_major(&flat_input, u)?;
    let geom = ConvGeometry::for_fully_connected(flat, params.biases.len());
    let out = run_layer_vectorized(&geom, &mm, params, mode, u, workers)?;
    Ok(reorder_from_map_major(&out)?)
}
