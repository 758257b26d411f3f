//! Synthesized per-layer execution decisions and their on-disk text form.

use std::str::FromStr;

use crate::engine::mode::ArithmeticMode;
use crate::engine::EngineError;
use crate::model::{LayerKind, NetworkModel};
use crate::tensor::{pad_channels, LayoutTag};

pub const PLAN_HEADER: &str = "cplan v1";

/// Per-layer slice of an [`ExecutionPlan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub name: String,
    pub mode: ArithmeticMode,
    pub u: usize,
    /// Task-grid size: padded output element count for conv layers,
    /// logical element count otherwise.
    pub alpha: usize,
    pub layout_in: LayoutTag,
    pub layout_out: LayoutTag,
}

/// Synthesized execution plan: one entry per model layer, in topological
/// order, plus the global worker count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionPlan {
    pub u: usize,
    pub workers: usize,
    pub layers: Vec<LayerPlan>,
}

impl ExecutionPlan {
    pub fn layer(&self, name: &str) -> Option<&LayerPlan> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Boundaries where a producer's output layout disagrees with a
    /// consumer's input layout; each such boundary costs one reorder pass
    /// at run time.
    pub fn reorder_boundaries(&self, model: &NetworkModel) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            for &p in model.predecessors(idx) {
                if self.layers[p].layout_out != layer.layout_in {
                    out.push((self.layers[p].name.clone(), layer.name.clone()));
                }
            }
        }
        out
    }
}

/// Mode selection fed into [`build_execution_plan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeSpec {
    Global(ArithmeticMode),
    PerLayer(Vec<ArithmeticMode>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanConfig {
    pub u: usize,
    pub workers: usize,
    pub modes: ModeSpec,
}

impl PlanConfig {
    pub fn global(mode: ArithmeticMode, u: usize, workers: usize) -> Self {
        Self {
            u,
            workers,
            modes: ModeSpec::Global(mode),
        }
    }
}

/// Build a consistent plan for a model. Vector-mode conv layers run
/// map-major; Precise conv layers run on the scalar row-major path.
/// ReLU, pooling, and concat pass their predecessor's layout through;
/// fully-connected and softmax layers work on row-major data.
pub fn build_execution_plan(
    model: &NetworkModel,
    config: &PlanConfig,
) -> Result<ExecutionPlan, EngineError> {
    if config.u == 0 || !config.u.is_power_of_two() || config.u > 16 {
        return Err(EngineError::BadVectorWidth(config.u));
    }
    if config.workers == 0 {
        return Err(EngineError::BadConfig("worker count must be >= 1".into()));
    }
    let modes: Vec<ArithmeticMode> = match &config.modes {
        ModeSpec::Global(m) => vec![*m; model.layers().len()],
        ModeSpec::PerLayer(list) => {
            if list.len() != model.layers().len() {
                return Err(EngineError::BadConfig(format!(
                    "mode list has {} entries for {} layers",
                    list.len(),
                    model.layers().len()
                )));
            }
            list.clone()
        }
    };

    let u = config.u;
    let map = LayoutTag::MapMajor { u };
    let mut layers: Vec<LayerPlan> = Vec::with_capacity(model.layers().len());
    for (idx, layer) in model.layers().iter().enumerate() {
        let mode = modes[idx];
        let out_shape = model.output_shape(idx);
        let (layout_in, layout_out, alpha) = match layer.kind {
            LayerKind::Input => (LayoutTag::RowMajor, LayoutTag::RowMajor, out_shape.elements()),
            LayerKind::Conv { .. } => {
                let alpha = pad_channels(out_shape.channels, u) * out_shape.height * out_shape.width;
                if mode == ArithmeticMode::Precise {
                    (LayoutTag::RowMajor, LayoutTag::RowMajor, alpha)
                } else {
                    (map, map, alpha)
                }
            }
            LayerKind::ReLU | LayerKind::MaxPool { .. } | LayerKind::AvgPool { .. } => {
                // Predecessors precede their consumers in topological order.
                let pred = layers[model.predecessors(idx)[0]].layout_out;
                (pred, pred, out_shape.elements())
            }
            LayerKind::Concat => {
                // Common predecessor layout, or row-major if they disagree.
                let pred_layouts: Vec<LayoutTag> = model
                    .predecessors(idx)
                    .iter()
                    .map(|&p| layers[p].layout_out)
                    .collect();
                let common = if pred_layouts.windows(2).all(|w| w[0] == w[1]) {
                    pred_layouts[0]
                } else {
                    LayoutTag::RowMajor
                };
                (common, common, out_shape.elements())
            }
            LayerKind::FullyConnected { .. } | LayerKind::Softmax => {
                (LayoutTag::RowMajor, LayoutTag::RowMajor, out_shape.elements())
            }
        };
        layers.push(LayerPlan {
            name: layer.name.clone(),
            mode,
            u,
            alpha,
            layout_in,
            layout_out,
        });
    }
    Ok(ExecutionPlan {
        u,
        workers: config.workers,
        layers,
    })
}

impl std::fmt::Display for ExecutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{PLAN_HEADER}")?;
        writeln!(f, "u {}", self.u)?;
        writeln!(f, "workers {}", self.workers)?;
        for l in &self.layers {
            writeln!(
                f,
                "layer {} mode={} u={} alpha={} in={} out={}",
                l.name, l.mode, l.u, l.alpha, l.layout_in, l.layout_out
            )?;
        }
        Ok(())
    }
}

fn parse_layout(s: &str) -> Result<LayoutTag, EngineError> {
    if s == "row" {
        return Ok(LayoutTag::RowMajor);
    }
    if let Some(u) = s.strip_prefix("map") {
        let u: usize = u
            .parse()
            .map_err(|_| EngineError::PlanParse(format!("bad layout `{s}`")))?;
        return Ok(LayoutTag::MapMajor { u });
    }
    Err(EngineError::PlanParse(format!("bad layout `{s}`")))
}

impl FromStr for ExecutionPlan {
    type Err = EngineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or("");
        if header.trim() != PLAN_HEADER {
            return Err(EngineError::PlanParse(format!(
                "bad plan header `{header}`"
            )));
        }
        let mut u = None;
        let mut workers = None;
        let mut layers = Vec::new();
        for line in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens.as_slice() {
                ["u", v] => {
                    u = Some(v.parse().map_err(|_| {
                        EngineError::PlanParse(format!("bad u `{v}`"))
                    })?)
                }
                ["workers", v] => {
                    workers = Some(v.parse().map_err(|_| {
                        EngineError::PlanParse(format!("bad workers `{v}`"))
                    })?)
                }
                ["layer", name, rest @ ..] => {
                    let mut mode = None;
                    let mut lu = None;
                    let mut alpha = None;
                    let mut layout_in = None;
                    let mut layout_out = None;
                    for kv in rest {
                        let (key, value) = kv.split_once('=').ok_or_else(|| {
                            EngineError::PlanParse(format!("bad field `{kv}`"))
                        })?;
                        match key {
                            "mode" => {
                                mode = Some(value.parse::<ArithmeticMode>().map_err(|e| {
                                    EngineError::PlanParse(e.to_string())
                                })?)
                            }
                            "u" => {
                                lu = Some(value.parse().map_err(|_| {
                                    EngineError::PlanParse(format!("bad u `{value}`"))
                                })?)
                            }
                            "alpha" => {
                                alpha = Some(value.parse().map_err(|_| {
                                    EngineError::PlanParse(format!("bad alpha `{value}`"))
                                })?)
                            }
                            "in" => layout_in = Some(parse_layout(value)?),
                            "out" => layout_out = Some(parse_layout(value)?),
                            other => {
                                return Err(EngineError::PlanParse(format!(
                                    "unknown field `{other}`"
                                )))
                            }
                        }
                    }
                    let missing =
                        || EngineError::PlanParse(format!("layer {name}: missing field"));
                    layers.push(LayerPlan {
                        name: name.to_string(),
                        mode: mode.ok_or_else(missing)?,
                        u: lu.ok_or_else(missing)?,
                        alpha: alpha.ok_or_else(missing)?,
                        layout_in: layout_in.ok_or_else(missing)?,
                        layout_out: layout_out.ok_or_else(missing)?,
                    });
                }
                _ => {
                    return Err(EngineError::PlanParse(format!("bad line `{line}`")));
                }
            }
        }
        Ok(ExecutionPlan {
            u: u.ok_or_else(|| EngineError::PlanParse("missing u".into()))?,
            workers: workers.ok_or_else(|| EngineError::PlanParse("missing workers".into()))?,
            layers,
        })
    }
}

/// Check that a plan lines up with a model: same layers in the same
/// order, task grids sized by the padded output shapes.
pub fn check_plan(plan: &ExecutionPlan, model: &NetworkModel) -> Result<(), EngineError> {
    if plan.layers.len() != model.layers().len() {
        return Err(EngineError::PlanMismatch(format!(
            "plan has {} layers, model has {}",
            plan.layers.len(),
            model.layers().len()
        )));
    }
    for (idx, (lp, layer)) in plan.layers.iter().zip(model.layers()).enumerate() {
        if lp.name != layer.name {
            return Err(EngineError::PlanMismatch(format!(
                "plan layer `{}` does not match model layer `{}`",
                lp.name, layer.name
            )));
        }
        if matches!(layer.kind, LayerKind::Conv { .. }) {
            let s = model.output_shape(idx);
            let expected = pad_channels(s.channels, lp.u) * s.height * s.width;
            if lp.alpha != expected {
                return Err(EngineError::PlanMismatch(format!(
                    "layer `{}`: alpha {} does not match padded output grid {}",
                    lp.name, lp.alpha, expected
                )));
            }
        }
    }
    Ok(())
}
