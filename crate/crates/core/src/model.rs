//! Network descriptions, shape inference, and trained-parameter files.
//!
//! The network description is a line-oriented text format, one layer per
//! line, `#` comments. Parameters travel in the binary `CPPO` format:
//! magic bytes, a version word, then per conv/fc layer (in topological
//! order) a length-prefixed weight block and a length-prefixed bias block,
//! all little-endian.

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::bytes;
use crate::tensor::TensorShape;

pub const CPPO_MAGIC: &[u8; 4] = b"CPPO";
pub const CPPO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown layer kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("layer `{layer}`: dangling predecessor reference `{pred}`")]
    DanglingPredecessor { layer: String, pred: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateName(String),
    #[error("cycle detected in layer graph")]
    Cycle,
    #[error("network must have exactly one input layer")]
    InputCount,
    #[error("network must have exactly one terminal layer (found {0})")]
    TerminalCount(usize),
    #[error("layer `{layer}`: non-positive inferred output dimension")]
    NonPositiveOutput { layer: String },
    #[error("layer `{layer}`: {msg}")]
    Invalid { layer: String, msg: String },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("bad magic bytes, expected CPPO")]
    BadMagic,
    #[error("unsupported CPPO version {0}")]
    BadVersion(u32),
    #[error("truncated parameter stream")]
    Truncated,
    #[error("layer `{layer}`: expected {expected} {what}, file has {actual}")]
    CountMismatch {
        layer: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("trailing bytes after last parameter block")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Input,
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ReLU,
    MaxPool {
        window: usize,
        stride: usize,
    },
    AvgPool {
        window: usize,
        stride: usize,
    },
    FullyConnected {
        out_features: usize,
    },
    Softmax,
    Concat,
}

impl LayerKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv { .. } => "conv",
            LayerKind::ReLU => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::AvgPool { .. } => "avgpool",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::Softmax => "softmax",
            LayerKind::Concat => "concat",
        }
    }

    /// Layers that carry trained parameters in CPPO/CPPR files.
    pub fn has_parameters(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv { .. } | LayerKind::FullyConnected { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub predecessors: Vec<String>,
}

/// Validated network: topologically ordered layers plus inferred shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    layers: Vec<LayerSpec>,
    /// Predecessor indices into `layers`, aligned with `layers`.
    pred_indices: Vec<Vec<usize>>,
    output_shapes: Vec<TensorShape>,
    input_index: usize,
    terminal_index: usize,
    /// Shape fed into the input layer (its declared C H W).
    input_shape: TensorShape,
}

impl NetworkModel {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn predecessors(&self, idx: usize) -> &[usize] {
        &self.pred_indices[idx]
    }

    pub fn output_shape(&self, idx: usize) -> TensorShape {
        self.output_shapes[idx]
    }

    pub fn input_shape(&self) -> TensorShape {
        self.input_shape
    }

    pub fn input_index(&self) -> usize {
        self.input_index
    }

    pub fn terminal_index(&self) -> usize {
        self.terminal_index
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Input shape of layer `idx` (shape of its single predecessor's output).
    pub fn layer_input_shape(&self, idx: usize) -> TensorShape {
        if self.layers[idx].kind == LayerKind::Input {
            self.input_shape
        } else {
            self.output_shapes[self.pred_indices[idx][0]]
        }
    }

    /// Parameter-carrying layers in topological order, with their expected
    /// (weight, bias) counts. FullyConnected weights span the flattened
    /// predecessor output.
    pub fn parameter_layers(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push((idx, out_channels * in_channels * kernel * kernel, out_channels));
                }
                LayerKind::FullyConnected { out_features } => {
                    let flat = self.layer_input_shape(idx).elements();
                    out.push((idx, out_features * flat, out_features));
                }
                _ => {}
            }
        }
        out
    }

    /// Total f32 count a matching CPPO payload must carry.
    pub fn total_parameter_count(&self) -> usize {
        self.parameter_layers()
            .iter()
            .map(|(_, w, b)| w + b)
            .sum()
    }

    /// Render back to the line-oriented description format.
    pub fn to_description(&self) -> String {
        let mut out = String::new();
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Input => {
                    out.push_str(&format!(
                        "input {} {} {}\n",
                        self.input_shape.channels, self.input_shape.height, self.input_shape.width
                    ));
                }
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    out.push_str(&format!(
                        "conv {} pred={} N={} M={} K={} S={} P={}\n",
                        layer.name,
                        layer.predecessors[0],
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        padding
                    ));
                }
                LayerKind::ReLU => {
                    out.push_str(&format!("relu {} pred={}\n", layer.name, layer.predecessors[0]));
                }
                LayerKind::MaxPool { window, stride } => {
                    out.push_str(&format!(
                        "maxpool {} pred={} K={} S={}\n",
                        layer.name, layer.predecessors[0], window, stride
                    ));
                }
                LayerKind::AvgPool { window, stride } => {
                    out.push_str(&format!(
                        "avgpool {} pred={} K={} S={}\n",
                        layer.name, layer.predecessors[0], window, stride
                    ));
                }
                LayerKind::FullyConnected { out_features } => {
                    out.push_str(&format!(
                        "fc {} pred={} M={}\n",
                        layer.name, layer.predecessors[0], out_features
                    ));
                }
                LayerKind::Softmax => {
                    out.push_str(&format!(
                        "softmax {} pred={}\n",
                        layer.name, layer.predecessors[0]
                    ));
                }
                LayerKind::Concat => {
                    out.push_str(&format!(
                        "concat {} pred={}\n",
                        layer.name,
                        layer.predecessors.join(",")
                    ));
                }
            }
        }
        out
    }
}

fn parse_kv(token: &str, key: &str, line: usize) -> Result<usize, ModelError> {
    let rest = token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| ModelError::Syntax {
            line,
            msg: format!("expected `{key}=<int>`, got `{token}`"),
        })?;
    rest.parse().map_err(|_| ModelError::Syntax {
        line,
        msg: format!("bad integer in `{token}`"),
    })
}

fn parse_pred(token: &str, line: usize) -> Result<Vec<String>, ModelError> {
    let rest = token.strip_prefix("pred=").ok_or_else(|| ModelError::Syntax {
        line,
        msg: format!("expected `pred=<name>`, got `{token}`"),
    })?;
    let preds: Vec<String> = rest.split(',').map(|s| s.trim().to_string()).collect();
    if preds.iter().any(|p| p.is_empty()) {
        return Err(ModelError::Syntax {
            line,
            msg: "empty predecessor name".into(),
        });
    }
    Ok(preds)
}

/// Parse the line-oriented network description into a validated,
/// shape-inferred model. Layer order in the result is topological.
pub fn parse_network_description(text: &str) -> Result<NetworkModel, ModelError> {
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut input_shape: Option<TensorShape> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let kind = tokens[0];
        match kind {
            "input" => {
                if tokens.len() != 4 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: "expected `input C H W`".into(),
                    });
                }
                let dims: Result<Vec<usize>, _> =
                    tokens[1..4].iter().map(|t| t.parse()).collect();
                let dims = dims.map_err(|_| ModelError::Syntax {
                    line,
                    msg: "bad integer in input dimensions".into(),
                })?;
                if input_shape.is_some() {
                    return Err(ModelError::InputCount);
                }
                input_shape = Some(TensorShape::new(dims[0], dims[1], dims[2])?);
                layers.push(LayerSpec {
                    name: "input".into(),
                    kind: LayerKind::Input,
                    predecessors: Vec::new(),
                });
            }
            "conv" => {
                if tokens.len() != 8 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: "expected `conv <name> pred=<name> N= M= K= S= P=`".into(),
                    });
                }
                let preds = parse_pred(tokens[2], line)?;
                let n = parse_kv(tokens[3], "N", line)?;
                let m = parse_kv(tokens[4], "M", line)?;
                let k = parse_kv(tokens[5], "K", line)?;
                let s = parse_kv(tokens[6], "S", line)?;
                let p = parse_kv(tokens[7], "P", line)?;
                if n < 1 || m < 1 || k < 1 || s < 1 {
                    return Err(ModelError::Invalid {
                        layer: tokens[1].into(),
                        msg: "conv requires N,M,K,S >= 1".into(),
                    });
                }
                layers.push(LayerSpec {
                    name: tokens[1].into(),
                    kind: LayerKind::Conv {
                        in_channels: n,
                        out_channels: m,
                        kernel: k,
                        stride: s,
                        padding: p,
                    },
                    predecessors: preds,
                });
            }
            "relu" | "softmax" => {
                if tokens.len() != 3 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: format!("expected `{kind} <name> pred=<name>`"),
                    });
                }
                layers.push(LayerSpec {
                    name: tokens[1].into(),
                    kind: if kind == "relu" {
                        LayerKind::ReLU
                    } else {
                        LayerKind::Softmax
                    },
                    predecessors: parse_pred(tokens[2], line)?,
                });
            }
            "maxpool" | "avgpool" => {
                if tokens.len() != 5 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: format!("expected `{kind} <name> pred=<name> K= S=`"),
                    });
                }
                let preds = parse_pred(tokens[2], line)?;
                let k = parse_kv(tokens[3], "K", line)?;
                let s = parse_kv(tokens[4], "S", line)?;
                if k < 1 || s < 1 {
                    return Err(ModelError::Invalid {
                        layer: tokens[1].into(),
                        msg: "pool requires K,S >= 1".into(),
                    });
                }
                layers.push(LayerSpec {
                    name: tokens[1].into(),
                    kind: if kind == "maxpool" {
                        LayerKind::MaxPool { window: k, stride: s }
                    } else {
                        LayerKind::AvgPool { window: k, stride: s }
                    },
                    predecessors: preds,
                });
            }
            "fc" => {
                if tokens.len() != 4 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: "expected `fc <name> pred=<name> M=<int>`".into(),
                    });
                }
                let preds = parse_pred(tokens[2], line)?;
                let m = parse_kv(tokens[3], "M", line)?;
                if m < 1 {
                    return Err(ModelError::Invalid {
                        layer: tokens[1].into(),
                        msg: "fc requires M >= 1".into(),
                    });
                }
                layers.push(LayerSpec {
                    name: tokens[1].into(),
                    kind: LayerKind::FullyConnected { out_features: m },
                    predecessors: preds,
                });
            }
            "concat" => {
                if tokens.len() != 3 {
                    return Err(ModelError::Syntax {
                        line,
                        msg: "expected `concat <name> pred=<a>,<b>[,...]`".into(),
                    });
                }
                let preds = parse_pred(tokens[2], line)?;
                if preds.len() < 2 {
                    return Err(ModelError::Invalid {
                        layer: tokens[1].into(),
                        msg: "concat requires >= 2 predecessors".into(),
                    });
                }
                layers.push(LayerSpec {
                    name: tokens[1].into(),
                    kind: LayerKind::Concat,
                    predecessors: preds,
                });
            }
            other => {
                return Err(ModelError::UnknownKind {
                    line,
                    kind: other.into(),
                });
            }
        }
    }

    let input_shape = input_shape.ok_or(ModelError::InputCount)?;
    build_model(layers, input_shape)
}

/// Toposort, wire predecessor indices, and infer per-layer output shapes.
pub fn build_model(
    layers: Vec<LayerSpec>,
    input_shape: TensorShape,
) -> Result<NetworkModel, ModelError> {
    let mut name_to_idx: HashMap<&str, usize> = HashMap::new();
    for (idx, layer) in layers.iter().enumerate() {
        if name_to_idx.insert(&layer.name, idx).is_some() {
            return Err(ModelError::DuplicateName(layer.name.clone()));
        }
    }
    if layers.iter().filter(|l| l.kind == LayerKind::Input).count() != 1 {
        return Err(ModelError::InputCount);
    }

    let mut preds: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
    for layer in &layers {
        let expected = match layer.kind {
            LayerKind::Input => 0,
            LayerKind::Concat => layer.predecessors.len().max(2),
            _ => 1,
        };
        if layer.kind != LayerKind::Input && layer.predecessors.len() != expected {
            return Err(ModelError::Invalid {
                layer: layer.name.clone(),
                msg: format!(
                    "expected {expected} predecessor(s), got {}",
                    layer.predecessors.len()
                ),
            });
        }
        let mut indices = Vec::new();
        for p in &layer.predecessors {
            let idx = *name_to_idx
                .get(p.as_str())
                .ok_or_else(|| ModelError::DanglingPredecessor {
                    layer: layer.name.clone(),
                    pred: p.clone(),
                })?;
            indices.push(idx);
        }
        preds.push(indices);
    }

    // Kahn toposort over the predecessor edges.
    let n = layers.len();
    let mut indegree: Vec<usize> = preds.iter().map(|p| p.len()).collect();
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, ps) in preds.iter().enumerate() {
        for &p in ps {
            successors[p].push(idx);
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut topo_order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let idx = queue[head];
        head += 1;
        topo_order.push(idx);
        for &s in &successors[idx] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push(s);
            }
        }
    }
    if topo_order.len() != n {
        return Err(ModelError::Cycle);
    }

    let terminals: Vec<usize> = (0..n).filter(|&i| successors[i].is_empty()).collect();
    if terminals.len() != 1 {
        return Err(ModelError::TerminalCount(terminals.len()));
    }

    // Reindex into topological order.
    let mut new_index = vec![0usize; n];
    for (new, &old) in topo_order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut ordered_layers = Vec::with_capacity(n);
    let mut ordered_preds = Vec::with_capacity(n);
    for &old in &topo_order {
        ordered_layers.push(layers[old].clone());
        ordered_preds.push(preds[old].iter().map(|&p| new_index[p]).collect::<Vec<_>>());
    }
    let terminal_index = new_index[terminals[0]];
    let input_index = ordered_layers
        .iter()
        .position(|l| l.kind == LayerKind::Input)
        .unwrap();

    // Shape inference in topological order.
    let mut shapes: Vec<TensorShape> = Vec::with_capacity(n);
    for (idx, layer) in ordered_layers.iter().enumerate() {
        let shape = infer_shape(layer, &ordered_preds[idx], &shapes, input_shape)?;
        shapes.push(shape);
    }

    Ok(NetworkModel {
        layers: ordered_layers,
        pred_indices: ordered_preds,
        output_shapes: shapes,
        input_index,
        terminal_index,
        input_shape,
    })
}

fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn infer_shape(
    layer: &LayerSpec,
    preds: &[usize],
    shapes: &[TensorShape],
    input_shape: TensorShape,
) -> Result<TensorShape, ModelError> {
    let invalid = |msg: String| ModelError::Invalid {
        layer: layer.name.clone(),
        msg,
    };
    match &layer.kind {
        LayerKind::Input => Ok(input_shape),
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let pin = shapes[preds[0]];
            if pin.channels != *in_channels {
                return Err(invalid(format!(
                    "channel mismatch: declared N={} but predecessor has {} channels",
                    in_channels, pin.channels
                )));
            }
            let h = conv_output_dim(pin.height, *kernel, *stride, *padding);
            let w = conv_output_dim(pin.width, *kernel, *stride, *padding);
            match (h, w) {
                (Some(h), Some(w)) if h >= 1 && w >= 1 => {
                    Ok(TensorShape::new(*out_channels, h, w)?)
                }
                _ => Err(ModelError::NonPositiveOutput {
                    layer: layer.name.clone(),
                }),
            }
        }
        LayerKind::ReLU | LayerKind::Softmax => Ok(shapes[preds[0]]),
        LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
            let pin = shapes[preds[0]];
            let h = conv_output_dim(pin.height, *window, *stride, 0);
            let w = conv_output_dim(pin.width, *window, *stride, 0);
            match (h, w) {
                (Some(h), Some(w)) if h >= 1 && w >= 1 => {
                    Ok(TensorShape::new(pin.channels, h, w)?)
                }
                _ => Err(ModelError::NonPositiveOutput {
                    layer: layer.name.clone(),
                }),
            }
        }
        LayerKind::FullyConnected { out_features } => Ok(TensorShape::new(*out_features, 1, 1)?),
        LayerKind::Concat => {
            let first = shapes[preds[0]];
            let mut channels = 0;
            for &p in preds {
                let s = shapes[p];
                if s.height != first.height || s.width != first.width {
                    return Err(invalid(format!(
                        "concat spatial mismatch: {} vs {}",
                        first, s
                    )));
                }
                channels += s.channels;
            }
            Ok(TensorShape::new(channels, first.height, first.width)?)
        }
    }
}

/// Weight/bias ordering carried by a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamOrdering {
    /// `[m][n][kh][kw]` filter-bank-major order, as read from CPPO.
    Original,
    /// Map-major over the input-channel dimension, channel-padded to `u`.
    Reordered { u: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

/// Per-layer weights and biases for all parameter-carrying layers,
/// keyed by layer name, kept in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    ordering: ParamOrdering,
    entries: Vec<(String, LayerParams)>,
}

impl ParameterSet {
    pub fn new(ordering: ParamOrdering, entries: Vec<(String, LayerParams)>) -> Self {
        Self { ordering, entries }
    }

    pub fn ordering(&self) -> ParamOrdering {
        self.ordering
    }

    pub fn entries(&self) -> &[(String, LayerParams)] {
        &self.entries
    }

    pub fn get(&self, layer: &str) -> Option<&LayerParams> {
        self.entries
            .iter()
            .find(|(name, _)| name == layer)
            .map(|(_, p)| p)
    }

    pub fn total_floats(&self) -> usize {
        self.entries
            .iter()
            .map(|(_, p)| p.weights.len() + p.biases.len())
            .sum()
    }
}

/// Parse a CPPO byte stream against a model, checking per-layer counts.
pub fn parse_model_parameters<R: Read>(
    mut reader: R,
    model: &NetworkModel,
) -> Result<ParameterSet, ParamError> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| ParamError::Truncated)?;
    if &magic != CPPO_MAGIC {
        return Err(ParamError::BadMagic);
    }
    let version = bytes::read_u32(&mut reader).map_err(|_| ParamError::Truncated)?;
    if version != CPPO_VERSION {
        return Err(ParamError::BadVersion(version));
    }

    let mut entries = Vec::new();
    for (idx, expected_w, expected_b) in model.parameter_layers() {
        let layer = &model.layers()[idx].name;
        let wcount = bytes::read_u64(&mut reader).map_err(|_| ParamError::Truncated)? as usize;
        if wcount != expected_w {
            return Err(ParamError::CountMismatch {
                layer: layer.clone(),
                what: "weights",
                expected: expected_w,
                actual: wcount,
            });
        }
        let weights = bytes::read_f32_vec(&mut reader, wcount).map_err(|_| ParamError::Truncated)?;
        let bcount = bytes::read_u64(&mut reader).map_err(|_| ParamError::Truncated)? as usize;
        if bcount != expected_b {
            return Err(ParamError::CountMismatch {
                layer: layer.clone(),
                what: "biases",
                expected: expected_b,
                actual: bcount,
            });
        }
        let biases = bytes::read_f32_vec(&mut reader, bcount).map_err(|_| ParamError::Truncated)?;
        entries.push((layer.clone(), LayerParams { weights, biases }));
    }
    let mut rest = [0u8; 1];
    match reader.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(ParamError::TrailingBytes),
        Err(e) => return Err(ParamError::Io(e)),
    }
    Ok(ParameterSet::new(ParamOrdering::Original, entries))
}

/// Serialize an Original-ordered parameter set as a CPPO byte stream.
pub fn write_model_parameters<W: Write>(
    writer: &mut W,
    params: &ParameterSet,
) -> std::io::Result<()> {
    writer.write_all(CPPO_MAGIC)?;
    bytes::write_u32(writer, CPPO_VERSION)?;
    for (_, p) in params.entries() {
        bytes::write_u64(writer, p.weights.len() as u64)?;
        bytes::write_f32_slice(writer, &p.weights)?;
        bytes::write_u64(writer, p.biases.len() as u64)?;
        bytes::write_f32_slice(writer, &p.biases)?;
    }
    Ok(())
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub layer: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.layer, self.rule)
    }
}

/// Re-check model and parameter invariants, collecting violations instead
/// of failing on the first. Operates on raw layer lists so inconsistent
/// inputs can be diagnosed in full.
pub fn validate(
    layers: &[LayerSpec],
    input_shape: TensorShape,
    params: Option<&ParameterSet>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut shapes: HashMap<&str, TensorShape> = HashMap::new();

    for layer in layers {
        let pred_shapes: Vec<Option<TensorShape>> = layer
            .predecessors
            .iter()
            .map(|p| shapes.get(p.as_str()).copied())
            .collect();
        if layer.kind != LayerKind::Input
            && layer.predecessors.iter().any(|p| !shapes.contains_key(p.as_str()))
        {
            violations.push(Violation {
                layer: layer.name.clone(),
                rule: "dangling or out-of-order predecessor".into(),
            });
        }
        let out = match &layer.kind {
            LayerKind::Input => Some(input_shape),
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => pred_shapes[0].and_then(|pin| {
                if pin.channels != *in_channels {
                    violations.push(Violation {
                        layer: layer.name.clone(),
                        rule: format!(
                            "channel mismatch: N={} but predecessor has {}",
                            in_channels, pin.channels
                        ),
                    });
                }
                let h = conv_output_dim(pin.height, *kernel, *stride, *padding)?;
                let w = conv_output_dim(pin.width, *kernel, *stride, *padding)?;
                TensorShape::new(*out_channels, h, w).ok()
            }),
            LayerKind::ReLU | LayerKind::Softmax => pred_shapes[0],
            LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
                pred_shapes[0].and_then(|pin| {
                    let h = conv_output_dim(pin.height, *window, *stride, 0)?;
                    let w = conv_output_dim(pin.width, *window, *stride, 0)?;
                    TensorShape::new(pin.channels, h, w).ok()
                })
            }
            LayerKind::FullyConnected { out_features } => {
                TensorShape::new(*out_features, 1, 1).ok()
            }
            LayerKind::Concat => {
                if let Some(first) = pred_shapes.first().copied().flatten() {
                    let mut channels = 0;
                    let mut ok = true;
                    for s in pred_shapes.iter().flatten() {
                        if s.height != first.height || s.width != first.width {
                            violations.push(Violation {
                                layer: layer.name.clone(),
                                rule: format!("concat spatial mismatch: {} vs {}", first, s),
                            });
                            ok = false;
                        }
                        channels += s.channels;
                    }
                    if ok {
                        TensorShape::new(channels, first.height, first.width).ok()
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
        };
        if let Some(shape) = out {
            shapes.insert(&layer.name, shape);
        }

        if let (Some(params), true) = (params, layer.kind.has_parameters()) {
            match params.get(&layer.name) {
                None => violations.push(Violation {
                    layer: layer.name.clone(),
                    rule: "missing parameters".into(),
                }),
                Some(p) => {
                    let expected = match &layer.kind {
                        LayerKind::Conv {
                            in_channels,
                            out_channels,
                            kernel,
                            ..
                        } => Some((
                            out_channels * in_channels * kernel * kernel,
                            *out_channels,
                        )),
                        LayerKind::FullyConnected { out_features } => pred_shapes
                            .first()
                            .copied()
                            .flatten()
                            .map(|s| (out_features * s.elements(), *out_features)),
                        _ => None,
                    };
                    if let Some((w, b)) = expected {
                        if params.ordering() == ParamOrdering::Original && p.weights.len() != w {
                            violations.push(Violation {
                                layer: layer.name.clone(),
                                rule: format!(
                                    "weight count mismatch: expected {}, got {}",
                                    w,
                                    p.weights.len()
                                ),
                            });
                        }
                        if p.biases.len() != b {
                            violations.push(Violation {
                                layer: layer.name.clone(),
                                rule: format!(
                                    "bias count mismatch: expected {}, got {}",
                                    b,
                                    p.biases.len()
                                ),
                            });
                        }
                    }
                }
            }
        }
    }
    violations
}
