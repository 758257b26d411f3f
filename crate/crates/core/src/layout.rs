//! Index algebra and data reordering between row-major and map-major
//! blocked layouts.
//!
//! Map-major order stores, for each stack of `u` consecutive channels and
//! each spatial position, the `u` channel values contiguously. A task that
//! writes its output element directly at the flat position given by
//! [`coords_map_major`] produces a map-major buffer with no separate
//! reshuffle pass.

use std::io::{Read, Write};

use thiserror::Error;

use crate::bytes;
use crate::model::{LayerKind, LayerParams, NetworkModel, ParamOrdering, ParameterSet};
use crate::tensor::{pad_channels, LayoutTag, Tensor};

pub const CPPR_MAGIC: &[u8; 4] = b"CPPR";
pub const CPPR_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("task index {x} out of range [0, {alpha})")]
    IndexOutOfRange { x: usize, alpha: usize },
    #[error("task count {alpha} inconsistent: expected {expected}")]
    AlphaMismatch { alpha: usize, expected: usize },
    #[error("padded map count {padded} not divisible by vector width {u}")]
    UnalignedMaps { padded: usize, u: usize },
    #[error("expected {expected} layout, got {actual}")]
    WrongLayout { expected: String, actual: String },
    #[error("parameter set is {actual:?}, expected {expected:?} ordering")]
    WrongOrdering {
        expected: ParamOrdering,
        actual: ParamOrdering,
    },
    #[error("bad magic bytes, expected CPPR")]
    BadMagic,
    #[error("unsupported CPPR version {0}")]
    BadVersion(u32),
    #[error("truncated reordered-parameter stream")]
    Truncated,
    #[error("layer `{layer}`: expected {expected} {what}, file has {actual}")]
    CountMismatch {
        layer: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of one output element: map index, row, column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputCoordinate {
    pub m: usize,
    pub h: usize,
    pub w: usize,
}

/// Flat task identifier within a layer's output grid of `alpha` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreadIndex {
    pub x: usize,
    pub alpha: usize,
}

impl ThreadIndex {
    pub fn new(x: usize, alpha: usize) -> Result<Self, LayoutError> {
        if x >= alpha {
            return Err(LayoutError::IndexOutOfRange { x, alpha });
        }
        Ok(Self { x, alpha })
    }
}

/// Channel-blocking parameters of the map-major layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutDescriptor {
    pub u: usize,
    pub padded_channels: usize,
}

impl LayoutDescriptor {
    pub fn for_channels(channels: usize, u: usize) -> Self {
        Self {
            u,
            padded_channels: pad_channels(channels, u),
        }
    }
}

/// Map a flat task id onto the output coordinate whose map-major slot it
/// writes:
///
/// ```text
/// w = (x / u) % Wout
/// h = (x / (u * Wout)) % Hout
/// m = (x % u) + (x / (u * Wout * Hout)) * u
/// ```
pub fn coords_map_major(
    x: ThreadIndex,
    u: usize,
    wout: usize,
    hout: usize,
) -> Result<OutputCoordinate, LayoutError> {
    if x.alpha % (u * wout * hout) != 0 {
        return Err(LayoutError::AlphaMismatch {
            alpha: x.alpha,
            expected: (x.alpha / (u * wout * hout) + 1) * u * wout * hout,
        });
    }
    let i = x.x;
    Ok(OutputCoordinate {
        w: (i / u) % wout,
        h: (i / (u * wout)) % hout,
        m: (i % u) + (i / (u * wout * hout)) * u,
    })
}

/// Baseline row-major mapping: consecutive task ids walk one map at a time.
pub fn coords_row_major(
    x: ThreadIndex,
    wout: usize,
    hout: usize,
) -> Result<OutputCoordinate, LayoutError> {
    let i = x.x;
    Ok(OutputCoordinate {
        m: i / (wout * hout),
        h: (i / wout) % hout,
        w: i % wout,
    })
}

/// Reorder a row-major tensor into map-major stacks of `u` channels,
/// zero-padding the channel dimension to a multiple of `u`.
pub fn reorder_to_map_major(t: &Tensor, u: usize) -> Result<Tensor, LayoutError> {
    if t.layout() != LayoutTag::RowMajor {
        return Err(LayoutError::WrongLayout {
            expected: "row".into(),
            actual: t.layout().to_string(),
        });
    }
    let shape = t.shape();
    let mut out = Tensor::zeros(shape, LayoutTag::MapMajor { u });
    for c in 0..shape.channels {
        for h in 0..shape.height {
            for w in 0..shape.width {
                let v = t.get(c, h, w);
                out.set(c, h, w, v);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`reorder_to_map_major`]: pad channels are dropped.
pub fn reorder_from_map_major(t: &Tensor) -> Result<Tensor, LayoutError> {
    let LayoutTag::MapMajor { .. } = t.layout() else {
        return Err(LayoutError::WrongLayout {
            expected: "map-major".into(),
            actual: t.layout().to_string(),
        });
    };
    let shape = t.shape();
    let mut out = Tensor::zeros(shape, LayoutTag::RowMajor);
    for c in 0..shape.channels {
        for h in 0..shape.height {
            for w in 0..shape.width {
                out.set(c, h, w, t.get(c, h, w));
            }
        }
    }
    Ok(out)
}

/// Reorder one filter bank's `N x K x K` weight block map-major over the
/// input-channel dimension, zero-padding channels to a multiple of `u`.
/// Input block is `[n][kh][kw]`; output is `[stack][kh][kw][lane]`.
pub fn reorder_weight_block(block: &[f32], n: usize, k: usize, u: usize) -> Vec<f32> {
    debug_assert_eq!(block.len(), n * k * k);
    let n_pad = pad_channels(n, u);
    let mut out = vec![0.0f32; n_pad * k * k];
    let mut pos = 0;
    for stack in 0..n_pad / u {
        for kh in 0..k {
            for kw in 0..k {
                for lane in 0..u {
                    let c = stack * u + lane;
                    out[pos] = if c < n { block[(c * k + kh) * k + kw] } else { 0.0 };
                    pos += 1;
                }
            }
        }
    }
    out
}

/// Inverse of [`reorder_weight_block`]; pad channels dropped.
pub fn restore_weight_block(block: &[f32], n: usize, k: usize, u: usize) -> Vec<f32> {
    let n_pad = pad_channels(n, u);
    debug_assert_eq!(block.len(), n_pad * k * k);
    let mut out = vec![0.0f32; n * k * k];
    let mut pos = 0;
    for stack in 0..n_pad / u {
        for kh in 0..k {
            for kw in 0..k {
                for lane in 0..u {
                    let c = stack * u + lane;
                    if c < n {
                        out[(c * k + kh) * k + kw] = block[pos];
                    }
                    pos += 1;
                }
            }
        }
    }
    out
}

/// Channel count and kernel size of each parameter-carrying layer, as the
/// weight reorder sees them (fc is a 1x1 kernel over the flattened input).
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

/// Statically reorder all weight blocks map-major over the input-channel
/// dimension. Bias order is unchanged. Happens once at plan time.
pub fn reorder_weights(
    model: &NetworkModel,
    params: &ParameterSet,
    u: usize,
) -> Result<ParameterSet, LayoutError> {
    if params.ordering() != ParamOrdering::Original {
        return Err(LayoutError::WrongOrdering {
            expected: ParamOrdering::Original,
            actual: params.ordering(),
        });
    }
    let mut entries = Vec::new();
    for (idx, _, _) in model.parameter_layers() {
        let name = &model.layers()[idx].name;
        let p = params.get(name).expect("parameter set matches model");
        let (m, n, k) = weight_geometry(model, idx);
        let bank = n * k * k;
        let mut weights = Vec::with_capacity(m * pad_channels(n, u) * k * k);
        for bank_idx in 0..m {
            let block = &p.weights[bank_idx * bank..(bank_idx + 1) * bank];
            weights.extend_from_slice(&reorder_weight_block(block, n, k, u));
        }
        entries.push((
            name.clone(),
            LayerParams {
                weights,
                biases: p.biases.clone(),
            },
        ));
    }
    Ok(ParameterSet::new(ParamOrdering::Reordered { u }, entries))
}

/// Serialize a Reordered parameter set as a CPPR byte stream.
pub fn write_reordered_parameters<W: Write>(
    writer: &mut W,
    params: &ParameterSet,
) -> Result<(), LayoutError> {
    let ParamOrdering::Reordered { u } = params.ordering() else {
        return Err(LayoutError::WrongOrdering {
            expected: ParamOrdering::Reordered { u: 0 },
            actual: params.ordering(),
        });
    };
    writer.write_all(CPPR_MAGIC)?;
    bytes::write_u32(writer, CPPR_VERSION)?;
    bytes::write_u32(writer, u as u32)?;
    for (_, p) in params.entries() {
        bytes::write_u64(writer, p.weights.len() as u64)?;
        bytes::write_f32_slice(writer, &p.weights)?;
        bytes::write_u64(writer, p.biases.len() as u64)?;
        bytes::write_f32_slice(writer, &p.biases)?;
    }
    Ok(())
}

/// Parse a CPPR byte stream against a model, checking padded counts.
pub fn parse_reordered_parameters<R: Read>(
    mut reader: R,
    model: &NetworkModel,
) -> Result<ParameterSet, LayoutError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| LayoutError::Truncated)?;
    if &magic != CPPR_MAGIC {
        return Err(LayoutError::BadMagic);
    }
    let version = bytes::read_u32(&mut reader).map_err(|_| LayoutError::Truncated)?;
    if version != CPPR_VERSION {
        return Err(LayoutError::BadVersion(version));
    }
    let u = bytes::read_u32(&mut reader).map_err(|_| LayoutError::Truncated)? as usize;
    if u == 0 {
        return Err(LayoutError::BadVersion(0));
    }

    let mut entries = Vec::new();
    for (idx, _, expected_b) in model.parameter_layers() {
        let name = model.layers()[idx].name.clone();
        let (m, n, k) = weight_geometry(model, idx);
        let expected_w = m * pad_channels(n, u) * k * k;
        let wcount = bytes::read_u64(&mut reader).map_err(|_| LayoutError::Truncated)? as usize;
        if wcount != expected_w {
            return Err(LayoutError::CountMismatch {
                layer: name,
                what: "weights",
                expected: expected_w,
                actual: wcount,
            });
        }
        let weights =
            bytes::read_f32_vec(&mut reader, wcount).map_err(|_| LayoutError::Truncated)?;
        let bcount = bytes::read_u64(&mut reader).map_err(|_| LayoutError::Truncated)? as usize;
        if bcount != expected_b {
            return Err(LayoutError::CountMismatch {
                layer: name,
                what: "biases",
                expected: expected_b,
                actual: bcount,
            });
        }
        let biases =
            bytes::read_f32_vec(&mut reader, bcount).map_err(|_| LayoutError::Truncated)?;
        entries.push((name, LayerParams { weights, biases }));
    }
    Ok(ParameterSet::new(ParamOrdering::Reordered { u }, entries))
}
