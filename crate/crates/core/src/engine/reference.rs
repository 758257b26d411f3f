//! Single-threaded scalar reference path.
//!
//! Direct convolution with the canonical accumulation order
//! `n -> kh -> kw`, strict IEEE-754 single precision, row-major tensors.
//! This path is both the correctness oracle for the vectorized engine and
//! the baseline for speedup measurements.

use crate::engine::EngineError;
use crate::model::{LayerKind, LayerParams, LayerSpec};
use crate::tensor::{LayoutTag, Tensor, TensorShape};

/// Conv-layer geometry resolved against a concrete input shape.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn resolve(
        layer: &LayerSpec,
        input_shape: TensorShape,
    ) -> Result<ConvGeometry, EngineError> {
        let LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } = layer.kind
        else {
            return Err(EngineError::NotAConvLayer {
                layer: layer.name.clone(),
            });
        };
        if input_shape.channels != in_channels {
            return Err(EngineError::ShapeMismatch {
                layer: layer.name.clone(),
                msg: format!(
                    "conv declared N={} but input has {} channels",
                    in_channels, input_shape.channels
                ),
            });
        }
        let out_dim = |i: usize| {
            (i + 2 * padding)
                .checked_sub(kernel)
                .map(|d| d / stride + 1)
        };
        let (Some(out_height), Some(out_width)) =
            (out_dim(input_shape.height), out_dim(input_shape.width))
        else {
            return Err(EngineError::ShapeMismatch {
                layer: layer.name.clone(),
                msg: "kernel larger than padded input".into(),
            });
        };
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_height: input_shape.height,
            in_width: input_shape.width,
            out_height,
            out_width,
        })
    }

    pub fn output_shape(&self) -> TensorShape {
        TensorShape::new(self.out_channels, self.out_height, self.out_width)
            .expect("conv output dims >= 1")
    }

    /// Geometry of the 1x1 convolution a fully-connected layer lowers to.
    pub fn for_fully_connected(in_features: usize, out_features: usize) -> ConvGeometry {
        ConvGeometry {
            in_channels: in_features,
            out_channels: out_features,
            kernel: 1,
            stride: 1,
            padding: 0,
            in_height: 1,
            in_width: 1,
            out_height: 1,
            out_width: 1,
        }
    }
}

/// Direct convolution, scalar, canonical order, zero outside bounds.
/// Weights are `[m][n][kh][kw]`, one bias per output map.
pub fn conv_reference(geom: &ConvGeometry, input: &Tensor, params: &LayerParams) -> Tensor {
    let g = geom;
    debug_assert_eq!(input.layout(), LayoutTag::RowMajor);
    debug_assert_eq!(
        params.weights.len(),
        g.out_channels * g.in_channels * g.kernel * g.kernel
    );
    let mut out = Tensor::zeros(g.output_shape(), LayoutTag::RowMajor);
    let in_data = input.data();
    let k = g.kernel;
    for m in 0..g.out_channels {
        let bank = &params.weights[m * g.in_channels * k * k..(m + 1) * g.in_channels * k * k];
        for h in 0..g.out_height {
            for w in 0..g.out_width {
                let mut acc = params.biases[m];
                for n in 0..g.in_channels {
                    for kh in 0..k {
                        let iy = (h * g.stride + kh) as isize - g.padding as isize;
                        if iy < 0 || iy >= g.in_height as isize {
                            continue;
                        }
                        let row_base = (n * g.in_height + iy as usize) * g.in_width;
                        for kw in 0..k {
                            let ix = (w * g.stride + kw) as isize - g.padding as isize;
                            if ix < 0 || ix >= g.in_width as isize {
                                continue;
                            }
                            acc += in_data[row_base + ix as usize] * bank[(n * k + kh) * k + kw];
                        }
                    }
                }
                out.set(m, h, w, acc);
            }
        }
    }
    out
}

/// ReLU, layout-agnostic: pad slots hold zero and stay zero.
pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn pooled_shape(input: TensorShape, window: usize, stride: usize) -> Option<TensorShape> {
    let h = input.height.checked_sub(window)? / stride + 1;
    let w = input.width.checked_sub(window)? / stride + 1;
    TensorShape::new(input.channels, h, w).ok()
}

/// Max pooling over KxK windows; works in either layout via logical indexing.
pub fn max_pool(input: &Tensor, window: usize, stride: usize) -> Result<Tensor, EngineError> {
    let shape = pooled_shape(input.shape(), window, stride).ok_or_else(|| {
        EngineError::ShapeMismatch {
            layer: String::new(),
            msg: "pool window larger than input".into(),
        }
    })?;
    let mut out = Tensor::zeros(shape, input.layout());
    for c in 0..shape.channels {
        for h in 0..shape.height {
            for w in 0..shape.width {
                let mut best = f32::NEG_INFINITY;
                for kh in 0..window {
                    for kw in 0..window {
                        best = best.max(input.get(c, h * stride + kh, w * stride + kw));
                    }
                }
                out.set(c, h, w, best);
            }
        }
    }
    Ok(out)
}

/// Average pooling over KxK windows.
pub fn avg_pool(input: &Tensor, window: usize, stride: usize) -> Result<Tensor, EngineError> {
    let shape = pooled_shape(input.shape(), window, stride).ok_or_else(|| {
        EngineError::ShapeMismatch {
            layer: String::new(),
            msg: "pool window larger than input".into(),
        }
    })?;
    let norm = 1.0 / (window * window) as f32;
    let mut out = Tensor::zeros(shape, input.layout());
    for c in 0..shape.channels {
        for h in 0..shape.height {
            for w in 0..shape.width {
                let mut sum = 0.0f32;
                for kh in 0..window {
                    for kw in 0..window {
                        sum += input.get(c, h * stride + kh, w * stride + kw);
                    }
                }
                out.set(c, h, w, sum * norm);
            }
        }
    }
    Ok(out)
}

/// Fully connected as a 1x1 convolution over the flattened input.
pub fn fully_connected_reference(input: &Tensor, params: &LayerParams) -> Tensor {
    debug_assert_eq!(input.layout(), LayoutTag::RowMajor);
    let flat = input.shape().elements();
    let geom = ConvGeometry::for_fully_connected(flat, params.biases.len());
    let flat_input = Tensor::row_major(
        TensorShape::new(flat, 1, 1).expect("non-empty input"),
        input.data().to_vec(),
    )
    .expect("length matches");
    conv_reference(&geom, &flat_input, params)
}

/// Numerically stable softmax over all elements.
pub fn softmax(input: &Tensor) -> Tensor {
    debug_assert_eq!(input.layout(), LayoutTag::RowMajor);
    let max = input.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = input.data().iter().map(|v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    Tensor::new(
        input.shape(),
        LayoutTag::RowMajor,
        exps.into_iter().map(|e| e / sum).collect(),
    )
    .expect("same length")
}

/// Concatenate along the channel dimension. Inputs must share layout and
/// spatial dims; output uses the same layout (map-major output is
/// canonically padded, so interior pad stacks are repacked away).
pub fn concat(inputs: &[&Tensor]) -> Result<Tensor, EngineError> {
    let first = inputs[0];
    let mut channels = 0;
    for t in inputs {
        if t.shape().height != first.shape().height || t.shape().width != first.shape().width {
            return Err(EngineError::ShapeMismatch {
                layer: String::new(),
                msg: format!("concat spatial mismatch: {} vs {}", first.shape(), t.shape()),
            });
        }
        if t.layout() != first.layout() {
            return Err(EngineError::ShapeMismatch {
                layer: String::new(),
                msg: "concat inputs disagree on layout".into(),
            });
        }
        channels += t.shape().channels;
    }
    let shape = TensorShape::new(channels, first.shape().height, first.shape().width)
        .expect("non-empty concat");
    let mut out = Tensor::zeros(shape, first.layout());
    let mut offset = 0;
    for t in inputs {
        let s = t.shape();
        for c in 0..s.channels {
            for h in 0..s.height {
                for w in 0..s.width {
                    out.set(offset + c, h, w, t.get(c, h, w));
                }
            }
        }
        offset += s.channels;
    }
    Ok(out)
}

/// Run one layer on the scalar reference path (row-major, Precise).
pub fn run_layer_reference(
    layer: &LayerSpec,
    inputs: &[&Tensor],
    params: Option<&LayerParams>,
) -> Result<Tensor, EngineError> {
    let named = |msg: String| EngineError::ShapeMismatch {
        layer: layer.name.clone(),
        msg,
    };
    match &layer.kind {
        LayerKind::Input => Ok(inputs[0].clone()),
        LayerKind::Conv { .. } => {
            let geom = ConvGeometry::resolve(layer, inputs[0].shape())?;
            let params = params.ok_or_else(|| named("missing parameters".into()))?;
            Ok(conv_reference(&geom, inputs[0], params))
        }
        LayerKind::ReLU => Ok(relu(inputs[0])),
        LayerKind::MaxPool { window, stride } => max_pool(inputs[0], *window, *stride),
        LayerKind::AvgPool { window, stride } => avg_pool(inputs[0], *window, *stride),
        LayerKind::FullyConnected { .. } => {
            let params = params.ok_or_else(|| named("missing parameters".into()))?;
            Ok(fully_connected_reference(inputs[0], params))
        }
        LayerKind::Softmax => Ok(softmax(inputs[0])),
        LayerKind::Concat => concat(inputs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_network_description;

    fn tensor(c: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::row_major(TensorShape::new(c, h, w).unwrap(), data).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let model =
            parse_network_description("input 1 3 3\nconv c1 pred=input N=1 M=1 K=1 S=1 P=0\n")
                .unwrap();
        let layer = &model.layers()[model.layer_index("c1").unwrap()];
        let input = tensor(1, 3, 3, (0..9).map(|v| v as f32).collect());
        let params = LayerParams {
            weights: vec![1.0],
            biases: vec![0.0],
        };
        let out = run_layer_reference(layer, &[&input], Some(&params)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn two_by_two_dot_product() {
        let model =
            parse_network_description("input 1 2 2\nconv c1 pred=input N=1 M=1 K=2 S=1 P=0\n")
                .unwrap();
        let layer = &model.layers()[model.layer_index("c1").unwrap()];
        let input = tensor(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let params = LayerParams {
            weights: vec![1.0, 0.0, 0.0, 1.0],
            biases: vec![0.0],
        };
        let out = run_layer_reference(layer, &[&input], Some(&params)).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let t = tensor(1, 1, 3, vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn max_pool_2x2() {
        let t = tensor(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = max_pool(&t, 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn avg_pool_2x2() {
        let t = tensor(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = avg_pool(&t, 2, 2).unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let t = tensor(2, 1, 1, vec![0.0, 0.0]);
        assert_eq!(softmax(&t).data(), &[0.5, 0.5]);
    }

    #[test]
    fn concat_stacks_channels() {
        let a = tensor(1, 1, 2, vec![1.0, 2.0]);
        let b = tensor(2, 1, 2, vec![3.0, 4.0, 5.0, 6.0]);
        let out = concat(&[&a, &b]).unwrap();
        assert_eq!(out.shape(), TensorShape::new(3, 1, 2).unwrap());
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn fully_connected_is_a_dot_product_per_class() {
        let input = tensor(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let params = LayerParams {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            biases: vec![0.5, -0.5],
        };
        let out = fully_connected_reference(&input, &params);
        assert_eq!(out.data(), &[1.5, 4.5]);
    }

    #[test]
    fn padded_conv_reads_zero_outside_bounds() {
        // 1x1 input, K=3, P=1: only the center tap sees data.
        let model =
            parse_network_description("input 1 1 1\nconv c1 pred=input N=1 M=1 K=3 S=1 P=1\n")
                .unwrap();
        let layer = &model.layers()[model.layer_index("c1").unwrap()];
        let input = tensor(1, 1, 1, vec![3.0]);
        let params = LayerParams {
            weights: vec![1.0; 9],
            biases: vec![1.0],
        };
        let out = run_layer_reference(layer, &[&input], Some(&params)).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }
}
