//! Parallel vectorized convolution over map-major data.
//!
//! Work is allocated at output level: task `x` computes exactly one output
//! element and writes it directly at flat position `x`, which the
//! thread-id equations place at the element's map-major slot. The output
//! buffer therefore comes out map-major with no separate reshuffle pass.
//!
//! Tasks are batched into contiguous chunks, one chunk per worker, so
//! results are independent of the worker count: every element is owned by
//! exactly one task with a fixed accumulation order.

use std::convert::TryInto;

use crate::engine::mode::{flush_denormal, normalize_negative_zero, ArithmeticMode};
use crate::engine::reference::ConvGeometry;
use crate::engine::EngineError;
use crate::model::LayerParams;
use crate::tensor::{pad_channels, LayoutTag, Tensor};

pub const MAX_VECTOR_WIDTH: usize = 16;

struct Kernel<'a> {
    geom: &'a ConvGeometry,
    input: &'a [f32],
    weights: &'a [f32],
    biases: &'a [f32],
    out_channels: usize,
    stacks: usize,
}

impl Kernel<'_> {
    /// Scalar accumulation in vector-iteration order (stack, kh, kw, lane)
    /// with a single running sum. With `U = 1` this coincides with the
    /// canonical reference order `n -> kh -> kw`.
    fn scalar_element<const U: usize, const FLUSH: bool>(&self, x: usize) -> f32 {
        let fl = |v: f32| if FLUSH { flush_denormal(v) } else { v };
        let g = self.geom;
        let (m, h, w) = split_task::<U>(x, g.out_width, g.out_height);
        if m >= self.out_channels {
            return 0.0;
        }
        let bank = self.stacks * g.kernel * g.kernel * U;
        let weights = &self.weights[m * bank..(m + 1) * bank];
        let mut acc = fl(self.biases[m]);
        for stack in 0..self.stacks {
            for kh in 0..g.kernel {
                let iy = (h * g.stride + kh) as isize - g.padding as isize;
                if iy < 0 || iy >= g.in_height as isize {
                    continue;
                }
                for kw in 0..g.kernel {
                    let ix = (w * g.stride + kw) as isize - g.padding as isize;
                    if ix < 0 || ix >= g.in_width as isize {
                        continue;
                    }
                    let ibase = ((stack * g.in_height + iy as usize) * g.in_width
                        + ix as usize)
                        * U;
                    let wbase = ((stack * g.kernel + kh) * g.kernel + kw) * U;
                    for lane in 0..U {
                        acc = fl(acc + fl(self.input[ibase + lane]) * fl(weights[wbase + lane]));
                    }
                }
            }
        }
        acc
    }

    /// Reassociating accumulation: `U` independent lane sums, one vector
    /// multiply-accumulate per tap (u input values + u weight values),
    /// reduced pairwise in a fixed tree at loop exit. Denormals flushed at
    /// every load and partial-sum store; -0.0 normalized on final store.
    fn lane_element<const U: usize>(&self, x: usize) -> f32 {
        let g = self.geom;
        let (m, h, w) = split_task::<U>(x, g.out_width, g.out_height);
        if m >= self.out_channels {
            return 0.0;
        }
        let bank = self.stacks * g.kernel * g.kernel * U;
        let weights = &self.weights[m * bank..(m + 1) * bank];
        // Bias seeds lane 0 so the U = 1 case degenerates to the canonical
        // scalar accumulation.
        let mut lanes = [0.0f32; U];
        lanes[0] = flush_denormal(self.biases[m]);
        for stack in 0..self.stacks {
            for kh in 0..g.kernel {
                let iy = (h * g.stride + kh) as isize - g.padding as isize;
                if iy < 0 || iy >= g.in_height as isize {
                    continue;
                }
                for kw in 0..g.kernel {
                    let ix = (w * g.stride + kw) as isize - g.padding as isize;
                    if ix < 0 || ix >= g.in_width as isize {
                        continue;
                    }
                    let ibase = ((stack * g.in_height + iy as usize) * g.in_width
                        + ix as usize)
                        * U;
                    let wbase = ((stack * g.kernel + kh) * g.kernel + kw) * U;
                    let iv: &[f32; U] = self.input[ibase..ibase + U].try_into().unwrap();
                    let wv: &[f32; U] = weights[wbase..wbase + U].try_into().unwrap();
                    for lane in 0..U {
                        lanes[lane] = flush_denormal(
                            lanes[lane] + flush_denormal(iv[lane]) * flush_denormal(wv[lane]),
                        );
                    }
                }
            }
        }
        let mut width = U;
        while width > 1 {
            width /= 2;
            for i in 0..width {
                lanes[i] = flush_denormal(lanes[i] + lanes[i + width]);
            }
        }
        normalize_negative_zero(lanes[0])
    }
}

/// Inline form of the thread-id equations for a fixed stack width.
#[inline(always)]
fn split_task<const U: usize>(x: usize, wout: usize, hout: usize) -> (usize, usize, usize) {
    let w = (x / U) % wout;
    let h = (x / (U * wout)) % hout;
    let m = (x % U) + (x / (U * wout * hout)) * U;
    (m, h, w)
}

fn run_width<const U: usize>(
    kernel: &Kernel<'_>,
    mode: ArithmeticMode,
    workers: usize,
    out: &mut [f32],
) {
    let workers = workers.max(1);
    let chunk = out.len().div_ceil(workers);
    let fill = |start: usize, slice: &mut [f32]| {
        for (j, slot) in slice.iter_mut().enumerate() {
            let x = start + j;
            *slot = match mode {
                ArithmeticMode::Precise => kernel.scalar_element::<U, false>(x),
                ArithmeticMode::Relaxed => kernel.scalar_element::<U, true>(x),
                ArithmeticMode::Imprecise => kernel.lane_element::<U>(x),
            };
        }
    };
    if workers == 1 {
        fill(0, out);
        return;
    }
    std::thread::scope(|scope| {
        for (i, slice) in out.chunks_mut(chunk).enumerate() {
            let start = i * chunk;
            scope.spawn(move || fill(start, slice));
        }
    });
}

/// Execute one conv layer on the vectorized path. Input must be map-major
/// with stack width `u`; weights must be the matching reordered stream.
/// Output is map-major with `u`-padded output maps.
pub fn run_layer_vectorized(
    geom: &ConvGeometry,
    input: &Tensor,
    params: &LayerParams,
    mode: ArithmeticMode,
    u: usize,
    workers: usize,
) -> Result<Tensor, EngineError> {
    if input.layout() != (LayoutTag::MapMajor { u }) {
        return Err(EngineError::LayoutMismatch {
            expected: LayoutTag::MapMajor { u }.to_string(),
            actual: input.layout().to_string(),
        });
    }
    if !u.is_power_of_two() || u > MAX_VECTOR_WIDTH {
        return Err(EngineError::BadVectorWidth(u));
    }
    let n_pad = pad_channels(geom.in_channels, u);
    let expected_w = geom.out_channels * n_pad * geom.kernel * geom.kernel;
    if params.weights.len() != expected_w {
        return Err(EngineError::ShapeMismatch {
            layer: String::new(),
            msg: format!(
                "reordered weight count {} does not match expected {} (u={})",
                params.weights.len(),
                expected_w,
                u
            ),
        });
    }
    if params.biases.len() != geom.out_channels {
        return Err(EngineError::ShapeMismatch {
            layer: String::new(),
            msg: format!(
                "bias count {} does not match M={}",
                params.biases.len(),
                geom.out_channels
            ),
        });
    }

    let mut out = Tensor::zeros(geom.output_shape(), LayoutTag::MapMajor { u });
    let kernel = Kernel {
        geom,
        input: input.data(),
        weights: &params.weights,
        biases: &params.biases,
        out_channels: geom.out_channels,
        stacks: n_pad / u,
    };
    match u {
        1 => run_width::<1>(&kernel, mode, workers, out.data_mut()),
        2 => run_width::<2>(&kernel, mode, workers, out.data_mut()),
        4 => run_width::<4>(&kernel, mode, workers, out.data_mut()),
        8 => run_width::<8>(&kernel, mode, workers, out.data_mut()),
        16 => run_width::<16>(&kernel, mode, workers, out.data_mut()),
        other => return Err(EngineError::BadVectorWidth(other)),
    }
    Ok(out)
}
