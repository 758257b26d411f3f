//! Dense f32 tensors with an explicit layout tag.
//!
//! Two layouts exist: plain row-major (`[c][h][w]`) and the blocked
//! map-major layout, which stores stacks of `u` consecutive channels
//! contiguously at each spatial position. Map-major data pads the channel
//! dimension up to a multiple of `u` with zeros.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("tensor dimensions must all be >= 1, got {channels}x{height}x{width}")]
    ZeroDimension {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("element count {channels}x{height}x{width} overflows usize")]
    Overflow {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("data length {actual} does not match layout, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("vector width must be >= 1")]
    ZeroVectorWidth,
}

/// Logical shape of a 3D feature-map tensor: `channels x height x width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self, TensorError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(TensorError::ZeroDimension {
                channels,
                height,
                width,
            });
        }
        channels
            .checked_mul(height)
            .and_then(|ch| ch.checked_mul(width))
            .ok_or(TensorError::Overflow {
                channels,
                height,
                width,
            })?;
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    /// Logical element count, ignoring any layout padding.
    pub fn elements(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Storage order of a tensor's flat data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutTag {
    /// `[c][h][w]`, no padding.
    RowMajor,
    /// Channel stacks of width `u`, padded to a multiple of `u` channels.
    MapMajor { u: usize },
}

impl LayoutTag {
    pub fn map_major(u: usize) -> Result<Self, TensorError> {
        if u == 0 {
            return Err(TensorError::ZeroVectorWidth);
        }
        Ok(LayoutTag::MapMajor { u })
    }
}

impl std::fmt::Display for LayoutTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayoutTag::RowMajor => write!(f, "row"),
            LayoutTag::MapMajor { u } => write!(f, "map{u}"),
        }
    }
}

/// Smallest multiple of `u` that is >= `channels`.
pub fn pad_channels(channels: usize, u: usize) -> usize {
    channels.div_ceil(u) * u
}

/// Dense f32 tensor with explicit layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    layout: LayoutTag,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, layout: LayoutTag, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected = Self::storage_len(shape, layout);
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            layout,
            data,
        })
    }

    pub fn row_major(shape: TensorShape, data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(shape, LayoutTag::RowMajor, data)
    }

    pub fn zeros(shape: TensorShape, layout: LayoutTag) -> Self {
        Self {
            shape,
            layout,
            data: vec![0.0; Self::storage_len(shape, layout)],
        }
    }

    /// Flat storage length implied by shape and layout (includes channel padding).
    pub fn storage_len(shape: TensorShape, layout: LayoutTag) -> usize {
        match layout {
            LayoutTag::RowMajor => shape.elements(),
            LayoutTag::MapMajor { u } => {
                pad_channels(shape.channels, u) * shape.height * shape.width
            }
        }
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn layout(&self) -> LayoutTag {
        self.layout
    }

    /// Physical channel count (padded under map-major).
    pub fn padded_channels(&self) -> usize {
        match self.layout {
            LayoutTag::RowMajor => self.shape.channels,
            LayoutTag::MapMajor { u } => pad_channels(self.shape.channels, u),
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Flat offset of logical element `(c, h, w)` under the current layout.
    pub fn offset_of(&self, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(c < self.shape.channels && h < self.shape.height && w < self.shape.width);
        match self.layout {
            LayoutTag::RowMajor => (c * self.shape.height + h) * self.shape.width + w,
            LayoutTag::MapMajor { u } => {
                let stack = c / u;
                let lane = c % u;
                ((stack * self.shape.height + h) * self.shape.width + w) * u + lane
            }
        }
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset_of(c, h, w)]
    }

    pub fn set(&mut self, c: usize, h: usize, w: usize, value: f32) {
        let idx = self.offset_of(c, h, w);
        self.data[idx] = value;
    }
}
