//! Labeled dataset files (`CPPD`): magic, version, record count, the
//! record shape, then `label + row-major f32 payload` per record.
//! Single-tensor input/output files reuse the same container with one
//! record and label 0.

use std::io::{Read, Write};

use thiserror::Error;

use crate::bytes;
use crate::tensor::{LayoutTag, Tensor, TensorShape};

pub const CPPD_MAGIC: &[u8; 4] = b"CPPD";
pub const CPPD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic bytes, expected CPPD")]
    BadMagic,
    #[error("unsupported CPPD version {0}")]
    BadVersion(u32),
    #[error("truncated dataset stream")]
    Truncated,
    #[error("dataset has no records")]
    Empty,
    #[error("record {record}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        record: usize,
        label: usize,
        classes: usize,
    },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input tensors with integer class labels, all sharing one shape.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    records: Vec<(Tensor, usize)>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(records: Vec<(Tensor, usize)>, class_count: usize) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        for (idx, (_, label)) in records.iter().enumerate() {
            if *label >= class_count {
                return Err(DatasetError::LabelOutOfRange {
                    record: idx,
                    label: *label,
                    classes: class_count,
                });
            }
        }
        Ok(Self {
            records,
            class_count,
        })
    }

    pub fn records(&self) -> &[(Tensor, usize)] {
        &self.records
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn shape(&self) -> TensorShape {
        self.records[0].0.shape()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn read_dataset<R: Read>(mut reader: R) -> Result<LabeledDataset, DatasetError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| DatasetError::Truncated)?;
    if &magic != CPPD_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)?;
    if version != CPPD_VERSION {
        return Err(DatasetError::BadVersion(version));
    }
    let count = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)? as usize;
    let c = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)? as usize;
    let h = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)? as usize;
    let w = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)? as usize;
    let shape = TensorShape::new(c, h, w)?;
    if count == 0 {
        return Err(DatasetError::Empty);
    }
    let mut records = Vec::with_capacity(count);
    let mut max_label = 0usize;
    for _ in 0..count {
        let label = bytes::read_u32(&mut reader).map_err(|_| DatasetError::Truncated)? as usize;
        let data =
            bytes::read_f32_vec(&mut reader, shape.elements()).map_err(|_| DatasetError::Truncated)?;
        max_label = max_label.max(label);
        records.push((Tensor::new(shape, LayoutTag::RowMajor, data)?, label));
    }
    LabeledDataset::new(records, max_label + 1)
}

pub fn write_dataset<W: Write>(writer: &mut W, dataset: &LabeledDataset) -> std::io::Result<()> {
    let shape = dataset.shape();
    writer.write_all(CPPD_MAGIC)?;
    bytes::write_u32(writer, CPPD_VERSION)?;
    bytes::write_u32(writer, dataset.len() as u32)?;
    bytes::write_u32(writer, shape.channels as u32)?;
    bytes::write_u32(writer, shape.height as u32)?;
    bytes::write_u32(writer, shape.width as u32)?;
    for (tensor, label) in dataset.records() {
        bytes::write_u32(writer, *label as u32)?;
        bytes::write_f32_slice(writer, tensor.data())?;
    }
    Ok(())
}

/// Write one row-major tensor as a single-record CPPD file with label 0.
pub fn write_tensor<W: Write>(writer: &mut W, tensor: &Tensor) -> std::io::Result<()> {
    let ds = LabeledDataset {
        records: vec![(tensor.clone(), 0)],
        class_count: 1,
    };
    write_dataset(writer, &ds)
}

/// Read a single-record CPPD file as a tensor.
pub fn read_tensor<R: Read>(reader: R) -> Result<Tensor, DatasetError> {
    let ds = read_dataset(reader)?;
    Ok(ds.records[0].0.clone())
}
