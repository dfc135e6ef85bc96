//! Binary container for trained models.
//!
//! Layout (little-endian): 8-byte magic `NPTSMLP\0`, `u32` format version,
//! then the header fields and the four weight tensors, each prefixed by its
//! `u64` length. Weights are stored as raw IEEE-754 bits, so a write/read
//! round trip is bit-exact.

use std::io::{Read, Write};

use super::data::{FeatureLayout, InputScaling, LossScaling};
use super::mlp::{MlpParameters, Normalization, Tensors};
use super::train::DeepNptsModel;
use crate::error::{Error, Result};
use crate::timeseries::{FreqUnit, Frequency};

const MAGIC: &[u8; 8] = b"NPTSMLP\0";
pub const FORMAT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize<R: Read>(r: &mut R) -> Result<usize> {
    usize::try_from(get_u64(r)?).map_err(|_| bad("dimension overflows usize"))
}

fn unit_code(u: FreqUnit) -> u8 {
    match u {
        FreqUnit::Minute => 0,
        FreqUnit::Hour => 1,
        FreqUnit::Day => 2,
        FreqUnit::Week => 3,
        FreqUnit::Month => 4,
    }
}

fn unit_from(code: u8) -> Result<FreqUnit> {
    Ok(match code {
        0 => FreqUnit::Minute,
        1 => FreqUnit::Hour,
        2 => FreqUnit::Day,
        3 => FreqUnit::Week,
        4 => FreqUnit::Month,
        _ => return Err(bad(format!("unknown frequency unit {code}"))),
    })
}

pub fn write_model<W: Write>(model: &DeepNptsModel, mut w: W) -> Result<()> {
    let p = &model.params;
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    for d in [
        p.input_dim,
        p.hidden,
        p.output,
        model.context_length,
        model.layout.num_dynamic,
    ] {
        put_u64(&mut w, d as u64)?;
    }
    w.write_all(&[
        match p.normalization {
            Normalization::Softmax => 0,
            Normalization::SumNormalize => 1,
        },
        match model.input_scaling {
            InputScaling::None => 0,
            InputScaling::Standardization => 1,
        },
        match model.loss_scaling {
            LossScaling::None => 0,
            LossScaling::MinMax => 1,
        },
        u8::from(model.layout.static_feature),
        unit_code(model.layout.freq.unit()),
    ])?;
    put_u32(&mut w, model.layout.freq.multiple())?;
    for tensor in p.tensors.slices() {
        put_u64(&mut w, tensor.len() as u64)?;
        for v in tensor {
            put_u64(&mut w, v.to_bits())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<DeepNptsModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let input_dim = get_usize(&mut r)?;
    let hidden = get_usize(&mut r)?;
    let output = get_usize(&mut r)?;
    let context_length = get_usize(&mut r)?;
    let num_dynamic = get_usize(&mut r)?;
    let normalization = match get_u8(&mut r)? {
        0 => Normalization::Softmax,
        1 => Normalization::SumNormalize,
        c => return Err(bad(format!("unknown normalization {c}"))),
    };
    let input_scaling = match get_u8(&mut r)? {
        0 => InputScaling::None,
        1 => InputScaling::Standardization,
        c => return Err(bad(format!("unknown input scaling {c}"))),
    };
    let loss_scaling = match get_u8(&mut r)? {
        0 => LossScaling::None,
        1 => LossScaling::MinMax,
        c => return Err(bad(format!("unknown loss scaling {c}"))),
    };
    let static_feature = match get_u8(&mut r)? {
        0 => false,
        1 => true,
        c => return Err(bad(format!("invalid static flag {c}"))),
    };
    let unit = unit_from(get_u8(&mut r)?)?;
    let freq = Frequency::new(unit, get_u32(&mut r)?).map_err(|e| bad(e.to_string()))?;

    let layout = FeatureLayout {
        freq,
        num_dynamic,
        static_feature,
    };
    if output != context_length || input_dim != layout.input_dim(context_length) {
        return Err(bad(
            "dimensions inconsistent with context length and covariates",
        ));
    }
    let mut tensors = Tensors::zeros(input_dim, hidden, output);
    for tensor in tensors.slices_mut() {
        let len = get_usize(&mut r)?;
        if len != tensor.len() {
            return Err(bad(format!(
                "tensor of {len} values, expected {}",
                tensor.len()
            )));
        }
        for v in tensor.iter_mut() {
            *v = f64::from_bits(get_u64(&mut r)?);
        }
    }
    if !tensors.is_finite() {
        return Err(bad("non-finite weights"));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after weights"));
    }
    Ok(DeepNptsModel {
        params: MlpParameters {
            input_dim,
            hidden,
            output,
            normalization,
            tensors,
        },
        layout,
        context_length,
        input_scaling,
        loss_scaling,
    })
}
