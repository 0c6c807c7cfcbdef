//! Flat little-endian binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"RNA1"
//! u32 fusion            0 = late, 1 = mid
//! u32 batchnorm         0 or 1
//! u32 num_classes
//! u32 feature_dim
//! visual encoder:  u32 layer_count L, then L + 1 u32 widths (input .. output)
//! audio encoder:   same
//! f64 payload, in declaration order:
//!   visual encoder layers   (weight out×in row-major, then bias), first layer first
//!   audio encoder layers
//!   visual classifier, audio classifier
//!   mid classifier          (mid fusion only)
//!   visual batch norm       (gamma, beta, running_mean, running_var, momentum, epsilon)
//!   audio batch norm        (batch norm only)
//! ```
//!
//! All integers are `u32` and all floats `f64`, little-endian. Trailing
//! bytes are an error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BatchNormState, Encoder, FusionMode, TwoStreamModel};
use crate::numerics::{LinearLayerParams, Matrix};

pub const MAGIC: &[u8; 4] = b"RNA1";

pub fn encode_checkpoint(model: &TwoStreamModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put_u32(&mut out, (model.fusion == FusionMode::Mid) as usize);
    put_u32(&mut out, model.has_batchnorm() as usize);
    put_u32(&mut out, model.num_classes());
    put_u32(&mut out, model.feature_dim());
    for enc in [&model.encoder_visual, &model.encoder_audio] {
        put_u32(&mut out, enc.layers.len());
        put_u32(&mut out, enc.input_dim());
        for l in &enc.layers {
            put_u32(&mut out, l.out_dim());
        }
    }

    let put_f64s = |out: &mut Vec<u8>, vals: &[f64]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    let put_linear = |out: &mut Vec<u8>, l: &LinearLayerParams| {
        put_f64s(out, l.weight.as_slice());
        put_f64s(out, &l.bias);
    };
    for l in model.encoder_visual.layers.iter().chain(&model.encoder_audio.layers) {
        put_linear(&mut out, l);
    }
    put_linear(&mut out, &model.classifier_visual);
    put_linear(&mut out, &model.classifier_audio);
    if let Some(mid) = &model.mid_classifier {
        put_linear(&mut out, mid);
    }
    for bn in [&model.batchnorm_visual, &model.batchnorm_audio].into_iter().flatten() {
        put_f64s(&mut out, &bn.gamma);
        put_f64s(&mut out, &bn.beta);
        put_f64s(&mut out, &bn.running_mean);
        put_f64s(&mut out, &bn.running_var);
        put_f64s(&mut out, &[bn.momentum, bn.epsilon]);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                format!("byte {}", self.pos),
                format!("truncated checkpoint while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::parse(format!("byte {start}"), "tensor size overflows"))?,
            what,
        )?;
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(
                format!("byte {}", start + 8 * i),
                format!("non-finite value in {what}"),
            ));
        }
        Ok(vals)
    }

    fn linear(&mut self, in_dim: usize, out_dim: usize, what: &str) -> Result<LinearLayerParams> {
        let w = self.f64s(in_dim * out_dim, what)?;
        let bias = self.f64s(out_dim, what)?;
        LinearLayerParams::new(Matrix::from_vec(out_dim, in_dim, w)?, bias)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TwoStreamModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse("byte 0", "missing RNA1 magic"));
    }
    let fusion = match r.u32("fusion flag")? {
        0 => FusionMode::Late,
        1 => FusionMode::Mid,
        other => return Err(Error::parse("byte 4", format!("unknown fusion flag {other}"))),
    };
    let batchnorm = match r.u32("batch norm flag")? {
        0 => false,
        1 => true,
        other => return Err(Error::parse("byte 8", format!("bad batch norm flag {other}"))),
    };
    let num_classes = r.u32("class count")?;
    let feature_dim = r.u32("feature width")?;
    let mut widths = Vec::new();
    for name in ["visual", "audio"] {
        let at = r.pos;
        let layers = r.u32("encoder depth")?;
        if layers == 0 || layers > 64 {
            return Err(Error::parse(
                format!("byte {at}"),
                format!("implausible {name} encoder depth {layers}"),
            ));
        }
        let w = (0..=layers)
            .map(|_| r.u32("encoder width"))
            .collect::<Result<Vec<_>>>()?;
        if w[layers] != feature_dim {
            return Err(Error::parse(
                format!("byte {at}"),
                format!("{name} encoder ends at width {}, header says {feature_dim}", w[layers]),
            ));
        }
        widths.push(w);
    }

    let mut encoders = Vec::new();
    for w in &widths {
        let layers = w
            .windows(2)
            .map(|p| r.linear(p[0], p[1], "encoder layer"))
            .collect::<Result<Vec<_>>>()?;
        encoders.push(Encoder::new(layers)?);
    }
    let classifier_visual = r.linear(feature_dim, num_classes, "visual classifier")?;
    let classifier_audio = r.linear(feature_dim, num_classes, "audio classifier")?;
    let mid_classifier = match fusion {
        FusionMode::Mid => Some(r.linear(2 * feature_dim, num_classes, "mid classifier")?),
        FusionMode::Late => None,
    };
    let read_bn = |r: &mut Reader| -> Result<BatchNormState> {
        let gamma = r.f64s(feature_dim, "batch norm")?;
        let beta = r.f64s(feature_dim, "batch norm")?;
        let running_mean = r.f64s(feature_dim, "batch norm")?;
        let running_var = r.f64s(feature_dim, "batch norm")?;
        let extra = r.f64s(2, "batch norm")?;
        Ok(BatchNormState {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum: extra[0],
            epsilon: extra[1],
        })
    };
    let (batchnorm_visual, batchnorm_audio) = if batchnorm {
        (Some(read_bn(&mut r)?), Some(read_bn(&mut r)?))
    } else {
        (None, None)
    };
    if r.pos != bytes.len() {
        return Err(Error::parse(
            format!("byte {}", r.pos),
            format!("{} trailing bytes after checkpoint", bytes.len() - r.pos),
        ));
    }
    let encoder_audio = encoders.pop().expect("two encoders");
    let encoder_visual = encoders.pop().expect("two encoders");
    let model = TwoStreamModel {
        encoder_visual,
        encoder_audio,
        classifier_visual,
        classifier_audio,
        fusion,
        mid_classifier,
        batchnorm_visual,
        batchnorm_audio,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &TwoStreamModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TwoStreamModel> {
    decode_checkpoint(&fs::read(path)?)
}
