//! `RNAFEAT v1`: a whitespace-separated text format for paired features.
//!
//! ```text
//! RNAFEAT v1 <N> <Dv> <Da> <labeled 0|1>
//! <Dv visual floats> <Da audio floats> [<label>]     (N lines)
//! ```
//!
//! Floats are written in Rust's shortest round-trip decimal form, so a save
//! followed by a load reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::MultiModalBatch;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const HEADER_TAG: &str = "RNAFEAT v1";

pub fn encode_feature_file(batch: &MultiModalBatch) -> String {
    let labeled = batch.labels().is_some();
    let mut out = String::new();
    writeln!(
        out,
        "{HEADER_TAG} {} {} {} {}",
        batch.len(),
        batch.visual().cols(),
        batch.audio().cols(),
        labeled as u8
    )
    .expect("writing to a String");
    for i in 0..batch.len() {
        let mut fields = batch
            .visual()
            .row(i)
            .iter()
            .chain(batch.audio().row(i))
            .map(|v| v.to_string())
            .collect::<Vec<_>>();
        if let Some(labels) = batch.labels() {
            fields.push(labels[i].to_string());
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

fn parse_count(tok: Option<&str>, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse("line 1", format!("header is missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse("line 1", format!("{what} '{tok}' is not a count")))
}

/// Parses a whole file. Either a complete batch comes back or an error
/// naming the offending line.
pub fn decode_feature_file(text: &str, domain_id: usize) -> Result<MultiModalBatch> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty feature file"))?;
    let mut toks = header.split_whitespace();
    let tag = [toks.next(), toks.next()];
    if tag != [Some("RNAFEAT"), Some("v1")] {
        return Err(Error::parse("line 1", "expected header starting with 'RNAFEAT v1'"));
    }
    let n = parse_count(toks.next(), "sample count")?;
    let dv = parse_count(toks.next(), "visual width")?;
    let da = parse_count(toks.next(), "audio width")?;
    let labeled = match toks.next() {
        Some("0") => false,
        Some("1") => true,
        other => {
            return Err(Error::parse(
                "line 1",
                format!("labeled flag must be 0 or 1, got {other:?}"),
            ))
        }
    };
    if toks.next().is_some() {
        return Err(Error::parse("line 1", "trailing tokens in header"));
    }

    let width = dv + da + labeled as usize;
    let mut visual = Vec::with_capacity(n * dv);
    let mut audio = Vec::with_capacity(n * da);
    let mut labels = Vec::with_capacity(if labeled { n } else { 0 });
    let mut rows = 0;
    for (idx, line) in lines {
        let loc = format!("line {}", idx + 1);
        if rows == n {
            return Err(Error::parse(loc, format!("more than the {n} declared samples")));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != width {
            let hint = if toks.len() == dv || toks.len() == dv + labeled as usize {
                "modality pairing: audio values missing"
            } else {
                "wrong number of values"
            };
            return Err(Error::parse(
                loc,
                format!("{hint} (found {}, expected {width})", toks.len()),
            ));
        }
        for (k, tok) in toks[..dv + da].iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(loc.clone(), format!("'{tok}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(loc.clone(), format!("non-finite value '{tok}'")));
            }
            if k < dv {
                visual.push(v);
            } else {
                audio.push(v);
            }
        }
        if labeled {
            let tok = toks[dv + da];
            labels.push(
                tok.parse()
                    .map_err(|_| Error::parse(loc.clone(), format!("label '{tok}' is not a class index")))?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            format!("line {}", text.lines().count() + 1),
            format!("truncated file: {rows} of {n} declared samples"),
        ));
    }
    MultiModalBatch::new(
        Matrix::from_vec(n, dv, visual)?,
        Matrix::from_vec(n, da, audio)?,
        labeled.then_some(labels),
        domain_id,
    )
}

pub fn save_feature_file(batch: &MultiModalBatch, path: &Path) -> Result<()> {
    fs::write(path, encode_feature_file(batch))?;
    Ok(())
}

pub fn load_feature_file(path: &Path) -> Result<MultiModalBatch> {
    decode_feature_file(&fs::read_to_string(path)?, 0)
}
