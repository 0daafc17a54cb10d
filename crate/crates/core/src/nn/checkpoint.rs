//! Plain-text checkpoint format.
//!
//! ```text
//! symmflow-checkpoint
//! version 1
//! activation silu
//! widths 4 128 3
//! layer 0 weight 128 4
//! <one row of the weight matrix per line>
//! layer 0 bias 128
//! <bias values on one line>
//! ...
//! ```
//!
//! Every value is written with 17 significant digits, which round-trips any
//! `f64` exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Matrix, MlpParams};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "symmflow-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `{:.16e}` yields 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_checkpoint_string<S: Scalar>(params: &MlpParams<S>) -> String {
    let mut out = String::new();
    let widths: Vec<String> = params.widths().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "version {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "activation {}", params.activation());
    let _ = writeln!(out, "widths {}", widths.join(" "));
    for (k, layer) in params.layers().iter().enumerate() {
        let (rows, cols) = layer.weight.shape();
        let _ = writeln!(out, "layer {k} weight {rows} {cols}");
        for r in 0..rows {
            out.push_str(&join_floats(layer.weight.row(r)));
            out.push('\n');
        }
        let _ = writeln!(out, "layer {k} bias {}", layer.bias.len());
        out.push_str(&join_floats(&layer.bias));
        out.push('\n');
    }
    out
}

fn join_floats<S: Scalar>(values: &[S]) -> String {
    values
        .iter()
        .map(|v| format_float(v.as_f64()))
        .collect::<Vec<_>>()
        .join(" ")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(Error::Parse {
                line: self.line + 1,
                reason: "unexpected end of checkpoint".into(),
            }),
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    /// Reads `<keyword> <rest>` and returns the whitespace-split remainder.
    fn keyed(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(parts.collect())
    }

    fn floats<S: Scalar>(&mut self, expected: usize) -> Result<Vec<S>> {
        let line = self.next_line()?;
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map(S::lit)
                    .map_err(|_| self.err(format!("bad float `{tok}`")))
            })
            .collect::<Result<Vec<S>>>()?;
        if values.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }
}

fn parse_usize(lines: &Lines<'_>, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| lines.err(format!("bad integer `{tok}`")))
}

pub fn from_checkpoint_str<S: Scalar>(text: &str) -> Result<MlpParams<S>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next_line()? != CHECKPOINT_MAGIC {
        return Err(lines.err("missing checkpoint header"));
    }
    let version = lines.keyed("version")?;
    match version.as_slice() {
        [v] if parse_usize(&lines, v)? == CHECKPOINT_VERSION as usize => {}
        _ => return Err(lines.err(format!("unsupported version {version:?}"))),
    }
    let activation: Activation = match lines.keyed("activation")?.as_slice() {
        [name] => name.parse().map_err(|e: Error| lines.err(e.to_string()))?,
        _ => return Err(lines.err("expected one activation name")),
    };
    let widths = lines
        .keyed("widths")?
        .into_iter()
        .map(|t| parse_usize(&lines, t))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(lines.err("need at least two widths"));
    }

    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (k, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let header = lines.keyed("layer")?;
        let expected = [k.to_string(), "weight".into(), fan_out.to_string(), fan_in.to_string()];
        if header != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(lines.err(format!("expected `layer {}`", expected.join(" "))));
        }
        let mut data = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out {
            data.extend(lines.floats::<S>(fan_in)?);
        }
        let weight = Matrix::from_vec(fan_out, fan_in, data)?;
        let header = lines.keyed("layer")?;
        let expected = [k.to_string(), "bias".into(), fan_out.to_string()];
        if header != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(lines.err(format!("expected `layer {}`", expected.join(" "))));
        }
        let bias = lines.floats::<S>(fan_out)?;
        layers.push(Layer { weight, bias });
    }
    MlpParams::from_layers(layers, activation)
}
