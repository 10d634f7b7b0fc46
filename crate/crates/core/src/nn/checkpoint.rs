//! Plain-text parameter dump.
//!
//! ```text
//! icql-checkpoint 1
//! meta <key> <value>
//! tensor <name> <ndim> <dim0> ... <dimN-1>
//! <values, row-major, one matrix row per line>
//! ```
//!
//! Values are written in shortest round-trip decimal form, so saving and
//! loading reproduces parameters bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{Parameters, Real};
use crate::error::{Error, Result};

const MAGIC: &str = "icql-checkpoint 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("meta `{key}`: {e}")))
    }

    pub fn add_params<F: Real, P: Parameters<F>>(&mut self, prefix: &str, params: &P) {
        for (name, t) in params.tensors() {
            let values = t.iter().map(|x| x.as_f64()).collect();
            self.tensors
                .insert(format!("{prefix}.{name}"), (t.shape().to_vec(), values));
        }
    }

    /// Overwrites `params` with the tensors stored under `prefix`; shapes must match.
    pub fn load_params<F: Real, P: Parameters<F>>(&self, prefix: &str, params: &mut P) -> Result<()> {
        for (name, mut t) in params.tensors_mut() {
            let key = format!("{prefix}.{name}");
            let (shape, values) = self
                .tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
            if shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{key}` has shape {shape:?}, expected {:?}",
                    t.shape()
                )));
            }
            for (dst, &v) in t.iter_mut().zip(values) {
                *dst = F::from_f64_lossy(v);
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        for (name, (shape, values)) in &self.tensors {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            writeln!(w, "tensor {name} {} {}", shape.len(), dims.join(" "))?;
            let row_len = shape.last().copied().unwrap_or(1).max(1);
            let mut line = String::new();
            for row in values.chunks(row_len) {
                line.clear();
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    write!(line, "{v:?}").expect("string write");
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Checkpoint("not an icql checkpoint".into())),
        }
        let mut ck = Checkpoint::new();
        let mut current: Option<(String, Vec<usize>, Vec<f64>)> = None;
        let finish = |ck: &mut Checkpoint, cur: Option<(String, Vec<usize>, Vec<f64>)>| -> Result<()> {
            if let Some((name, shape, values)) = cur {
                let expected: usize = shape.iter().product();
                if values.len() != expected {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has {} values, expected {expected}",
                        values.len()
                    )));
                }
                ck.tensors.insert(name, (shape, values));
            }
            Ok(())
        };
        for line in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                None => continue,
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| Error::Checkpoint("meta without key".into()))?;
                    let value: Vec<&str> = parts.collect();
                    ck.meta.insert(key.to_string(), value.join(" "));
                }
                Some("tensor") => {
                    finish(&mut ck, current.take())?;
                    let name = parts
                        .next()
                        .ok_or_else(|| Error::Checkpoint("tensor without name".into()))?
                        .to_string();
                    let nums: Vec<usize> = parts
                        .map(|p| p.parse().map_err(|e| Error::Checkpoint(format!("tensor `{name}` header: {e}"))))
                        .collect::<Result<_>>()?;
                    let (&ndim, dims) = nums
                        .split_first()
                        .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` header is empty")))?;
                    if dims.len() != ndim {
                        return Err(Error::Checkpoint(format!("tensor `{name}` declares {ndim} dims")));
                    }
                    current = Some((name, dims.to_vec(), Vec::new()));
                }
                Some(first) => {
                    let (_, _, values) = current
                        .as_mut()
                        .ok_or_else(|| Error::Checkpoint("values before any tensor header".into()))?;
                    for tok in std::iter::once(first).chain(parts) {
                        values.push(
                            tok.parse()
                                .map_err(|e| Error::Checkpoint(format!("bad value `{tok}`: {e}")))?,
                        );
                    }
                }
            }
        }
        finish(&mut ck, current)?;
        Ok(ck)
    }
}
