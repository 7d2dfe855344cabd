use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub y: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<Sample<T>>,
    seed: u64,
    problem_id: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(samples: Vec<Sample<T>>, seed: u64, problem_id: String) -> Self {
        Self {
            samples,
            seed,
            problem_id,
        }
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn problem_id(&self) -> &str {
        &self.problem_id
    }

    /// Copy with sample `index` replaced by `z`.
    pub fn replaced(&self, index: usize, z: Sample<T>) -> Self {
        let mut out = self.clone();
        out.samples[index] = z;
        out
    }
}

/// Writes `# problem_id,seed,n`, a comment line with those values, then one
/// `x_1,…,x_d,y` row per sample.
pub fn write_dataset_csv<T: Scalar, W: Write>(data: &Dataset<T>, mut out: W) -> Result<()> {
    writeln!(out, "# problem_id,seed,n")?;
    writeln!(out, "# {},{},{}", data.problem_id, data.seed, data.len())?;
    for z in &data.samples {
        let mut line = String::new();
        for v in &z.x {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&z.y.to_string());
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset_csv<T: Scalar, R: BufRead>(input: R) -> Result<Dataset<T>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "# problem_id,seed,n" {
        return Err(Error::Parse(format!("unexpected dataset header {header:?}")));
    }
    let meta = lines.next().transpose()?.unwrap_or_default();
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("missing dataset metadata line".into()))?;
    let fields: Vec<&str> = meta.trim().rsplitn(3, ',').collect();
    if fields.len() != 3 {
        return Err(Error::Parse(format!("malformed dataset metadata {meta:?}")));
    }
    let n: usize = fields[0]
        .parse()
        .map_err(|_| Error::Parse(format!("bad n {:?}", fields[0])))?;
    let seed: u64 = fields[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad seed {:?}", fields[1])))?;
    let problem_id = fields[2].to_string();

    let mut samples = Vec::with_capacity(n);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {s:?}", row + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        let (y, x) = values
            .split_last()
            .ok_or_else(|| Error::Parse(format!("row {} is empty", row + 1)))?;
        samples.push(Sample { x: x.to_vec(), y: *y });
    }
    if samples.len() != n {
        return Err(Error::Parse(format!("header declares {n} rows, found {}", samples.len())));
    }
    Ok(Dataset::new(samples, seed, problem_id))
}
