use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::target::{Scaling, TargetFunction};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::RngStream;

/// Largest cube dimension that may be enumerated exhaustively.
pub const MAX_ENUMERATION_DIM: usize = 22;

/// Distribution of the coordinates after the uniform block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    UniformCube,
    FixedVector(Vec<f64>),
    /// Name of a sampler registered with [`register_sampler`].
    Custom(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub d: usize,
    pub d1: usize,
    pub tail: Tail,
    pub scaling: Scaling,
}

/// Draws `len` tail coordinates.
pub type TailSampler = fn(&mut RngStream, usize) -> Vec<f64>;

fn registry() -> &'static RwLock<HashMap<String, TailSampler>> {
    static REGISTRY: OnceLock<RwLock<HashMap<String, TailSampler>>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut m: HashMap<String, TailSampler> = HashMap::new();
        m.insert("gaussian".into(), |rng, len| (0..len).map(|_| rng.normal()).collect());
        m.insert("zeros".into(), |_, len| vec![0.0; len]);
        m.insert("uniform01".into(), |rng, len| (0..len).map(|_| rng.uniform()).collect());
        RwLock::new(m)
    })
}

/// Registers (or replaces) a named tail sampler.
pub fn register_sampler(name: &str, sampler: TailSampler) {
    registry()
        .write()
        .expect("sampler registry poisoned")
        .insert(name.to_string(), sampler);
}

fn lookup_sampler(name: &str) -> Result<TailSampler> {
    registry()
        .read()
        .expect("sampler registry poisoned")
        .get(name)
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("no tail sampler registered as '{name}'")))
}

impl DataSpec {
    pub fn uniform(d: usize, scaling: Scaling) -> Self {
        Self {
            d,
            d1: d,
            tail: Tail::UniformCube,
            scaling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 > self.d || self.d == 0 {
            return Err(Error::InvalidInput(format!(
                "need 0 < d1 ≤ d, got d1={}, d={}",
                self.d1, self.d
            )));
        }
        match &self.tail {
            Tail::FixedVector(v) if v.len() != self.d - self.d1 => Err(Error::InvalidInput(format!(
                "fixed tail has length {}, expected {}",
                v.len(),
                self.d - self.d1
            ))),
            Tail::Custom(name) => lookup_sampler(name).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn coordinate(&self) -> f64 {
        self.scaling.coordinate(self.d)
    }

    pub fn sample_x(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let s = self.coordinate();
        let mut x: Vec<f64> = (0..self.d1).map(|_| s * rng.sign()).collect();
        let rest = self.d - self.d1;
        match &self.tail {
            Tail::UniformCube => x.extend((0..rest).map(|_| s * rng.sign())),
            Tail::FixedVector(v) => x.extend_from_slice(v),
            Tail::Custom(name) => {
                let tail = lookup_sampler(name)?(rng, rest);
                if tail.len() != rest {
                    return Err(Error::InvalidInput(format!(
                        "sampler '{name}' returned {} values",
                        tail.len()
                    )));
                }
                x.extend(tail);
            }
        }
        Ok(x)
    }

    /// Number of binary coordinates an exact enumeration must range over,
    /// or an error when the tail is not finitely supported.
    pub fn enumeration_dim(&self) -> Result<usize> {
        let n = match &self.tail {
            Tail::UniformCube => self.d,
            Tail::FixedVector(_) => self.d1,
            Tail::Custom(name) => {
                return Err(Error::InvalidInput(format!(
                    "custom tail '{name}' cannot be enumerated"
                )))
            }
        };
        if n > MAX_ENUMERATION_DIM {
            return Err(Error::TooLarge {
                dim: n,
                limit: MAX_ENUMERATION_DIM,
            });
        }
        Ok(n)
    }

    /// Every support point of the distribution, each with equal probability.
    /// Point `idx` has coordinate `j` equal to `−s` when bit `j` of `idx` is set.
    pub fn enumerate(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.enumeration_dim()?;
        let s = self.coordinate();
        Ok((0..1usize << n)
            .map(|idx| {
                let mut x = cube_vertex(idx, n, s);
                if let Tail::FixedVector(v) = &self.tail {
                    x.extend_from_slice(v);
                }
                x
            })
            .collect())
    }
}

pub fn cube_vertex(idx: usize, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|j| if idx >> j & 1 == 1 { -s } else { s }).collect()
}

/// Samples stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!("{} inputs but {} labels", x.rows(), y.rows())));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(xs)?, Matrix::from_rows(ys)?)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], &[f64]) {
        (self.x.row(i), self.y.row(i))
    }

    /// Same inputs with every label multiplied by `c`.
    pub fn scaled_labels(&self, c: f64) -> Self {
        let mut y = self.y.clone();
        y.scale(c);
        Self { x: self.x.clone(), y }
    }

    /// Writes the dataset with header `x_1..x_d,y_1..y_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.input_dim())
            .map(|j| format!("x_{j}"))
            .chain((1..=self.output_dim()).map(|j| format!("y_{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            let row: Vec<String> = x.iter().chain(y).map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty dataset file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let d = cols.iter().filter(|c| c.starts_with("x_")).count();
        let k = cols.iter().filter(|c| c.starts_with("y_")).count();
        if d + k != cols.len() {
            return Err(Error::InvalidInput(format!("unexpected dataset header '{header}'")));
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad value '{v}': {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != d + k {
                return Err(Error::Shape(format!(
                    "row has {} values, expected {}",
                    vals.len(),
                    d + k
                )));
            }
            xs.extend_from_slice(&vals[..d]);
            ys.extend_from_slice(&vals[d..]);
        }
        let n = xs.len() / d.max(1);
        Self::new(Matrix::from_vec(n, d, xs)?, Matrix::from_vec(n, k, ys)?)
    }
}

/// `N` i.i.d. draws `(x, H(x))` from `spec`.
pub fn sample_dataset(spec: &DataSpec, target: &TargetFunction, n: usize, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    if spec.d != target.d {
        return Err(Error::Shape(format!(
            "data dimension {} vs target dimension {}",
            spec.d, target.d
        )));
    }
    let mut xs = Vec::with_capacity(n * spec.d);
    let mut ys = Vec::with_capacity(n * target.k);
    for _ in 0..n {
        let x = spec.sample_x(rng)?;
        ys.extend(target.eval(&x)?);
        xs.extend(x);
    }
    Dataset::new(Matrix::from_vec(n, spec.d, xs)?, Matrix::from_vec(n, target.k, ys)?)
}
