use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fourier::parity_sign;
use crate::baselines::{kernel_gram, kernel_regress, KernelSpec, RegressOptions};
use crate::concept::{cube_vertex, DataSpec, Scaling};
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_symmetric_pinv, Matrix, DIRECT_SOLVE_LIMIT};
use crate::rng::RngStream;

/// Largest cube dimension a separation experiment enumerates.
pub const MAX_EXPERIMENT_DIM: usize = 18;

/// Where the `N` training inputs come from. Inputs live on the `±1/√d` cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Anchors {
    /// `n` uniform draws from the cube.
    Sampled {
        n: usize,
    },
    /// Every vertex once.
    FullCube,
    Given {
        points: Matrix,
    },
}

/// Which label is fitted. The risk is always measured against the same label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelPart {
    /// `α χ_S`, the composite part rescaled to unit moment before `α`.
    #[default]
    Composite,
    /// `χ_{i_1} + α χ_S`, the first output coordinate with the same rescaling.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationSetup {
    pub d: usize,
    pub d1: usize,
    pub k: usize,
    pub alpha: f64,
    pub anchors: Anchors,
    #[serde(default)]
    pub label: LabelPart,
}

/// Fixed feature maps for the linear-regression variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeatureMap {
    /// `max(0, ⟨g, x⟩ + b)` with `g ~ N(0, I)`, `b ~ N(0, 1/d)`.
    RandomRelu { dim: usize },
    /// `√2 cos(scale·⟨g, x⟩ + b)` with `g ~ N(0, I)`, `b ~ U[0, 2π)`.
    RandomFourier { dim: usize, scale: f64 },
    /// Every monomial `Π_{j∈T} x_j` with `|T| ≤ max_degree`.
    Monomials { max_degree: usize },
    /// The characters `χ_T` with `T ⊆ [d1]`, `|T| = degree`.
    Characters { degree: usize },
}

enum Realized {
    Relu(Vec<(Vec<f64>, f64)>),
    Fourier(Vec<(Vec<f64>, f64)>, f64),
    Products(Vec<usize>, f64),
}

impl Realized {
    fn new(map: &FeatureMap, d: usize, d1: usize, rng: &mut RngStream) -> Result<Self> {
        let s = Scaling::UnitSphere.coordinate(d);
        Ok(match *map {
            FeatureMap::RandomRelu { dim } => Realized::Relu(
                (0..dim)
                    .map(|_| {
                        let g = (0..d).map(|_| rng.normal()).collect();
                        (g, rng.normal() * s)
                    })
                    .collect(),
            ),
            FeatureMap::RandomFourier { dim, scale } => Realized::Fourier(
                (0..dim)
                    .map(|_| {
                        let g = (0..d).map(|_| rng.normal()).collect();
                        (g, rng.uniform() * std::f64::consts::TAU)
                    })
                    .collect(),
                scale,
            ),
            FeatureMap::Monomials { max_degree } => Realized::Products(
                (0..1usize << d)
                    .filter(|m| m.count_ones() as usize <= max_degree)
                    .collect(),
                s,
            ),
            FeatureMap::Characters { degree } => {
                if degree > d1 {
                    return Err(Error::InvalidInput(format!("degree {degree} exceeds d1 = {d1}")));
                }
                Realized::Products(subset_masks(d1, degree), s)
            }
        })
    }

    fn dim(&self) -> usize {
        match self {
            Realized::Relu(u) | Realized::Fourier(u, _) => u.len(),
            Realized::Products(m, _) => m.len(),
        }
    }

    fn features(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Realized::Relu(units) => units.iter().map(|(g, b)| (dot(g, x) + b).max(0.0)).collect(),
            Realized::Fourier(units, scale) => units
                .iter()
                .map(|(g, b)| std::f64::consts::SQRT_2 * (scale * dot(g, x) + b).cos())
                .collect(),
            Realized::Products(masks, s) => masks
                .iter()
                .map(|&m| (0..x.len()).filter(|j| m >> j & 1 == 1).map(|j| x[j] / s).product())
                .collect(),
        }
    }
}

/// Exact risk of the best predictor for every `k`-subset of `[d1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub params: ReportParams,
    /// `α²/16 · E[χ_S²]`
    pub threshold: f64,
    /// 0-based coordinates of each subset, in lexicographic order.
    pub subsets: Vec<Vec<usize>>,
    pub risks: Vec<f64>,
    pub fraction_below: f64,
    /// Risks count as below the threshold under strict `<`.
    pub comparator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub method: String,
    pub d: usize,
    pub d1: usize,
    pub k: usize,
    pub alpha: f64,
    pub anchors: usize,
    pub features: Option<usize>,
    pub ridge: Option<f64>,
    pub label: LabelPart,
}

impl SeparationReport {
    pub fn mean_risk(&self) -> f64 {
        self.risks.iter().sum::<f64>() / self.risks.len() as f64
    }

    pub fn count_below(&self) -> usize {
        self.risks.iter().filter(|&&r| r < self.threshold).count()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "subset,risk,below")?;
        for (s, r) in self.subsets.iter().zip(&self.risks) {
            let name: Vec<String> = s.iter().map(usize::to_string).collect();
            writeln!(w, "{},{r:e},{}", name.join(" "), u8::from(*r < self.threshold))?;
        }
        Ok(())
    }
}

/// Bit masks of every `k`-subset of `0..n`, in lexicographic order of the
/// sorted index lists.
pub fn subset_masks(n: usize, k: usize) -> Vec<usize> {
    fn rec(start: usize, n: usize, left: usize, mask: usize, out: &mut Vec<usize>) {
        if left == 0 {
            out.push(mask);
            return;
        }
        for i in start..=n - left {
            rec(i + 1, n, left - 1, mask | 1 << i, out);
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, 0, &mut out);
    }
    out
}

fn mask_indices(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|j| mask >> j & 1 == 1).collect()
}

impl SeparationSetup {
    pub fn validate(&self) -> Result<()> {
        if !(2 <= self.k && self.k <= self.d1 && self.d1 <= self.d) {
            return Err(Error::InvalidInstance(format!(
                "need 2 ≤ k ≤ d1 ≤ d, got k={}, d1={}, d={}",
                self.k, self.d1, self.d
            )));
        }
        if self.d > MAX_EXPERIMENT_DIM {
            return Err(Error::TooLarge {
                dim: self.d,
                limit: MAX_EXPERIMENT_DIM,
            });
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidInput("alpha must be finite".into()));
        }
        Ok(())
    }

    fn anchor_points(&self, rng: &mut RngStream) -> Result<Matrix> {
        let s = Scaling::UnitSphere.coordinate(self.d);
        let rows: Vec<Vec<f64>> = match &self.anchors {
            Anchors::Sampled { n } => {
                let spec = DataSpec::uniform(self.d, Scaling::UnitSphere);
                (0..*n).map(|_| spec.sample_x(rng)).collect::<Result<_>>()?
            }
            Anchors::FullCube => (0..1usize << self.d).map(|idx| cube_vertex(idx, self.d, s)).collect(),
            Anchors::Given { points } => {
                if points.cols() != self.d {
                    return Err(Error::Shape(format!(
                        "anchors have {} columns, expected {}",
                        points.cols(),
                        self.d
                    )));
                }
                return Ok(points.clone());
            }
        };
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.d));
        }
        Matrix::from_rows(&rows)
    }

    /// Label of subset `mask` at a cube point.
    fn label(&self, x: &[f64], mask: usize) -> f64 {
        let s = Scaling::UnitSphere.coordinate(self.d);
        let chi: f64 = mask_indices(mask).iter().map(|&j| x[j] / s).product();
        match self.label {
            LabelPart::Composite => self.alpha * chi,
            LabelPart::Full => x[mask.trailing_zeros() as usize] / s + self.alpha * chi,
        }
    }

    /// Label at vertex `idx` of the enumerated cube.
    fn label_at_vertex(&self, idx: usize, mask: usize) -> f64 {
        let chi = parity_sign(idx & mask);
        match self.label {
            LabelPart::Composite => self.alpha * chi,
            LabelPart::Full => parity_sign(idx & mask & mask.wrapping_neg()) + self.alpha * chi,
        }
    }

    fn threshold(&self, masks: &[usize]) -> f64 {
        // E[χ_S²] is 1 on the cube; computed so the floor tracks the table.
        let n = 1usize << self.d;
        let moment = (0..n).map(|idx| parity_sign(idx & masks[0]).powi(2)).sum::<f64>() / n as f64;
        self.alpha * self.alpha / 16.0 * moment
    }

    fn report(
        &self,
        method: &str,
        masks: &[usize],
        risks: Vec<f64>,
        anchors: usize,
        features: Option<usize>,
        ridge: Option<f64>,
    ) -> SeparationReport {
        let threshold = self.threshold(masks);
        let below = risks.iter().filter(|&&r| r < threshold).count();
        SeparationReport {
            params: ReportParams {
                method: method.into(),
                d: self.d,
                d1: self.d1,
                k: self.k,
                alpha: self.alpha,
                anchors,
                features,
                ridge,
                label: self.label,
            },
            threshold,
            subsets: masks.iter().map(|&m| mask_indices(m)).collect(),
            fraction_below: below as f64 / risks.len() as f64,
            risks,
            comparator: "lt".into(),
        }
    }

    /// `E[(f − y_S)²]` over the cube for predictions `f` given by `predict(idx)`.
    fn exact_risk(&self, mask: usize, predict: impl Fn(usize) -> f64) -> f64 {
        let n = 1usize << self.d;
        (0..n)
            .map(|idx| (predict(idx) - self.label_at_vertex(idx, mask)).powi(2))
            .sum::<f64>()
            / n as f64
    }
}

fn cube_points(d: usize) -> Matrix {
    let s = Scaling::UnitSphere.coordinate(d);
    let rows: Vec<Vec<f64>> = (0..1usize << d).map(|idx| cube_vertex(idx, d, s)).collect();
    Matrix::from_rows(&rows).expect("cube rows share a length")
}

/// Fits the best kernel predictor for every `k`-subset `S ⊆ [d1]` and measures
/// its exact population risk on the cube.
pub fn kernel_separation_experiment(
    setup: &SeparationSetup,
    kernel: &KernelSpec,
    ridge: f64,
    rng: &mut RngStream,
) -> Result<SeparationReport> {
    setup.validate()?;
    let anchors = setup.anchor_points(rng)?;
    let n = anchors.rows();
    if n > DIRECT_SOLVE_LIMIT {
        return Err(Error::TooLarge {
            dim: n,
            limit: DIRECT_SOLVE_LIMIT,
        });
    }
    let masks = subset_masks(setup.d1, setup.k);
    let risks = if n == 0 {
        masks.iter().map(|&m| setup.exact_risk(m, |_| 0.0)).collect()
    } else {
        let labels: Vec<Vec<f64>> = (0..n)
            .map(|i| masks.iter().map(|&m| setup.label(anchors.row(i), m)).collect())
            .collect();
        let y = Matrix::from_rows(&labels)?;
        let fit = kernel_regress(
            std::slice::from_ref(kernel),
            &anchors,
            &y,
            ridge,
            RegressOptions::default(),
        )?;
        let cross = kernel_gram(kernel, &cube_points(setup.d), &anchors)?;
        masks
            .par_iter()
            .enumerate()
            .map(|(j, &m)| {
                let w = fit.weights.col(j);
                setup.exact_risk(m, |idx| dot(cross.row(idx), &w))
            })
            .collect()
    };
    Ok(setup.report("kernel", &masks, risks, n, None, Some(ridge)))
}

/// Same protocol with least squares over a fixed `D`-dimensional feature map.
pub fn feature_map_separation_experiment(
    setup: &SeparationSetup,
    map: &FeatureMap,
    rng: &mut RngStream,
) -> Result<SeparationReport> {
    setup.validate()?;
    let anchors = setup.anchor_points(rng)?;
    let features = Realized::new(map, setup.d, setup.d1, rng)?;
    let dim = features.dim();
    if dim == 0 {
        return Err(Error::InvalidInput("feature map has no features".into()));
    }
    if dim > DIRECT_SOLVE_LIMIT {
        return Err(Error::TooLarge {
            dim,
            limit: DIRECT_SOLVE_LIMIT,
        });
    }
    let n = anchors.rows();
    let masks = subset_masks(setup.d1, setup.k);
    let phi: Vec<Vec<f64>> = (0..n).map(|i| features.features(anchors.row(i))).collect();
    let mut gram = Matrix::zeros(dim, dim);
    for f in &phi {
        for a in 0..dim {
            for b in 0..dim {
                gram[(a, b)] += f[a] * f[b];
            }
        }
    }
    let weights: Vec<Vec<f64>> = masks
        .par_iter()
        .map(|&m| {
            let mut rhs = vec![0.0; dim];
            for (i, f) in phi.iter().enumerate() {
                crate::linalg::axpy(setup.label(anchors.row(i), m), f, &mut rhs);
            }
            solve_symmetric_pinv(&gram, &rhs, 1e-10)
        })
        .collect();
    let s = Scaling::UnitSphere.coordinate(setup.d);
    let cube_features: Vec<Vec<f64>> = (0..1usize << setup.d)
        .into_par_iter()
        .map(|idx| features.features(&cube_vertex(idx, setup.d, s)))
        .collect();
    let risks = masks
        .par_iter()
        .zip(&weights)
        .map(|(&m, w)| setup.exact_risk(m, |idx| dot(&cube_features[idx], w)))
        .collect();
    Ok(setup.report("feature-map", &masks, risks, n, Some(dim), None))
}
