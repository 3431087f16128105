use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fc::FullyConnectedNet;
use super::ntk::{tangent_kernel, TangentFeatures};
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_psd, solve_symmetric_pinv, Cholesky, Matrix};
use crate::resnet::TrainableSet;
use crate::risk::Predictor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KernelSpec {
    /// `exp(−‖x−y‖²/h)`
    Gaussian { h: f64 },
    /// `arcsin(⟨x,y⟩ / (‖x‖‖y‖))`
    Arcsin,
    /// `⟨(σ(h_l(x)),1), (σ(h_l(y)),1)⟩` for hidden layer `layer` of a frozen net.
    Conjugate { net: FullyConnectedNet, layer: usize },
    /// Output-averaged inner product of parameter gradients of a frozen net.
    Ntk {
        net: FullyConnectedNet,
        trainable: TrainableSet,
    },
    /// A fixed matrix; inputs are one-element vectors holding a row index.
    Gram { matrix: Matrix },
}

/// Per-point values a kernel needs, computed once per row.
enum Prepared {
    Raw(Vec<f64>),
    Norm(Vec<f64>, f64),
    Features(Vec<f64>),
    Tangent(Vec<Vec<f64>>),
    Index(usize),
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { h } if !(*h > 0.0) => Err(Error::InvalidInput(format!(
                "gaussian bandwidth must be positive, got {h}"
            ))),
            KernelSpec::Conjugate { net, layer } if *layer >= net.hidden.len() => {
                Err(Error::InvalidInput(format!("conjugate layer {layer} out of range")))
            }
            KernelSpec::Gram { matrix } if matrix.rows() != matrix.cols() => {
                Err(Error::Shape("explicit gram must be square".into()))
            }
            _ => Ok(()),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Conjugate { net, .. } | KernelSpec::Ntk { net, .. } => Some(net.d),
            KernelSpec::Gram { .. } => Some(1),
            _ => None,
        }
    }

    fn prepare(&self, x: &[f64]) -> Result<Prepared> {
        if let Some(d) = self.input_dim() {
            if x.len() != d {
                return Err(Error::Shape(format!(
                    "kernel expects input of length {d}, got {}",
                    x.len()
                )));
            }
        }
        Ok(match self {
            KernelSpec::Gaussian { .. } => Prepared::Raw(x.to_vec()),
            KernelSpec::Arcsin => {
                let n = crate::linalg::norm(x);
                if n == 0.0 {
                    return Err(Error::UndefinedKernel("arcsin kernel at the zero vector".into()));
                }
                Prepared::Norm(x.to_vec(), n)
            }
            KernelSpec::Conjugate { net, layer } => Prepared::Features(net.hidden_features(x, *layer)?),
            KernelSpec::Ntk { net, trainable } => Prepared::Tangent(net.tangent_features(x, *trainable)),
            KernelSpec::Gram { matrix } => {
                let i = x[0];
                if !(i >= 0.0 && i.fract() == 0.0 && (i as usize) < matrix.rows()) {
                    return Err(Error::InvalidInput(format!(
                        "{i} is not a row index of the explicit gram"
                    )));
                }
                Prepared::Index(i as usize)
            }
        })
    }

    fn eval_prepared(&self, a: &Prepared, b: &Prepared) -> f64 {
        match (self, a, b) {
            (KernelSpec::Gaussian { h }, Prepared::Raw(x), Prepared::Raw(y)) => {
                let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
                (-d2 / h).exp()
            }
            (KernelSpec::Arcsin, Prepared::Norm(x, nx), Prepared::Norm(y, ny)) => {
                (dot(x, y) / (nx * ny)).clamp(-1.0, 1.0).asin()
            }
            (KernelSpec::Conjugate { .. }, Prepared::Features(x), Prepared::Features(y)) => dot(x, y),
            (KernelSpec::Ntk { .. }, Prepared::Tangent(x), Prepared::Tangent(y)) => tangent_kernel(x, y),
            (KernelSpec::Gram { matrix }, Prepared::Index(i), Prepared::Index(j)) => matrix[(*i, *j)],
            _ => unreachable!("prepared values come from the same spec"),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.eval_prepared(&self.prepare(x)?, &self.prepare(y)?))
    }
}

fn prepare_rows(spec: &KernelSpec, x: &Matrix) -> Result<Vec<Prepared>> {
    (0..x.rows()).into_par_iter().map(|i| spec.prepare(x.row(i))).collect()
}

/// `K[i][j] = K(x_i, x′_j)`.
pub fn kernel_gram(spec: &KernelSpec, x: &Matrix, x2: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    if x.cols() != x2.cols() {
        return Err(Error::Shape(format!(
            "inputs have {} and {} columns",
            x.cols(),
            x2.cols()
        )));
    }
    let a = prepare_rows(spec, x)?;
    let b = prepare_rows(spec, x2)?;
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|pa| b.iter().map(|pb| spec.eval_prepared(pa, pb)).collect())
        .collect();
    let mut out = Matrix::zeros(x.rows(), x2.rows());
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `(λ/2) Σ_j w_jᵀ K w_j`, giving `(K + λI) w_j = y_j`.
    Rkhs,
    /// `(λ/2) Σ_j ‖w_j‖²`, giving `(K² + λI) w_j = K y_j`.
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressOptions {
    pub regularizer: Regularizer,
    /// Fall back to a pseudo-inverse when the system is singular.
    pub pinv_fallback: bool,
}

impl Default for RegressOptions {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::Rkhs,
            pinv_fallback: true,
        }
    }
}

/// `𝔎_j(x) = Σ_n K_j(x, x_n) w_{j,n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelPredictor {
    /// One shared kernel, or one per output.
    pub kernels: Vec<KernelSpec>,
    pub anchors: Matrix,
    /// `N × k`; column `j` is `w_j`.
    pub weights: Matrix,
    /// Set when a singular system was solved by pseudo-inverse.
    pub used_pinv: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kernels: Vec<KernelSpec>,
    anchors: Matrix,
    n: usize,
    k: usize,
    used_pinv: bool,
}

impl KernelPredictor {
    fn kernel_for(&self, j: usize) -> &KernelSpec {
        if self.kernels.len() == 1 {
            &self.kernels[0]
        } else {
            &self.kernels[j]
        }
    }

    pub fn output_count(&self) -> usize {
        self.weights.cols()
    }

    /// Writes a JSON header line followed by the little-endian weight block.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kernels: self.kernels.clone(),
            anchors: self.anchors.clone(),
            n: self.weights.rows(),
            k: self.weights.cols(),
            used_pinv: self.used_pinv,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in self.weights.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != header.n * header.k * 8 {
            return Err(Error::Shape(format!("weight block has {} bytes", bytes.len())));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            kernels: header.kernels,
            anchors: header.anchors,
            weights: Matrix::from_vec(header.n, header.k, data)?,
            used_pinv: header.used_pinv,
        })
    }
}

impl Predictor for KernelPredictor {
    fn input_dim(&self) -> usize {
        self.anchors.cols()
    }

    fn output_dim(&self) -> usize {
        self.output_count()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        kernel_predict(self, x).expect("input validated by caller")
    }
}

pub fn kernel_predict(pred: &KernelPredictor, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != pred.anchors.cols() {
        return Err(Error::Shape(format!(
            "expected input of length {}, got {}",
            pred.anchors.cols(),
            x.len()
        )));
    }
    let n = pred.anchors.rows();
    let mut cache: Option<(usize, Vec<f64>)> = None;
    (0..pred.output_count())
        .map(|j| {
            let spec = pred.kernel_for(j);
            let key = if pred.kernels.len() == 1 { 0 } else { j };
            if cache.as_ref().is_none_or(|(k, _)| *k != key) {
                let px = spec.prepare(x)?;
                let row = (0..n)
                    .map(|i| Ok(spec.eval_prepared(&px, &spec.prepare(pred.anchors.row(i))?)))
                    .collect::<Result<Vec<f64>>>()?;
                cache = Some((key, row));
            }
            let row = &cache.as_ref().expect("filled above").1;
            Ok((0..n).map(|i| row[i] * pred.weights[(i, j)]).sum())
        })
        .collect()
}

fn solve_column(
    k: &Matrix,
    y: &[f64],
    ridge: f64,
    opts: &RegressOptions,
    chol: Option<&Cholesky>,
) -> Result<(Vec<f64>, bool)> {
    if let Some(c) = chol {
        return Ok((c.solve(y), false));
    }
    match opts.regularizer {
        Regularizer::Rkhs => match solve_psd(k, &Matrix::column(y), ridge) {
            Ok(w) => Ok((w.into_vec(), false)),
            Err(Error::NotPositiveDefinite { .. }) if opts.pinv_fallback => {
                let mut a = k.clone();
                a.add_diagonal(ridge);
                Ok((solve_symmetric_pinv(&a, y, 1e-12), true))
            }
            Err(e) => Err(e),
        },
        Regularizer::L2 => {
            let k2 = k.matmul(k)?;
            let ky = k.matvec(y);
            match solve_psd(&k2, &Matrix::column(&ky), ridge) {
                Ok(w) => Ok((w.into_vec(), false)),
                Err(Error::NotPositiveDefinite { .. }) if opts.pinv_fallback => {
                    let mut a = k2;
                    a.add_diagonal(ridge);
                    Ok((solve_symmetric_pinv(&a, &ky, 1e-12), true))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Fits `w_1..w_k` by regularized least squares on the anchors `x`.
///
/// `kernels` holds one shared kernel or one per output column of `y`.
pub fn kernel_regress(
    kernels: &[KernelSpec],
    x: &Matrix,
    y: &Matrix,
    ridge: f64,
    opts: RegressOptions,
) -> Result<KernelPredictor> {
    if x.rows() != y.rows() || x.rows() == 0 {
        return Err(Error::Shape(format!("{} inputs but {} labels", x.rows(), y.rows())));
    }
    if !(kernels.len() == 1 || kernels.len() == y.cols()) {
        return Err(Error::Shape(format!(
            "{} kernels for {} outputs",
            kernels.len(),
            y.cols()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
    }
    let (n, k) = (x.rows(), y.cols());
    let mut weights = Matrix::zeros(n, k);
    let mut used_pinv = false;
    let grams: Vec<Matrix> = kernels
        .iter()
        .map(|spec| {
            let mut g = kernel_gram(spec, x, x)?;
            g.symmetrize();
            Ok(g)
        })
        .collect::<Result<_>>()?;
    // A shared factorization serves every output when the kernel is shared.
    let shared_chol =
        if grams.len() == 1 && opts.regularizer == Regularizer::Rkhs && n <= crate::linalg::DIRECT_SOLVE_LIMIT {
            let mut a = grams[0].clone();
            a.add_diagonal(ridge);
            Cholesky::factor(&a).ok()
        } else {
            None
        };
    for j in 0..k {
        let g = if grams.len() == 1 { &grams[0] } else { &grams[j] };
        let (w, pinv) = solve_column(g, &y.col(j), ridge, &opts, shared_chol.as_ref())?;
        used_pinv |= pinv;
        for (i, v) in w.into_iter().enumerate() {
            weights[(i, j)] = v;
        }
    }
    Ok(KernelPredictor {
        kernels: kernels.to_vec(),
        anchors: x.clone(),
        weights,
        used_pinv,
    })
}
