use serde::{Deserialize, Serialize};

use crate::concept::{cube_vertex, MAX_ENUMERATION_DIM};
use crate::error::{Error, Result};

/// Largest dimension accepted by [`naive_walsh_hadamard`].
pub const MAX_NAIVE_DIM: usize = 12;

/// A real function on `{±1}^d`, stored as its value at every vertex.
///
/// Entry `idx` is the value at the vertex whose coordinate `j` is `−1` when
/// bit `j` of `idx` is set, so the character `χ_S` takes the value
/// `(−1)^{popcount(idx & S)}` there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFunction {
    d: usize,
    values: Vec<f64>,
}

impl CubeFunction {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(d)?;
        if values.len() != 1 << d {
            return Err(Error::Shape(format!(
                "a table on {{±1}}^{d} needs {} values, got {}",
                1usize << d,
                values.len()
            )));
        }
        Ok(Self { d, values })
    }

    /// Tabulates `f` on the cube with coordinates `±s`.
    pub fn from_fn(d: usize, s: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_dim(d)?;
        let values = (0..1usize << d).map(|idx| f(&cube_vertex(idx, d, s))).collect();
        Ok(Self { d, values })
    }

    /// `χ_S(x) = Π_{j∈S} x_j`, with `S` given as a bit mask.
    pub fn character(d: usize, mask: usize) -> Result<Self> {
        check_dim(d)?;
        let values = (0..1usize << d).map(|idx| parity_sign(idx & mask)).collect();
        Ok(Self { d, values })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `E[f²]` under the uniform measure.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    /// `λ_S = E[f(x) χ_S(x)]` for every `S`, by the fast transform.
    pub fn walsh_hadamard(&self) -> FourierSpectrum {
        let mut coeffs = self.values.clone();
        butterfly(&mut coeffs);
        let scale = 1.0 / coeffs.len() as f64;
        coeffs.iter_mut().for_each(|c| *c *= scale);
        FourierSpectrum { d: self.d, coeffs }
    }
}

/// Coefficients `λ_S` indexed by subset mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSpectrum {
    pub d: usize,
    pub coeffs: Vec<f64>,
}

impl FourierSpectrum {
    pub fn coefficient(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    /// `Σ_S λ_S²`
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `f = Σ_S λ_S χ_S`
    pub fn inverse(&self) -> CubeFunction {
        let mut values = self.coeffs.clone();
        butterfly(&mut values);
        CubeFunction { d: self.d, values }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::TooLarge {
            dim: d,
            limit: MAX_ENUMERATION_DIM,
        });
    }
    Ok(())
}

pub(crate) fn parity_sign(bits: usize) -> f64 {
    if bits.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Unnormalized in-place transform `v ↦ H v` with `H_{xS} = (−1)^{|x∩S|}`.
fn butterfly(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Direct `O(4^d)` summation of every coefficient.
pub fn naive_walsh_hadamard(f: &CubeFunction) -> Result<FourierSpectrum> {
    if f.d > MAX_NAIVE_DIM {
        return Err(Error::TooLarge {
            dim: f.d,
            limit: MAX_NAIVE_DIM,
        });
    }
    let n = f.values.len();
    let coeffs = (0..n)
        .map(|mask| {
            f.values
                .iter()
                .enumerate()
                .map(|(idx, v)| v * parity_sign(idx & mask))
                .sum::<f64>()
                / n as f64
        })
        .collect();
    Ok(FourierSpectrum { d: f.d, coeffs })
}

/// `E[(f − αχ_S)²] = (λ_S − α)² + Σ_{S′≠S} λ_{S′}²`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsevalDecomposition {
    pub lambda: f64,
    pub off_energy: f64,
    pub residual: f64,
    /// `residual + off_energy`
    pub total: f64,
    /// `E[(f − αχ_S)²]` summed directly over the cube.
    pub direct: f64,
}

pub fn parseval_decomposition(f: &CubeFunction, mask: usize, alpha: f64) -> Result<ParsevalDecomposition> {
    if mask >> f.d != 0 {
        return Err(Error::InvalidInput(format!(
            "subset mask {mask:#b} exceeds dimension {}",
            f.d
        )));
    }
    let spectrum = f.walsh_hadamard();
    let lambda = spectrum.coefficient(mask);
    let off_energy = spectrum.energy() - lambda * lambda;
    let residual = (lambda - alpha).powi(2);
    let direct = f
        .values
        .iter()
        .enumerate()
        .map(|(idx, v)| (v - alpha * parity_sign(idx & mask)).powi(2))
        .sum::<f64>()
        / f.values.len() as f64;
    let total = residual + off_energy;
    debug_assert!((total - direct).abs() <= 1e-10 * direct.max(1.0), "{total} vs {direct}");
    Ok(ParsevalDecomposition {
        lambda,
        off_energy,
        residual,
        total,
        direct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_function(d: usize, seed: u64) -> CubeFunction {
        let mut rng = RngStream::new(seed, 0);
        CubeFunction::new(d, (0..1 << d).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn constant_function() {
        let s = CubeFunction::new(4, vec![1.0; 16]).unwrap().walsh_hadamard();
        assert_eq!(s.coefficient(0), 1.0);
        assert!(s.coeffs[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_character() {
        let f = CubeFunction::from_fn(3, 1.0, |x| x[0] * x[1]).unwrap();
        let s = f.walsh_hadamard();
        for mask in 0..8 {
            assert_eq!(s.coefficient(mask), if mask == 0b011 { 1.0 } else { 0.0 });
        }
        assert_eq!(f, CubeFunction::character(3, 0b011).unwrap());
    }

    #[test]
    fn parseval_on_random_tables() {
        for seed in 0..10 {
            let f = random_function(10, seed);
            assert!((f.walsh_hadamard().energy() - f.mean_square()).abs() <= 1e-10);
        }
    }

    #[test]
    fn fast_matches_naive() {
        for d in 0..=6 {
            let f = random_function(d, 100 + d as u64);
            let fast = f.walsh_hadamard();
            let slow = naive_walsh_hadamard(&f).unwrap();
            for (a, b) in fast.coeffs.iter().zip(&slow.coeffs) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        assert!(naive_walsh_hadamard(&random_function(13, 0)).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let f = random_function(9, 7);
        let back = f.walsh_hadamard().inverse();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn rejects_oversized_dimension() {
        assert!(matches!(
            CubeFunction::character(23, 1),
            Err(Error::TooLarge { dim: 23, .. })
        ));
        assert!(CubeFunction::new(3, vec![0.0; 7]).is_err());
    }

    #[test]
    fn decomposition_of_exact_parity() {
        let f = CubeFunction::character(5, 0b10100).unwrap();
        let scaled = CubeFunction::new(5, f.values().iter().map(|v| 0.3 * v).collect()).unwrap();
        let p = parseval_decomposition(&scaled, 0b10100, 0.3).unwrap();
        assert!(p.residual.abs() < 1e-15 && p.off_energy.abs() < 1e-15);
    }

    #[test]
    fn decomposition_of_zero() {
        let p = parseval_decomposition(&CubeFunction::new(4, vec![0.0; 16]).unwrap(), 0b0110, 0.3).unwrap();
        assert!((p.total - 0.09).abs() < 1e-15);
        assert!((p.direct - 0.09).abs() < 1e-15);
    }

    #[test]
    fn decomposition_matches_enumeration() {
        for seed in 0..5 {
            let f = random_function(8, seed);
            let p = parseval_decomposition(&f, 0b1001_0010, 0.7).unwrap();
            assert!((p.total - p.direct).abs() <= 1e-10);
        }
    }
}
