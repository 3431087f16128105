use nalgebra::{DMatrix, SymmetricEigen};

/// Highest degree the fitting code works with.
pub const MAX_HERMITE_DEGREE: usize = 40;

/// Probabilists' Hermite polynomial `He_i`, normalized so that
/// `∫ He_i He_j e^{−z²/2} dz = √(2π) j! δ_ij`.
pub fn hermite_poly(i: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if i == 0 {
        return prev;
    }
    for n in 1..i {
        let next = z * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `d/dz He_i = i He_{i−1}`
pub fn hermite_derivative(i: usize, z: f64) -> f64 {
    if i == 0 {
        0.0
    } else {
        i as f64 * hermite_poly(i - 1, z)
    }
}

/// `B_i = 100 √i + 10 √log(1/ε)`
pub fn truncation_bound(i: usize, eps: f64) -> f64 {
    100.0 * (i as f64).sqrt() + 10.0 * (1.0 / eps).ln().sqrt()
}

/// `He_i` on `[−B_i, B_i]`, held constant beyond.
pub fn truncated_hermite(i: usize, z: f64, eps: f64) -> f64 {
    let b = truncation_bound(i, eps);
    hermite_poly(i, z.clamp(-b, b))
}

/// `(n−1)!!`-style double factorial, with `0!! = (−1)!! = 1`.
pub fn double_factorial(n: i64) -> f64 {
    (1..=n.max(0)).rev().step_by(2).map(|v| v as f64).product()
}

/// Nodes and weights of an `n`-point Gauss rule for a Jacobi matrix with
/// zero diagonal and off-diagonal `b(1..n)`; weights sum to `mass`.
fn golub_welsch(n: usize, b: impl Fn(usize) -> f64, mass: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        j[(i, i - 1)] = b(i);
        j[(i - 1, i)] = b(i);
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mass * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `(ψ_n(x), ψ_{n−1}(x))` for the orthonormal `ψ_i = He_i / √i!`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for i in 0..n {
        let next = (x * cur - (i as f64).sqrt() * prev) / (i as f64 + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `(P_n(x), P_{n−1}(x))` for Legendre polynomials.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for i in 0..n {
        let i = i as f64;
        let next = ((2.0 * i + 1.0) * x * cur - i * prev) / (i + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Rule for `E_{z∼N(0,1)}[g(z)]`, exact for polynomials of degree `< 2n`.
/// Nodes are polished by Newton steps and weights taken from the
/// Christoffel formula `1 / (n ψ_{n−1}²)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, _) = golub_welsch(n, |i| (i as f64).sqrt(), 1.0);
    let nf = n as f64;
    nodes
        .into_iter()
        .map(|mut x| {
            for _ in 0..3 {
                let (p, q) = orthonormal_hermite(n, x);
                x -= p / (nf.sqrt() * q);
            }
            let (_, q) = orthonormal_hermite(n, x);
            (x, 1.0 / (nf * q * q))
        })
        .unzip()
}

/// Rule for `∫_a^b g(z) dz`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (nodes, _) = golub_welsch(
        n,
        |i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        },
        2.0,
    );
    let nf = n as f64;
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    nodes
        .into_iter()
        .map(|mut t| {
            let deriv = |t: f64| {
                let (p, q) = legendre(n, t);
                (p, nf * (q - t * p) / (1.0 - t * t))
            };
            for _ in 0..3 {
                let (p, dp) = deriv(t);
                t -= p / dp;
            }
            let (_, dp) = deriv(t);
            (mid + half * t, half * 2.0 / ((1.0 - t * t) * dp * dp))
        })
        .unzip()
}

/// Cutoff beyond which the standard Gaussian density is negligible.
const HALF_LINE_END: f64 = 40.0;
const QUADRATURE_POINTS: usize = 256;

/// `E_{z∼N(0,1)}[1[z ≥ 0] g(z)]`
pub fn half_line_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre(QUADRATURE_POINTS, 0.0, HALF_LINE_END);
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    nodes
        .iter()
        .zip(&weights)
        .map(|(&z, w)| w * g(z) * c * (-z * z / 2.0).exp())
        .sum()
}

/// `E_{z∼N(0,1)}[g(z)]`
pub fn gaussian_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite(QUADRATURE_POINTS);
    nodes.iter().zip(&weights).map(|(&z, w)| w * g(z)).sum()
}
