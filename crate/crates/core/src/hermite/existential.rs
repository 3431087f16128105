use rayon::prelude::*;

use super::fit::{fit_indicator_function, HermiteFit};
use crate::concept::{NetForm, TwoLayerSmoothNet};
use crate::error::{Error, Result};
use crate::linalg::{dot, gaussian_matrix, norm, Matrix};
use crate::rng::RngStream;

/// Random `W0 ∈ ℝ^{m×(d+1)}` with rows `N(0, I/m)` and `A ∈ ℝ^{k×m}` with
/// `N(0, 1)` entries.
pub fn existential_init(d: usize, k: usize, m: usize, rng: &mut RngStream) -> (Matrix, Matrix) {
    let w0 = gaussian_matrix(rng, m, d + 1, 1.0 / (m as f64).sqrt());
    let a = gaussian_matrix(rng, k, m, 1.0);
    (w0, a)
}

fn check_shapes(net: &TwoLayerSmoothNet, w0: &Matrix, a: &Matrix) -> Result<()> {
    if net.form != NetForm::General {
        return Err(Error::InvalidInput(
            "the construction needs a net of the general form".into(),
        ));
    }
    let (m, cols) = w0.shape();
    if cols != net.input_dim + 1 || a.shape() != (net.output_dim, m) {
        return Err(Error::Shape(format!(
            "W0 is {m}x{cols} and A is {}x{} for a net {}→{}",
            a.rows(),
            a.cols(),
            net.input_dim,
            net.output_dim
        )));
    }
    Ok(())
}

/// `w⋆_j = (1/m) Σ_r Σ_i a_{r,j} a*_{r,i} h^{(r,i)}(√m⟨w_j^{(0)}, w*_{1,i}⟩) w*_{2,i}`
pub fn construct_existential_weights(net: &TwoLayerSmoothNet, w0: &Matrix, a: &Matrix, eps: f64) -> Result<Matrix> {
    net.validate()?;
    check_shapes(net, w0, a)?;
    let fits: Vec<Vec<HermiteFit>> = net
        .units
        .iter()
        .map(|row| row.iter().map(|u| fit_indicator_function(&u.activation, eps)).collect())
        .collect::<Result<_>>()?;
    let (m, cols) = w0.shape();
    let root_m = (m as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut w = vec![0.0; cols];
            for (r, row) in net.units.iter().enumerate() {
                for (u, fit) in row.iter().zip(&fits[r]) {
                    if u.a == 0.0 {
                        continue;
                    }
                    let w2 = u.w2.as_deref().expect("validated general unit");
                    let c = a[(r, j)] * u.a * fit.eval(root_m * dot(w0.row(j), &u.w1)) / m as f64;
                    crate::linalg::axpy(c, w2, &mut w);
                }
            }
            w
        })
        .collect();
    let mut out = Matrix::zeros(m, cols);
    for (j, row) in rows.into_iter().enumerate() {
        out.row_mut(j).copy_from_slice(&row);
    }
    Ok(out)
}

/// `A D_{W0} W⋆ (x,1)`, where `D_{W0}` keeps the units with `⟨w_j^{(0)}, (x,1)⟩ ≥ 0`.
pub fn existential_output(w_star: &Matrix, w0: &Matrix, a: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut xt = x.to_vec();
    xt.push(1.0);
    let mut out = vec![0.0; a.rows()];
    for j in 0..w0.rows() {
        if dot(w0.row(j), &xt) >= 0.0 {
            let v = dot(w_star.row(j), &xt);
            for (r, o) in out.iter_mut().enumerate() {
                *o += a[(r, j)] * v;
            }
        }
    }
    out
}

/// `max_x ‖A D_{W0} W⋆(x,1) − Φ(x)‖ / ‖(x,1)‖` over the test points.
pub fn verify_existential(
    w_star: &Matrix,
    net: &TwoLayerSmoothNet,
    w0: &Matrix,
    a: &Matrix,
    points: &[Vec<f64>],
) -> Result<f64> {
    check_shapes(net, w0, a)?;
    if w_star.shape() != w0.shape() {
        return Err(Error::Shape("W⋆ and W0 differ in shape".into()));
    }
    let errors = points
        .par_iter()
        .map(|x| {
            let target = net.eval(x)?;
            let got = existential_output(w_star, w0, a, x);
            let diff: Vec<f64> = got.iter().zip(&target).map(|(g, t)| g - t).collect();
            Ok(norm(&diff) / (1.0 + dot(x, x)).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

/// Uniform draws from the unit sphere in `ℝ^d`.
pub fn unit_sphere_points(d: usize, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{SmoothActivation, SmoothUnit};

    fn linear_net(d: usize, a_star: f64, rng: &mut RngStream) -> TwoLayerSmoothNet {
        let dirs = unit_sphere_points(d + 1, 2, rng);
        let unit = SmoothUnit {
            a: a_star,
            w1: dirs[0].clone(),
            w2: Some(dirs[1].clone()),
            activation: SmoothActivation::identity(),
        };
        TwoLayerSmoothNet::new(d, 1, NetForm::General, vec![vec![unit]]).unwrap()
    }

    #[test]
    fn zero_net_gives_zero_weights() {
        let mut rng = RngStream::new(1, 0);
        let net = linear_net(4, 0.0, &mut rng);
        let (w0, a) = existential_init(4, 1, 50, &mut rng);
        let w = construct_existential_weights(&net, &w0, &a, 0.1).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 0.0));
        let pts = unit_sphere_points(4, 5, &mut rng);
        assert_eq!(verify_existential(&w, &net, &w0, &a, &pts).unwrap(), 0.0);
    }

    #[test]
    fn single_linear_unit_unrolls() {
        let mut rng = RngStream::new(2, 0);
        let net = linear_net(3, 0.8, &mut rng);
        let m = 40;
        let (w0, a) = existential_init(3, 1, m, &mut rng);
        let w = construct_existential_weights(&net, &w0, &a, 0.1).unwrap();
        let u = &net.units[0][0];
        let w2 = u.w2.as_ref().unwrap();
        let root = (2.0 * std::f64::consts::PI).sqrt();
        for j in 0..m {
            let z = (m as f64).sqrt() * dot(w0.row(j), &u.w1);
            let coeff = a[(0, j)] * 0.8 * root * z / m as f64;
            for c in 0..4 {
                assert!((w[(j, c)] - coeff * w2[c]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn wide_construction_approximates_a_linear_target() {
        let mut rng = RngStream::new(3, 0);
        let net = linear_net(8, 1.0, &mut rng);
        let (w0, a) = existential_init(8, 1, 100_000, &mut rng);
        let w = construct_existential_weights(&net, &w0, &a, 0.1).unwrap();
        let pts = unit_sphere_points(8, 50, &mut rng);
        let err = verify_existential(&w, &net, &w0, &a, &pts).unwrap();
        assert!(err <= 0.1, "{err}");
    }

    #[test]
    fn rejects_simple_form_and_even_terms() {
        let mut rng = RngStream::new(4, 0);
        let (w0, a) = existential_init(2, 1, 10, &mut rng);
        let simple = TwoLayerSmoothNet::zero(2, 1, NetForm::Simple);
        assert!(construct_existential_weights(&simple, &w0, &a, 0.1).is_err());
        let mut net = linear_net(2, 1.0, &mut rng);
        net.units[0][0].activation = SmoothActivation::polynomial(vec![0.0, 1.0, 1.0]);
        assert!(construct_existential_weights(&net, &w0, &a, 0.1).is_err());
    }
}
