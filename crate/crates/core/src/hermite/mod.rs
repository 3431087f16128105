//! Hermite polynomials, the indicator-to-function fit and the existential
//! weight construction built from it.

pub mod existential;
pub mod fit;
pub mod poly;

pub use existential::{
    construct_existential_weights, existential_init, existential_output, unit_sphere_points, verify_existential,
};
pub use fit::{fit_indicator_function, p_prime, verify_fit, FitCheck, HermiteFit, HermiteTerm};
pub use poly::{
    double_factorial, gauss_hermite, gauss_legendre, gaussian_expectation, half_line_expectation, hermite_derivative,
    hermite_poly, truncated_hermite, truncation_bound, MAX_HERMITE_DEGREE,
};
