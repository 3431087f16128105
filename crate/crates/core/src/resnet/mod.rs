//! The three-layer residual learner, its exact gradients, the SGD trainers
//! and activation-coupling diagnostics.

mod coupling;
mod model;
mod regime;
mod train;

pub use coupling::{coupling_diagnostics, CouplingReport};
pub use model::{Forward, Gradients, InitStyle, ResNetModel};
pub use regime::RegimeParams;
pub use train::{
    sgd_train, DataSource, Diagnostics, EvalPlan, Layer, LrDrop, ParamGroup, Rate, RunRecord, TestEval, TrainConfig,
    TrainMode, Trainable, TrainableSet,
};

pub use crate::risk::{population_risk, EvalMode};

use crate::linalg::Matrix;
use crate::risk::Predictor;

impl Predictor for ResNetModel {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn output_dim(&self) -> usize {
        self.k
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward_unchecked(x).out
    }
}

impl Trainable for ResNetModel {
    fn param_groups(&self) -> Vec<ParamGroup> {
        vec![
            ParamGroup {
                name: "W",
                rows: self.m,
                cols: self.d + 1,
                rate: Rate::W,
                layer: Layer::Hidden,
            },
            ParamGroup {
                name: "V",
                rows: self.m,
                cols: self.k + 1,
                rate: Rate::V,
                layer: Layer::Hidden,
            },
            ParamGroup {
                name: "A",
                rows: self.k,
                cols: self.m,
                rate: Rate::W,
                layer: Layer::Output,
            },
        ]
    }

    fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, grads: &mut [Matrix]) -> f64 {
        let fwd = self.forward_unchecked(x);
        let residual: Vec<f64> = fwd.out.iter().zip(y).map(|(o, t)| o - t).collect();
        let [gw, gv, ga] = grads else {
            panic!("resnet expects three gradient buffers");
        };
        self.backprop_parts(x, &fwd, &residual, scale, gw, gv, ga);
        0.5 * residual.iter().map(|r| r * r).sum::<f64>()
    }

    /// Decay acts on the effective weights `W0+W`, `V0+V` and `A`.
    fn add_weight_decay(&self, group: usize, wd: f64, grad: &mut Matrix) {
        let parts: [&Matrix; 2] = match group {
            0 => [&self.w0, &self.w],
            1 => [&self.v0, &self.v],
            _ => [&self.a, &self.a],
        };
        let g = grad.as_mut_slice();
        if group == 2 {
            for (gi, a) in g.iter_mut().zip(parts[0].as_slice()) {
                *gi += wd * a;
            }
        } else {
            for ((gi, b), d) in g.iter_mut().zip(parts[0].as_slice()).zip(parts[1].as_slice()) {
                *gi += wd * (b + d);
            }
        }
    }

    fn descend(&mut self, group: usize, lr: f64, dir: &Matrix) {
        let target = match group {
            0 => &mut self.w,
            1 => &mut self.v,
            _ => &mut self.a,
        };
        for (t, g) in target.as_mut_slice().iter_mut().zip(dir.as_slice()) {
            *t -= lr * g;
        }
    }

    fn diagnostics(&self, probe: Option<&[f64]>) -> Diagnostics {
        let (flips1, flips2) = probe
            .and_then(|x| coupling_diagnostics(self, x).ok())
            .map_or((0, 0), |r| (r.flips1, r.flips2));
        Diagnostics {
            frob_w: self.w.frobenius_norm(),
            frob_v: self.v.frobenius_norm(),
            flips1,
            flips2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{benchmark_instance, parity_instance, DataSpec, Scaling};
    use crate::linalg::gaussian_matrix;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn perturbed(seed: u64, d: usize, k: usize, m: usize) -> ResNetModel {
        let mut rng = RngStream::new(seed, 7);
        let mut model = ResNetModel::init(d, k, m, 1.0, 1.0, &mut rng, InitStyle::Theory).unwrap();
        model.w = gaussian_matrix(&mut rng, m, d + 1, 0.2);
        model.v = gaussian_matrix(&mut rng, m, k + 1, 0.2);
        model
    }

    fn objective(model: &ResNetModel, x: &[f64], y: &[f64]) -> f64 {
        0.5 * model
            .predict(x)
            .unwrap()
            .iter()
            .zip(y)
            .map(|(o, t)| (o - t).powi(2))
            .sum::<f64>()
    }

    /// Relative central-difference error of every W, V and A coordinate.
    fn max_fd_error(model: &ResNetModel, x: &[f64], y: &[f64]) -> f64 {
        let (g, _) = model.gradient(x, y).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for which in 0..3 {
            let len = [g.w.as_slice().len(), g.v.as_slice().len(), g.a.as_slice().len()][which];
            for idx in 0..len {
                let mut plus = model.clone();
                let mut minus = model.clone();
                let (p, mn, analytic) = match which {
                    0 => (&mut plus.w, &mut minus.w, g.w.as_slice()[idx]),
                    1 => (&mut plus.v, &mut minus.v, g.v.as_slice()[idx]),
                    _ => (&mut plus.a, &mut minus.a, g.a.as_slice()[idx]),
                };
                p.as_mut_slice()[idx] += h;
                mn.as_mut_slice()[idx] -= h;
                let numeric = (objective(&plus, x, y) - objective(&minus, x, y)) / (2.0 * h);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }

    fn far_from_kinks(model: &ResNetModel, x: &[f64], margin: f64) -> bool {
        let fwd = model.forward(x).unwrap();
        fwd.h1.iter().chain(&fwd.h2).all(|z| z.abs() > margin)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (d, k, m) = (8, 3, 32);
        let model = perturbed(11, d, k, m);
        let mut rng = RngStream::new(12, 0);
        let x = loop {
            let x: Vec<f64> = (0..d).map(|_| rng.normal() / (d as f64).sqrt()).collect();
            if far_from_kinks(&model, &x, 1e-3) {
                break x;
            }
        };
        let y: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
        let err = max_fd_error(&model, &x, &y);
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn zero_second_layer_reduces_to_two_layer_gradient() {
        let (d, k, m) = (5, 2, 12);
        let mut rng = RngStream::new(3, 0);
        let mut model = ResNetModel::init(d, k, m, 1.0, 0.0, &mut rng, InitStyle::Theory).unwrap();
        model.w = gaussian_matrix(&mut rng, m, d + 1, 0.3);
        let x = [0.3, -0.1, 0.2, 0.5, -0.4];
        let y = [0.7, -0.2];
        let (g, _) = model.gradient(&x, &y).unwrap();

        // With V0 = V = 0 the residual branch outputs zero and sends nothing
        // back into out1, so ∂W is the plain two-layer gradient.
        let fwd = model.forward(&x).unwrap();
        let resid: Vec<f64> = fwd.out.iter().zip(&y).map(|(o, t)| o - t).collect();
        let at_r = model.a.matvec_t(&resid);
        for i in 0..m {
            let pre: f64 = (0..d).map(|j| model.w0[(i, j)] * x[j]).sum::<f64>() + model.w0[(i, d)] + {
                (0..d).map(|j| model.w[(i, j)] * x[j]).sum::<f64>() + model.w[(i, d)]
            };
            let delta = if pre >= 0.0 { at_r[i] } else { 0.0 };
            for j in 0..d {
                assert!((g.w[(i, j)] - delta * x[j]).abs() < 1e-12);
            }
            assert!((g.w[(i, d)] - delta).abs() < 1e-12);
            assert!((g.v[(i, k)] - at_r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn trainer_leaves_initialization_untouched() {
        let h = parity_instance(6, 6, 2, 0.3, &[0, 1]).unwrap();
        let spec = DataSpec::uniform(6, Scaling::UnitSphere);
        let mut model = ResNetModel::init_theory_defaults(6, 2, 16, &mut RngStream::new(0, 0)).unwrap();
        let before = model.clone();
        let source = DataSource::Fresh {
            spec: &spec,
            target: &h,
            epoch_size: 0,
        };
        sgd_train(
            &mut model,
            &source,
            &TrainConfig::theory(0.05, 0.01, 50),
            &EvalPlan::default(),
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        let bytes = |m: &crate::linalg::Matrix| m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&model.a), bytes(&before.a));
        assert_eq!(bytes(&model.w0), bytes(&before.w0));
        assert_eq!(bytes(&model.v0), bytes(&before.v0));
        assert_ne!(model.w, before.w);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let h = parity_instance(6, 6, 2, 0.3, &[0, 1]).unwrap();
        let spec = DataSpec::uniform(6, Scaling::UnitSphere);
        let mut model = ResNetModel::init_theory_defaults(6, 2, 16, &mut RngStream::new(0, 0)).unwrap();
        let before = model.clone();
        let source = DataSource::Fresh {
            spec: &spec,
            target: &h,
            epoch_size: 0,
        };
        sgd_train(
            &mut model,
            &source,
            &TrainConfig::theory(0.0, 0.0, 20),
            &EvalPlan::default(),
            &mut RngStream::new(1, 0),
        )
        .unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn single_theory_step_unrolls() {
        let h = parity_instance(6, 6, 2, 0.3, &[0, 1]).unwrap();
        let spec = DataSpec::uniform(6, Scaling::UnitSphere);
        let init = ResNetModel::init_theory_defaults(6, 2, 16, &mut RngStream::new(0, 0)).unwrap();
        let source = DataSource::Fresh {
            spec: &spec,
            target: &h,
            epoch_size: 0,
        };
        let step = |c: f64| {
            let mut model = init.clone();
            sgd_train(
                &mut model,
                &source,
                &TrainConfig::theory(0.1 * c, 0.02 * c, 1),
                &EvalPlan::default(),
                &mut RngStream::new(5, 0),
            )
            .unwrap();
            model
        };
        let mut rng = RngStream::new(5, 0);
        let x = spec.sample_x(&mut rng).unwrap();
        let y = h.eval(&x).unwrap();
        let (g, _) = init.gradient(&x, &y).unwrap();
        let one = step(1.0);
        for (w, gw) in one.w.as_slice().iter().zip(g.w.as_slice()) {
            assert!((w + 0.1 * gw).abs() < 1e-15);
        }
        for (v, gv) in one.v.as_slice().iter().zip(g.v.as_slice()) {
            assert!((v + 0.02 * gv).abs() < 1e-15);
        }
        let three = step(3.0);
        for (a, b) in three.w.as_slice().iter().zip(one.w.as_slice()) {
            assert!((a - 3.0 * b).abs() <= 1e-14 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn zero_model_risk_on_benchmark_instance() {
        // Distinct parity characters are orthonormal on the ±1 cube, so the
        // zero predictor's risk is k(β² + α²). Checked on an 8-dimensional
        // analogue by enumeration, and on the full instance by sampling.
        let h = parity_instance(8, 8, 2, 0.3, &[1, 5]).unwrap();
        let spec = DataSpec::uniform(8, Scaling::UnitSphere);
        let zero = ResNetModel::init(8, 2, 4, 0.0, 0.0, &mut RngStream::new(0, 0), InitStyle::Theory).unwrap();
        let risk = population_risk(&zero, &h, &spec, EvalMode::ExactEnumeration).unwrap();
        // Here each F_j = √(d/k) x_j has second moment 1/k, the composite part 1/k.
        assert!((risk - (1.0 + 0.09)).abs() < 1e-12, "{risk}");

        let h = benchmark_instance(0.3).unwrap();
        let spec = DataSpec::uniform(30, Scaling::Unscaled);
        let zero = ResNetModel::init(30, 15, 15, 0.0, 0.0, &mut RngStream::new(0, 0), InitStyle::Theory).unwrap();
        let n = 20_000;
        let risk = population_risk(&zero, &h, &spec, EvalMode::MonteCarlo { samples: n, seed: 1 }).unwrap();
        // Per-point error is 16.35 + 0.6·Σ_r F_r G_r, a sum of 15 distinct characters.
        let se = (15.0f64 * 0.36 / n as f64).sqrt();
        assert!((risk - 15.0 * 1.09).abs() < 4.0 * se, "{risk}");
    }

    #[test]
    fn exact_and_sampled_risk_agree() {
        let h = parity_instance(12, 12, 2, 0.3, &[2, 9]).unwrap();
        let spec = DataSpec::uniform(12, Scaling::UnitSphere);
        let model = perturbed(2, 12, 2, 20);
        let exact = population_risk(&model, &h, &spec, EvalMode::ExactEnumeration).unwrap();
        let n = 100_000;
        let mc = population_risk(&model, &h, &spec, EvalMode::MonteCarlo { samples: n, seed: 8 }).unwrap();
        let second = population_risk(&model, &h, &spec, EvalMode::MonteCarlo { samples: n, seed: 9 }).unwrap();
        // Standard error estimated from the spread of an independent estimate pair.
        let points = spec.enumerate().unwrap();
        let errs: Vec<f64> = points
            .iter()
            .map(|x| {
                let y = h.eval(x).unwrap();
                model
                    .predict(x)
                    .unwrap()
                    .iter()
                    .zip(&y)
                    .map(|(o, t)| (o - t).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let var = errs.iter().map(|e| (e - exact).powi(2)).sum::<f64>() / errs.len() as f64;
        let se = (var / n as f64).sqrt();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
        assert!((second - exact).abs() < 3.0 * se);
    }

    #[test]
    fn practice_training_reduces_risk() {
        let h = parity_instance(6, 6, 2, 0.3, &[0, 3]).unwrap();
        let spec = DataSpec::uniform(6, Scaling::UnitSphere);
        let data = crate::concept::sample_dataset(&spec, &h, 200, &mut RngStream::new(0, 0)).unwrap();
        let mut model = ResNetModel::init(
            6,
            2,
            32,
            1.0,
            1.0,
            &mut RngStream::new(1, 0),
            InitStyle::Practice { mean_one: false },
        )
        .unwrap();
        let mut cfg = TrainConfig::practice(0.05, 0.0);
        cfg.steps = 30;
        cfg.eval_every = 10;
        let records = sgd_train(
            &mut model,
            &DataSource::Fixed(&data),
            &cfg,
            &EvalPlan::default(),
            &mut RngStream::new(2, 0),
        )
        .unwrap();
        assert_eq!(
            records.iter().map(|r| r.step_or_epoch).collect::<Vec<_>>(),
            vec![0, 10, 20, 30]
        );
        assert!(records.last().unwrap().train_risk < 0.5 * records[0].train_risk);
    }

    #[test]
    fn divergence_is_reported() {
        let h = parity_instance(6, 6, 2, 0.3, &[0, 3]).unwrap();
        let spec = DataSpec::uniform(6, Scaling::Unscaled);
        let data = crate::concept::sample_dataset(&spec, &h, 100, &mut RngStream::new(0, 0)).unwrap();
        let mut model = ResNetModel::init(
            6,
            2,
            32,
            1.0,
            1.0,
            &mut RngStream::new(1, 0),
            InitStyle::Practice { mean_one: false },
        )
        .unwrap();
        let mut cfg = TrainConfig::practice(1e3, 0.0);
        cfg.steps = 50;
        let err = sgd_train(
            &mut model,
            &DataSource::Fixed(&data),
            &cfg,
            &EvalPlan::default(),
            &mut RngStream::new(2, 0),
        );
        assert!(matches!(err, Err(crate::Error::Diverged { .. })), "{err:?}");
    }

    #[test]
    fn theory_mode_rejects_practice_settings() {
        let mut cfg = TrainConfig::theory(0.1, 0.1, 10);
        cfg.momentum = 0.9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn run_record_csv_header() {
        let rec = RunRecord {
            step_or_epoch: 3,
            train_risk: 0.5,
            test_risk: None,
            frob_w: 1.0,
            frob_v: 2.0,
            flips1: 4,
            flips2: 5,
            lr_w: 0.1,
            lr_v: 0.01,
        };
        let mut buf = Vec::new();
        RunRecord::write_csv(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step_or_epoch,train_risk,test_risk,frob_W,frob_V,flips1,flips2,lr_w,lr_v\n3,0.5,,1,2,4,5,0.1,0.01\n"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn positive_homogeneity_without_biases(seed in 0u64..1000, c in 0.1f64..10.0) {
            let mut model = perturbed(seed, 4, 2, 10);
            for mat in [&mut model.w0, &mut model.w] {
                for i in 0..10 { mat[(i, 4)] = 0.0; }
            }
            for mat in [&mut model.v0, &mut model.v] {
                for i in 0..10 { mat[(i, 2)] = 0.0; }
            }
            let x = [0.3, -0.7, 0.2, 0.9];
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let a = model.predict(&x).unwrap();
            let b = model.predict(&cx).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((c * p - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }
    }
}
