use serde::{Deserialize, Serialize};

use crate::concept::{DataSpec, Dataset, TargetFunction};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::risk::{empirical_risk, population_risk, EvalMode, Predictor};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// One fresh sample per step, plain SGD on the hidden layers.
    Theory,
    /// Epochs of shuffled minibatches with momentum and weight decay.
    Practice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainableSet {
    /// Every layer except the output layer.
    Hidden,
    All,
    /// The output layer only.
    Last,
}

/// Which learning rate a parameter group follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rate {
    W,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Hidden,
    Output,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub rate: Rate,
    pub layer: Layer,
}

impl ParamGroup {
    pub fn trained_under(&self, set: TrainableSet) -> bool {
        match set {
            TrainableSet::All => true,
            TrainableSet::Hidden => self.layer == Layer::Hidden,
            TrainableSet::Last => self.layer == Layer::Output,
        }
    }
}

/// Quantities recorded alongside the risks; zero when a model has no notion of them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub frob_w: f64,
    pub frob_v: f64,
    pub flips1: usize,
    pub flips2: usize,
}

/// A model the shared SGD loop can train.
pub trait Trainable: Predictor + Send {
    fn param_groups(&self) -> Vec<ParamGroup>;

    /// Adds `scale · ∇θ ½‖y − f(x)‖²` to `grads` (one matrix per group, in
    /// [`param_groups`](Self::param_groups) order) and returns `½‖y − f(x)‖²`.
    fn accumulate_gradient(&self, x: &[f64], y: &[f64], scale: f64, grads: &mut [Matrix]) -> f64;

    /// Adds `wd · θ` to `grad`, where `θ` is the weight decay acts on.
    fn add_weight_decay(&self, group: usize, wd: f64, grad: &mut Matrix);

    /// `θ ← θ − lr · dir`.
    fn descend(&mut self, group: usize, lr: f64, dir: &Matrix);

    fn diagnostics(&self, _probe: Option<&[f64]>) -> Diagnostics {
        Diagnostics::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrDrop {
    pub at: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr_w: f64,
    pub lr_v: f64,
    /// Steps in theory mode, epochs in practice mode.
    pub steps: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_drop: Option<LrDrop>,
    pub trainable: TrainableSet,
    /// Record cadence in steps (theory) or epochs (practice).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn theory(lr_w: f64, lr_v: f64, steps: usize) -> Self {
        Self {
            mode: TrainMode::Theory,
            lr_w,
            lr_v,
            steps,
            batch_size: 1,
            momentum: 0.0,
            weight_decay: 0.0,
            lr_drop: None,
            trainable: TrainableSet::Hidden,
            eval_every: steps.max(1),
        }
    }

    /// Momentum 0.9, batch 50, 800 epochs, learning rate divided by 10 at epoch 400.
    pub fn practice(lr: f64, weight_decay: f64) -> Self {
        Self {
            mode: TrainMode::Practice,
            lr_w: lr,
            lr_v: lr,
            steps: 800,
            batch_size: 50,
            momentum: 0.9,
            weight_decay,
            lr_drop: Some(LrDrop { at: 400, factor: 0.1 }),
            trainable: TrainableSet::Hidden,
            eval_every: 800,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_w >= 0.0 && self.lr_v >= 0.0) {
            return Err(Error::Config("learning rates must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch size and eval cadence must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "momentum must lie in [0,1) and weight decay be nonnegative".into(),
            ));
        }
        if self.mode == TrainMode::Theory
            && (self.batch_size != 1
                || self.momentum != 0.0
                || self.weight_decay != 0.0
                || self.trainable != TrainableSet::Hidden)
        {
            return Err(Error::Config(
                "theory mode requires batch 1, no momentum, no weight decay and hidden-only training".into(),
            ));
        }
        Ok(())
    }

    fn rates_at(&self, t: usize) -> (f64, f64) {
        match self.lr_drop {
            Some(drop) if t >= drop.at => (self.lr_w * drop.factor, self.lr_v * drop.factor),
            _ => (self.lr_w, self.lr_v),
        }
    }
}

pub enum DataSource<'a> {
    Fixed(&'a Dataset),
    /// Fresh draws; practice mode uses `epoch_size` of them per epoch.
    Fresh {
        spec: &'a DataSpec,
        target: &'a TargetFunction,
        epoch_size: usize,
    },
}

pub enum TestEval<'a> {
    None,
    Dataset(&'a Dataset),
    Population {
        target: &'a TargetFunction,
        spec: &'a DataSpec,
        mode: EvalMode,
    },
}

pub struct EvalPlan<'a> {
    pub test: TestEval<'a>,
    /// Input at which sign-flip counts are measured.
    pub probe: Option<Vec<f64>>,
}

impl Default for EvalPlan<'_> {
    fn default() -> Self {
        Self {
            test: TestEval::None,
            probe: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step_or_epoch: usize,
    pub train_risk: f64,
    pub test_risk: Option<f64>,
    pub frob_w: f64,
    pub frob_v: f64,
    pub flips1: usize,
    pub flips2: usize,
    pub lr_w: f64,
    pub lr_v: f64,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "step_or_epoch,train_risk,test_risk,frob_W,frob_V,flips1,flips2,lr_w,lr_v";

    pub fn csv_row(&self) -> String {
        let test = self.test_risk.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step_or_epoch,
            self.train_risk,
            test,
            self.frob_w,
            self.frob_v,
            self.flips1,
            self.flips2,
            self.lr_w,
            self.lr_v
        )
    }

    pub fn write_csv<W: std::io::Write>(records: &[RunRecord], mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

fn zero_grads(groups: &[ParamGroup]) -> Vec<Matrix> {
    groups.iter().map(|g| Matrix::zeros(g.rows, g.cols)).collect()
}

struct Recorder<'a, 'p> {
    source: &'a DataSource<'a>,
    plan: &'a EvalPlan<'p>,
    cfg: &'a TrainConfig,
}

impl Recorder<'_, '_> {
    fn record<M: Trainable>(&self, model: &M, t: usize, running: Option<f64>) -> Result<RunRecord> {
        let train_risk = match (self.source, running) {
            (DataSource::Fixed(data), _) => empirical_risk(model, data)?,
            (DataSource::Fresh { .. }, Some(r)) => r,
            (DataSource::Fresh { spec, target, .. }, None) => {
                population_risk(model, target, spec, EvalMode::MonteCarlo { samples: 1000, seed: 0 })?
            }
        };
        let test_risk = match &self.plan.test {
            TestEval::None => None,
            TestEval::Dataset(data) => Some(empirical_risk(model, data)?),
            TestEval::Population { target, spec, mode } => Some(population_risk(model, target, spec, *mode)?),
        };
        if !train_risk.is_finite() || test_risk.is_some_and(|r| !r.is_finite()) {
            return Err(Error::Diverged {
                step: t,
                loss: train_risk,
            });
        }
        let diag = model.diagnostics(self.plan.probe.as_deref());
        let (lr_w, lr_v) = self.cfg.rates_at(t);
        Ok(RunRecord {
            step_or_epoch: t,
            train_risk,
            test_risk,
            frob_w: diag.frob_w,
            frob_v: diag.frob_v,
            flips1: diag.flips1,
            flips2: diag.flips2,
            lr_w,
            lr_v,
        })
    }
}

/// Trains `model` in place and returns the records taken at time 0, every
/// `cfg.eval_every` steps or epochs, and at the end.
pub fn sgd_train<M: Trainable>(
    model: &mut M,
    source: &DataSource<'_>,
    cfg: &TrainConfig,
    plan: &EvalPlan<'_>,
    rng: &mut RngStream,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let (d, k) = (model.input_dim(), model.output_dim());
    match source {
        DataSource::Fixed(data) => {
            if data.is_empty() {
                return Err(Error::InvalidInput("empty training set".into()));
            }
            if data.input_dim() != d || data.output_dim() != k {
                return Err(Error::Shape("training data and model dimensions differ".into()));
            }
            if cfg.mode == TrainMode::Theory {
                return Err(Error::Config("theory mode needs a fresh-sample source".into()));
            }
        }
        DataSource::Fresh {
            spec,
            target,
            epoch_size,
        } => {
            spec.validate()?;
            if spec.d != d || target.d != d || target.k != k {
                return Err(Error::Shape("sampler and model dimensions differ".into()));
            }
            if cfg.mode == TrainMode::Practice && *epoch_size == 0 {
                return Err(Error::Config("fresh-sample epochs need a positive size".into()));
            }
        }
    }

    let groups = model.param_groups();
    let active: Vec<usize> = (0..groups.len())
        .filter(|&g| groups[g].trained_under(cfg.trainable))
        .collect();
    let mut grads = zero_grads(&groups);
    let mut velocity = zero_grads(&groups);
    let recorder = Recorder { source, plan, cfg };
    let mut records = vec![recorder.record(model, 0, None)?];

    let mut step = 0usize;
    let apply = |model: &mut M, grads: &mut [Matrix], velocity: &mut [Matrix], t: usize| {
        let (lr_w, lr_v) = cfg.rates_at(t);
        for &g in &active {
            if cfg.weight_decay > 0.0 {
                model.add_weight_decay(g, cfg.weight_decay, &mut grads[g]);
            }
            let lr = match groups[g].rate {
                Rate::W => lr_w,
                Rate::V => lr_v,
            };
            if cfg.momentum > 0.0 {
                velocity[g].scale(cfg.momentum);
                velocity[g].add_assign(&grads[g]);
                model.descend(g, lr, &velocity[g]);
            } else {
                model.descend(g, lr, &grads[g]);
            }
        }
    };

    match cfg.mode {
        TrainMode::Theory => {
            let DataSource::Fresh { spec, target, .. } = source else {
                unreachable!("checked above")
            };
            let mut running = 0.0;
            let mut seen = 0usize;
            for t in 1..=cfg.steps {
                let x = spec.sample_x(rng)?;
                let y = target.eval(&x)?;
                grads.iter_mut().for_each(|g| g.scale(0.0));
                let loss = model.accumulate_gradient(&x, &y, 1.0, &mut grads);
                if !loss.is_finite() {
                    return Err(Error::Diverged { step: t, loss });
                }
                running += 2.0 * loss;
                seen += 1;
                apply(model, &mut grads, &mut velocity, t - 1);
                if t % cfg.eval_every == 0 || t == cfg.steps {
                    records.push(recorder.record(model, t, Some(running / seen as f64))?);
                    running = 0.0;
                    seen = 0;
                }
            }
        }
        TrainMode::Practice => {
            let mut order: Vec<usize> = Vec::new();
            let mut fresh: Option<Dataset>;
            for epoch in 1..=cfg.steps {
                let data: &Dataset = match source {
                    DataSource::Fixed(data) => data,
                    DataSource::Fresh {
                        spec,
                        target,
                        epoch_size,
                    } => {
                        fresh = Some(crate::concept::sample_dataset(spec, target, *epoch_size, rng)?);
                        fresh.as_ref().expect("just set")
                    }
                };
                if order.len() != data.len() {
                    order = (0..data.len()).collect();
                }
                rng.shuffle(&mut order);
                let mut running = 0.0;
                for batch in order.chunks(cfg.batch_size) {
                    step += 1;
                    grads.iter_mut().for_each(|g| g.scale(0.0));
                    let scale = 1.0 / batch.len() as f64;
                    let mut loss = 0.0;
                    for &i in batch {
                        let (x, y) = data.sample(i);
                        loss += model.accumulate_gradient(x, y, scale, &mut grads);
                    }
                    if !loss.is_finite() {
                        return Err(Error::Diverged {
                            step,
                            loss: loss * scale,
                        });
                    }
                    running += 2.0 * loss;
                    apply(model, &mut grads, &mut velocity, epoch - 1);
                }
                if epoch % cfg.eval_every == 0 || epoch == cfg.steps {
                    records.push(recorder.record(model, epoch, Some(running / data.len() as f64))?);
                }
            }
        }
    }
    Ok(records)
}
