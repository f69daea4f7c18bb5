use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::losses::{classifier_loss, discriminator_loss, generator_loss, one_hot};
use crate::model::{NetMode, Network, SaganModel};
use crate::tensor::{Graph, Optimizer, Var};

/// One minibatch: labeled source windows and unlabeled target windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x_s: Matrix,
    pub y_s: Vec<usize>,
    pub x_t: Matrix,
}

/// Loss values observed in one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub discriminator: f64,
    pub classifier: f64,
    pub generator_adversarial: f64,
    pub generator_classification: f64,
    pub generator_total: f64,
}

impl StepLosses {
    pub fn max_abs(&self) -> f64 {
        [
            self.discriminator,
            self.classifier,
            self.generator_adversarial,
            self.generator_classification,
            self.generator_total,
        ]
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Model plus one optimizer per network.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: SaganModel,
    opt_d: Optimizer,
    opt_c: Optimizer,
    opt_g: Optimizer,
}

struct Digests {
    g: String,
    d: String,
    c: String,
}

impl Trainer {
    pub fn new(model: SaganModel) -> Result<Self> {
        let cfg = &model.config;
        Ok(Self {
            opt_d: Optimizer::new(cfg.d_optimizer)?,
            opt_c: Optimizer::new(cfg.c_optimizer)?,
            opt_g: Optimizer::new(cfg.g_optimizer)?,
            model,
        })
    }

    pub fn into_model(self) -> SaganModel {
        self.model
    }

    fn digests(&self) -> Digests {
        Digests {
            g: self.model.generator.params().digest(),
            d: self.model.discriminator.params().digest(),
            c: self.model.classifier.params().digest(),
        }
    }

    fn ensure_frozen(&self, updated: &'static str, before: &Digests) -> Result<()> {
        let now = self.digests();
        for (name, a, b) in [
            ("generator", &before.g, &now.g),
            ("discriminator", &before.d, &now.d),
            ("classifier", &before.c, &now.c),
        ] {
            if name != updated && a != b {
                return Err(Error::FreezeViolation { updated, changed: name });
            }
        }
        Ok(())
    }

    /// Discriminator, classifier and generator updates in that order, each
    /// with the other two networks frozen. `noise` is added to the source
    /// batch before it enters the generator and is shared by all three
    /// updates.
    pub fn train_step(&mut self, batch: &Batch, noise: &Matrix, batch_index: usize) -> Result<StepLosses> {
        let x_in = self.noised(batch, noise)?;
        let discriminator = self.discriminator_step(batch, &x_in, batch_index)?;
        let classifier = self.classifier_step(batch, &x_in, batch_index)?;
        let (generator_total, generator_adversarial, generator_classification) =
            self.generator_step(batch, &x_in, batch_index)?;
        Ok(StepLosses {
            discriminator,
            classifier,
            generator_adversarial,
            generator_classification,
            generator_total,
        })
    }

    /// Validates batch shapes and returns `x_s + noise`.
    pub fn noised(&self, batch: &Batch, noise: &Matrix) -> Result<Matrix> {
        let m = batch.x_s.rows();
        let k = self.model.dim();
        if batch.y_s.len() != m || batch.x_t.rows() != m {
            return Err(Error::shape(
                "train_step",
                "source, label and target batch sizes differ",
            ));
        }
        if batch.x_s.cols() != k || batch.x_t.cols() != k || noise.cols() != k || noise.rows() != m {
            return Err(Error::shape("train_step", format!("batch features must be [{m}, {k}]")));
        }
        Matrix::new(
            m,
            k,
            batch.x_s.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
        )
    }

    /// One discriminator update against real target windows and `G(x_in)`.
    pub fn discriminator_step(&mut self, batch: &Batch, x_in: &Matrix, batch_index: usize) -> Result<f64> {
        let before = self.digests();
        let mut g = Graph::new();
        let gb = self.model.generator.params().bind(&mut g, false);
        let db = self.model.discriminator.params().bind(&mut g, true);
        let xin = input(&mut g, x_in);
        let fake = self.model.generator.forward(&mut g, &gb, xin, NetMode::Train)?;
        let xt = input(&mut g, &batch.x_t);
        let parts = discriminator_loss(&mut g, &self.model.discriminator, &db, xt, fake.out)?;
        let loss = finite(&g, parts.loss, "discriminator", batch_index)?;
        g.backward(parts.loss)?;
        let d = &mut self.model.discriminator;
        d.params_mut().accumulate_grads(&g, &db)?;
        self.opt_d.step(d.params_mut())?;
        d.absorb(&parts.stats)?;
        self.ensure_frozen("discriminator", &before)?;
        Ok(loss)
    }

    /// One classifier update on source windows and their generated images.
    pub fn classifier_step(&mut self, batch: &Batch, x_in: &Matrix, batch_index: usize) -> Result<f64> {
        let y = one_hot(&batch.y_s, self.model.classifier.n_classes())?;
        let before = self.digests();
        let mut g = Graph::new();
        let gb = self.model.generator.params().bind(&mut g, false);
        let cb = self.model.classifier.params().bind(&mut g, true);
        let xin = input(&mut g, x_in);
        let fake = self.model.generator.forward(&mut g, &gb, xin, NetMode::Train)?;
        let xs = input(&mut g, &batch.x_s);
        let parts = classifier_loss(&mut g, &self.model.classifier, &cb, xs, &y, fake.out)?;
        let loss = finite(&g, parts.loss, "classifier", batch_index)?;
        g.backward(parts.loss)?;
        let c = &mut self.model.classifier;
        c.params_mut().accumulate_grads(&g, &cb)?;
        self.opt_c.step(c.params_mut())?;
        c.absorb(&parts.stats)?;
        self.ensure_frozen("classifier", &before)?;
        Ok(loss)
    }

    /// One generator update; returns (total, adversarial, classification).
    pub fn generator_step(&mut self, batch: &Batch, x_in: &Matrix, batch_index: usize) -> Result<(f64, f64, f64)> {
        let y = one_hot(&batch.y_s, self.model.classifier.n_classes())?;
        let before = self.digests();
        let mut g = Graph::new();
        let gb = self.model.generator.params().bind(&mut g, true);
        let db = self.model.discriminator.params().bind(&mut g, false);
        let cb = self.model.classifier.params().bind(&mut g, false);
        let xin = input(&mut g, x_in);
        let cfg = &self.model.config;
        let l = generator_loss(
            &mut g,
            &self.model.generator,
            &gb,
            &self.model.discriminator,
            &db,
            &self.model.classifier,
            &cb,
            xin,
            &y,
            cfg.lambda_adv,
            cfg.lambda_cls,
        )?;
        let total = finite(&g, l.total, "generator", batch_index)?;
        let parts = (total, g.scalar_value(l.adversarial), g.scalar_value(l.classification));
        g.backward(l.total)?;
        let gen = &mut self.model.generator;
        gen.params_mut().accumulate_grads(&g, &gb)?;
        self.opt_g.step(gen.params_mut())?;
        gen.absorb(&l.stats)?;
        self.ensure_frozen("generator", &before)?;
        Ok(parts)
    }
}

fn input(g: &mut Graph, x: &Matrix) -> Var {
    g.leaf(vec![x.rows(), x.cols()], x.data().to_vec(), false)
}

fn finite(g: &Graph, v: Var, step: &'static str, batch: usize) -> Result<f64> {
    let x = g.scalar_value(v);
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { step, batch })
    }
}
