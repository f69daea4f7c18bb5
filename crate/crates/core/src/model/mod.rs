//! Generator, discriminator and classifier networks and their losses.

mod config;
pub mod gradcheck;
mod layers;
pub mod losses;
mod nets;

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::tensor::{read_container, write_container, Container, ParamSet};

pub use config::SaganConfig;
pub use layers::{Forward, NetMode};
pub use nets::{ClassifierNet, DiscriminatorNet, GeneratorNet, Network};

const MODEL_KIND: &str = "sagan-model";
const CLASSIFIER_KIND: &str = "classifier";

/// The three networks trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct SaganModel {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub classifier: ClassifierNet,
    pub config: SaganConfig,
}

impl SaganModel {
    pub fn new(dim: usize, n_classes: usize, config: &SaganConfig) -> Result<Self> {
        config.validate()?;
        let s = |name| derive_seed(config.seed, &[tag("init"), tag(name)]);
        Ok(Self {
            generator: GeneratorNet::new(dim, config, s("g"))?,
            discriminator: DiscriminatorNet::new(dim, config, s("d"))?,
            classifier: ClassifierNet::new(dim, n_classes, config, s("c"))?,
            config: config.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.classifier.dim()
    }

    pub fn to_container(&self) -> Result<Container> {
        let cfg = serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        let mut c = Container::new()
            .with_meta("kind", MODEL_KIND)
            .with_meta("dim", self.dim().to_string())
            .with_meta("n_classes", self.classifier.n_classes().to_string())
            .with_meta("config", cfg);
        for (prefix, p) in self.parts() {
            c = c.with_meta(format!("{prefix}step"), p.step().to_string());
            for (n, s, d) in p.to_records(prefix) {
                c.push(n, s, d);
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        expect_kind(c, MODEL_KIND)?;
        let config: SaganConfig =
            serde_json::from_str(meta(c, "config")?).map_err(|e| Error::Format(format!("config: {e}")))?;
        let mut model = Self::new(meta_usize(c, "dim")?, meta_usize(c, "n_classes")?, &config)?;
        for (prefix, p) in [
            ("generator/", model.generator.params_mut()),
            ("discriminator/", model.discriminator.params_mut()),
            ("classifier/", model.classifier.params_mut()),
        ] {
            load_params(p, c, prefix)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_container(path, &self.to_container()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&read_container(path)?)
    }

    fn parts(&self) -> [(&'static str, &ParamSet); 3] {
        [
            ("generator/", self.generator.params()),
            ("discriminator/", self.discriminator.params()),
            ("classifier/", self.classifier.params()),
        ]
    }
}

impl ClassifierNet {
    /// Standalone checkpoint of a classifier, recording the architecture
    /// fields needed to rebuild it.
    pub fn to_container(&self, config: &SaganConfig) -> Result<Container> {
        let cfg = serde_json::to_string(config).map_err(|e| Error::Format(e.to_string()))?;
        let mut c = Container::new()
            .with_meta("kind", CLASSIFIER_KIND)
            .with_meta("dim", self.dim().to_string())
            .with_meta("n_classes", self.n_classes().to_string())
            .with_meta("config", cfg)
            .with_meta("classifier/step", self.params().step().to_string());
        for (n, s, d) in self.params().to_records("classifier/") {
            c.push(n, s, d);
        }
        Ok(c)
    }

    /// Accepts both classifier and full-model checkpoints.
    pub fn from_container(c: &Container) -> Result<(Self, SaganConfig)> {
        let kind = meta(c, "kind")?;
        if kind != CLASSIFIER_KIND && kind != MODEL_KIND {
            return Err(Error::Format(format!("checkpoint kind {kind} holds no classifier")));
        }
        let config: SaganConfig =
            serde_json::from_str(meta(c, "config")?).map_err(|e| Error::Format(format!("config: {e}")))?;
        let mut net = ClassifierNet::new(meta_usize(c, "dim")?, meta_usize(c, "n_classes")?, &config, 0)?;
        load_params(net.params_mut(), c, "classifier/")?;
        Ok((net, config))
    }
}

fn load_params(p: &mut ParamSet, c: &Container, prefix: &str) -> Result<()> {
    p.load_records(c, prefix)?;
    let step = meta(c, &format!("{prefix}step"))?
        .parse()
        .map_err(|_| Error::Format(format!("bad {prefix}step")))?;
    p.set_step(step);
    Ok(())
}

fn meta<'a>(c: &'a Container, key: &str) -> Result<&'a str> {
    c.meta
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks meta key {key}")))
}

fn meta_usize(c: &Container, key: &str) -> Result<usize> {
    meta(c, key)?
        .parse()
        .map_err(|_| Error::Format(format!("meta key {key} is not an integer")))
}

fn expect_kind(c: &Container, kind: &str) -> Result<()> {
    let got = meta(c, "kind")?;
    if got != kind {
        return Err(Error::Format(format!("expected a {kind} checkpoint, found {got}")));
    }
    Ok(())
}
