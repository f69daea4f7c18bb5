use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Container;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
    Validation,
    Test,
}

impl Role {
    pub fn requires_labels(self) -> bool {
        !matches!(self, Role::Target)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Source => "source",
            Role::Target => "target",
            Role::Validation => "validation",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Role::Source),
            "target" => Ok(Role::Target),
            "validation" => Ok(Role::Validation),
            "test" => Ok(Role::Test),
            _ => Err(Error::invalid(format!("unknown role {s}"))),
        }
    }
}

/// Feature rows of one subject in one role. Target-role domains carry no
/// labels; every other role is fully labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    features: Matrix,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    subject_id: String,
    role: Role,
}

impl Domain {
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        n_classes: usize,
        subject_id: impl Into<String>,
        role: Role,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        match (&labels, role.requires_labels()) {
            (None, true) => {
                return Err(Error::Data(format!(
                    "{role} domain of subject {subject_id} needs labels"
                )))
            }
            (Some(_), false) => {
                return Err(Error::Data(format!(
                    "target domain of subject {subject_id} must be unlabeled"
                )))
            }
            _ => {}
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Data(format!("{} labels for {} rows", l.len(), features.rows())));
            }
            if let Some((i, &bad)) = l.iter().enumerate().find(|(_, &c)| c >= n_classes) {
                return Err(Error::Data(format!(
                    "row {i}: label {bad} outside vocabulary of {n_classes} classes"
                )));
            }
        }
        if !features.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Data(format!("non-finite features in subject {subject_id}")));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            subject_id,
            role,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same rows with labels stripped, for use as an adaptation target.
    pub fn as_target(&self) -> Domain {
        Domain {
            features: self.features.clone(),
            labels: None,
            n_classes: self.n_classes,
            subject_id: self.subject_id.clone(),
            role: Role::Target,
        }
    }

    /// Relabels a labeled domain's role (for example test rows reused as a
    /// supervised training source).
    pub fn with_role(&self, role: Role) -> Result<Domain> {
        Domain::new(
            self.features.clone(),
            self.labels.clone(),
            self.n_classes,
            self.subject_id.clone(),
            role,
        )
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new()
            .with_meta("subject_id", self.subject_id.clone())
            .with_meta("role", self.role.to_string())
            .with_meta("n_classes", self.n_classes.to_string());
        c.push(
            "features",
            vec![self.features.rows(), self.features.cols()],
            self.features.data().to_vec(),
        );
        if let Some(l) = &self.labels {
            c.push("labels", vec![l.len()], l.iter().map(|&v| v as f64).collect());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = |k: &str| {
            c.meta
                .get(k)
                .ok_or_else(|| Error::Format(format!("missing metadata {k}")))
        };
        let role: Role = meta("role")?.parse()?;
        let n_classes: usize = meta("n_classes")?
            .parse()
            .map_err(|_| Error::Format("bad n_classes".into()))?;
        let (shape, data) = c
            .record("features")
            .ok_or_else(|| Error::Format("missing features".into()))?;
        if shape.len() != 2 {
            return Err(Error::Format(format!("features shape {shape:?}")));
        }
        let features = Matrix::new(shape[0], shape[1], data.to_vec())?;
        let labels = c.record("labels").map(|(_, l)| l.iter().map(|&v| v as usize).collect());
        Domain::new(features, labels, n_classes, meta("subject_id")?.clone(), role)
    }
}
