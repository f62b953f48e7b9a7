use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Component, EosError, Mixture};

const BUILTIN: &str = include_str!("../../data/components.json");

fn default_t_ref() -> f64 {
    298.15
}

fn default_p_ref() -> f64 {
    101325.0
}

/// Component property table plus interaction coefficients over the same ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDatabase {
    #[serde(rename = "t_ref_K", default = "default_t_ref")]
    pub t_ref: f64,
    #[serde(rename = "p_ref_Pa", default = "default_p_ref")]
    pub p_ref: f64,
    pub components: Vec<Component>,
    #[serde(default)]
    pub kij: Vec<Vec<f64>>,
}

impl ComponentDatabase {
    /// The data file compiled into the library.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("bundled component data is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, EosError> {
        let db: Self = serde_json::from_str(text)?;
        db.validate()?;
        Ok(db)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EosError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), EosError> {
        let n = self.components.len();
        if !self.kij.is_empty() && (self.kij.len() != n || self.kij.iter().any(|r| r.len() != n)) {
            return Err(EosError::InvalidKij(format!("expected a {n}x{n} matrix")));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn component(&self, name: &str) -> Result<&Component, EosError> {
        self.index_of(name).map(|i| &self.components[i]).ok_or_else(|| EosError::UnknownComponent(name.to_string()))
    }

    /// Builds a mixture of the named components, in the given order.
    pub fn mixture<S: AsRef<str>>(&self, names: &[S]) -> Result<Mixture, EosError> {
        let idx = names
            .iter()
            .map(|s| self.index_of(s.as_ref()).ok_or_else(|| EosError::UnknownComponent(s.as_ref().to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let components = idx.iter().map(|&i| self.components[i].clone()).collect();
        let kij = idx.iter().map(|&i| idx.iter().map(|&j| self.kij.get(i).map_or(0.0, |r| r[j])).collect()).collect();
        Mixture::new(components, kij, self.t_ref, self.p_ref)
    }
}
