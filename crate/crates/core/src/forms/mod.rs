//! Functional forms: three enhancement-factor trees sharing one parameter
//! vector with a trainable/frozen mask.
//!
//! `gx` and `gss` are evaluated once per spin channel and may use
//! per-spin descriptors; `gos` sees only spin-shared descriptors.

mod canonical;

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorConstants;
use crate::error::{Result, XcError};
use crate::expr::ExprNode;

pub use canonical::{
    canonical_baseline, canonical_safs26a, canonical_safs26b, BASELINE_COS, BASELINE_CSS, BASELINE_X,
    SAFS26B_OS_TEMPLATE,
};

/// The three built-in forms, by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalName {
    Baseline,
    Safs26a,
    Safs26b,
}

impl CanonicalName {
    pub fn form(self) -> FunctionalForm {
        match self {
            CanonicalName::Baseline => canonical_baseline(),
            CanonicalName::Safs26a => canonical_safs26a(),
            CanonicalName::Safs26b => canonical_safs26b(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Ss,
    Os,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::X, Channel::Ss, Channel::Os];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "gx",
            Channel::Ss => "gss",
            Channel::Os => "gos",
        }
    }
}

/// Powers of (w, u[, z]) in one polynomial term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub w: u32,
    pub u: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub z: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl Monomial {
    pub const fn wu(w: u32, u: u32) -> Self {
        Monomial { w, u, z: 0 }
    }

    pub const fn wuz(w: u32, u: u32, z: u32) -> Self {
        Monomial { w, u, z }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTemplates {
    #[serde(default)]
    pub x: Vec<Monomial>,
    #[serde(default)]
    pub ss: Vec<Monomial>,
    #[serde(default)]
    pub os: Vec<Monomial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channels {
    pub gx: ExprNode,
    pub gss: ExprNode,
    pub gos: ExprNode,
}

impl Channels {
    pub fn get(&self, c: Channel) -> &ExprNode {
        match c {
            Channel::X => &self.gx,
            Channel::Ss => &self.gss,
            Channel::Os => &self.gos,
        }
    }

    pub fn get_mut(&mut self, c: Channel) -> &mut ExprNode {
        match c {
            Channel::X => &mut self.gx,
            Channel::Ss => &mut self.gss,
            Channel::Os => &mut self.gos,
        }
    }
}

/// A named contiguous block of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub channel: Channel,
    pub start: usize,
    pub len: usize,
}

/// Per-form replacements for descriptor constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_css: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hf: Option<f64>,
}

impl ConstantsOverride {
    pub fn apply(&self, base: &DescriptorConstants) -> DescriptorConstants {
        DescriptorConstants {
            gamma_x: self.gamma_x.unwrap_or(base.gamma_x),
            gamma_css: self.gamma_css.unwrap_or(base.gamma_css),
            gamma_cos: self.gamma_cos.unwrap_or(base.gamma_cos),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            omega: self.omega.unwrap_or(base.omega),
            a_hf: self.a_hf.unwrap_or(base.a_hf),
            ..*base
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == ConstantsOverride::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalForm {
    pub label: String,
    pub channels: Channels,
    pub params: Vec<f64>,
    pub trainable_mask: Vec<bool>,
    #[serde(default)]
    pub power_templates: PowerTemplates,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub param_groups: Vec<ParamGroup>,
    #[serde(default, skip_serializing_if = "ConstantsOverride::is_empty")]
    pub constants_override: ConstantsOverride,
}

impl FunctionalForm {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable_mask.iter().filter(|t| **t).count()
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.params.len()).filter(|i| self.trainable_mask[*i]).collect()
    }

    pub fn trainable_values(&self) -> Vec<f64> {
        self.trainable_indices().iter().map(|i| self.params[*i]).collect()
    }

    /// Writes `values` into the trainable slots, in index order.
    pub fn set_trainable_values(&mut self, values: &[f64]) -> Result<()> {
        let idx = self.trainable_indices();
        if idx.len() != values.len() {
            return Err(XcError::validation(
                "params",
                format!("expected {} trainable values, got {}", idx.len(), values.len()),
            ));
        }
        for (i, v) in idx.into_iter().zip(values) {
            self.params[i] = *v;
        }
        Ok(())
    }

    pub fn with_trainable_values(&self, values: &[f64]) -> Result<Self> {
        let mut f = self.clone();
        f.set_trainable_values(values)?;
        Ok(f)
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.param_groups.iter().find(|g| g.name == name)
    }

    pub fn group_trainable(&self, name: &str) -> usize {
        self.group(name)
            .map(|g| self.trainable_mask[g.start..g.start + g.len].iter().filter(|t| **t).count())
            .unwrap_or(0)
    }

    pub fn channel_trainable(&self, channel: Channel) -> usize {
        self.param_groups
            .iter()
            .filter(|g| g.channel == channel)
            .map(|g| self.group_trainable(&g.name))
            .sum()
    }

    pub fn constants(&self, base: &DescriptorConstants) -> DescriptorConstants {
        self.constants_override.apply(base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.trainable_mask.len() {
            return Err(XcError::validation(
                "trainable_mask",
                format!(
                    "{} parameters but mask of length {}",
                    self.params.len(),
                    self.trainable_mask.len()
                ),
            ));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(XcError::validation("params", format!("parameter {i} is not finite")));
        }
        for c in Channel::ALL {
            let node = self.channels.get(c);
            node.validate(self.params.len(), &format!("channels.{}", c.name()))?;
        }
        if let Some(d) = self.channels.gos.descriptors().into_iter().find(|d| d.is_per_spin()) {
            return Err(XcError::validation(
                "channels.gos",
                format!("opposite-spin channel uses per-spin descriptor {d:?}"),
            ));
        }
        for g in &self.param_groups {
            if g.start + g.len > self.params.len() {
                return Err(XcError::validation(
                    "param_groups",
                    format!("group '{}' exceeds the parameter vector", g.name),
                ));
            }
        }
        self.constants(&DescriptorConstants::default()).validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let form: FunctionalForm = serde_json::from_str(text).map_err(|e| XcError::Parse {
            line: e.line(),
            message: format!("column {}: {e}", e.column()),
        })?;
        form.validate()?;
        Ok(form)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| XcError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| XcError::io(path, e))
    }

    /// Appends parameters, returning the index of the first new one.
    pub fn push_params(&mut self, values: &[f64], trainable: bool) -> usize {
        let start = self.params.len();
        self.params.extend_from_slice(values);
        self.trainable_mask.extend(std::iter::repeat_n(trainable, values.len()));
        start
    }

    pub fn push_group(&mut self, name: impl Into<String>, channel: Channel, start: usize, len: usize) {
        self.param_groups.push(ParamGroup {
            name: name.into(),
            channel,
            start,
            len,
        });
    }
}
