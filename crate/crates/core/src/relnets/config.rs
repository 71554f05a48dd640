use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RelnetsError;
use crate::datastore::Datastore;
use crate::dsl::{CheckedProgram, EntityKind, Literal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    #[default]
    Relnets,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    /// `[in, hidden..., out]`. Omitted means the identity map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    #[serde(default)]
    pub activation: Activation,
    /// Embedding width for symbolic entities; 0 drops the entity from
    /// rule inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    /// Overrides the global sharing mode for this entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<bool>,
}

fn yes() -> bool {
    true
}

/// Network configuration, bound to the program by name.
///
/// ```toml
/// sharing = "relnets"
/// include_head = true
///
/// [entity.User]
/// layers = [8, 16]
///
/// [relation.Agree]
///
/// [rule.r0]
/// layers = [48, 16, 2]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default)]
    pub sharing: Sharing,
    #[serde(default = "yes")]
    pub include_head: bool,
    #[serde(default)]
    pub entity: BTreeMap<String, EncoderSpec>,
    #[serde(default)]
    pub relation: BTreeMap<String, EncoderSpec>,
    #[serde(default)]
    pub rule: BTreeMap<String, EncoderSpec>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            sharing: Sharing::Relnets,
            include_head: true,
            entity: BTreeMap::new(),
            relation: BTreeMap::new(),
            rule: BTreeMap::new(),
        }
    }
}

impl NetConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RelnetsError> {
        toml::from_str(text).map_err(|e| RelnetsError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, RelnetsError> {
        let text = std::fs::read_to_string(path).map_err(|e| RelnetsError::Config(format!("{}: {}", path.display(), e)))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// A complete config for `program`: attributed entities through one
    /// `hidden`-wide layer, symbolic ones embedded at width `embed`,
    /// identity relation encoders and one hidden layer per rule.
    pub fn default_for(program: &CheckedProgram, data: &Datastore, hidden: usize, embed: usize) -> Self {
        let mut cfg = NetConfig::default();
        let mut width: BTreeMap<String, usize> = BTreeMap::new();
        for (name, ty) in &program.entities {
            let spec = match ty.kind {
                EntityKind::Attributed { dim } => {
                    width.insert(name.clone(), hidden);
                    EncoderSpec { layers: Some(vec![dim, hidden]), ..Default::default() }
                }
                EntityKind::Symbolic { .. } => {
                    width.insert(name.clone(), embed);
                    EncoderSpec { embed_dim: Some(embed), ..Default::default() }
                }
            };
            cfg.entity.insert(name.clone(), spec);
        }
        let rel_width = |pred: &str| -> usize { program.predicates[pred].arg_types.iter().map(|t| width[t]).sum() };
        for name in program.predicates.keys() {
            cfg.relation.insert(name.clone(), EncoderSpec { activation: Activation::Identity, ..Default::default() });
        }
        for t in program.templates.iter().filter(|t| t.weighted) {
            let mut input: usize = t
                .body
                .iter()
                .filter_map(|l| match l {
                    Literal::Atom { atom, .. } => Some(rel_width(&atom.predicate)),
                    Literal::Guard { .. } => None,
                })
                .sum();
            let head = t.head_atom();
            let head_types = &program.predicates[&head.predicate].arg_types;
            for (i, ty) in head_types.iter().enumerate() {
                if Some(i) != t.label_position {
                    input += width[ty];
                }
            }
            let out = match t.label_position {
                Some(pos) => data.vocab(&head_types[pos]).map_or(0, |v| v.len()),
                None => 2,
            };
            cfg.rule.insert(t.template_id.clone(), EncoderSpec { layers: Some(vec![input, hidden, out]), ..Default::default() });
        }
        cfg
    }
}
