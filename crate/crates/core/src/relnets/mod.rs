//! Entity encoders, relation encoders and per-template rule scorers.
//!
//! A rule's input is the concatenation of its body atoms' relation
//! encodings followed, when `include_head` is set, by the encodings of the
//! head's known arguments. A relation encoding runs the relation encoder
//! over the concatenated encodings of the atom's arguments. The rule
//! scorer emits one raw score per head label.

mod config;


use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autodiff::{AutodiffError, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::datastore::{Datastore, Sym};
use crate::dsl::{CheckedProgram, EntityKind, Literal};
use crate::grounder::{FactorGraph, GroundAtom, GroundRule, Head};
use crate::inference::ScoreTable;

pub use config::{Activation, EncoderSpec, NetConfig, Sharing};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelnetsError {
    #[error("network config has no entry for {kind} {name}")]
    MissingSpec { kind: &'static str, name: String },
    #[error("{name}: expected input width {expected}, config says {got}")]
    DimMismatch { name: String, expected: usize, got: usize },
    #[error("no features for {entity} constant {constant:?}")]
    MissingFeature { entity: String, constant: String },
    #[error("network config: {0}")]
    Config(String),
    #[error("checkpoint parameter {name}: {message}")]
    Checkpoint { name: String, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation,
    /// Whether the last layer also gets the activation.
    activate_last: bool,
    out_dim: usize,
}

#[derive(Debug, Clone)]
enum EntityNet {
    Dense { mlp: Option<Mlp>, out_dim: usize },
    Embed { table: ParamId, mlp: Option<Mlp>, out_dim: usize },
}

impl EntityNet {
    fn out_dim(&self) -> usize {
        match self {
            EntityNet::Dense { out_dim, .. } | EntityNet::Embed { out_dim, .. } => *out_dim,
        }
    }
}

#[derive(Debug, Clone)]
struct RuleWiring {
    entity: BTreeMap<String, usize>,
    relation: BTreeMap<String, usize>,
    scorer: Mlp,
}

/// All networks of one program, plus the parameters they read.
#[derive(Debug, Clone)]
pub struct ScorerGraph {
    pub store: ParamStore,
    pub sharing: Sharing,
    pub include_head: bool,
    entity_nets: Vec<(String, EntityNet)>,
    relation_nets: Vec<(String, Option<Mlp>)>,
    /// Indexed by template index; `None` for unweighted templates.
    rules: Vec<Option<RuleWiring>>,
    arg_types: BTreeMap<String, Vec<String>>,
    encoder_params: BTreeSet<ParamId>,
}

struct Builder<'a> {
    store: ParamStore,
    rng: ChaCha8Rng,
    encoder_params: BTreeSet<ParamId>,
    data: &'a Datastore,
}

impl Builder<'_> {
    fn mlp(
        &mut self,
        prefix: &str,
        layers: &[usize],
        activation: Activation,
        activate_last: bool,
        encoder: bool,
    ) -> Result<Mlp, RelnetsError> {
        let mut out = Vec::new();
        for (i, w) in layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out).map(|_| self.rng.random_range(-bound..=bound)).collect();
            let wid = self.store.add(&format!("{}.l{}.w", prefix, i), Tensor::matrix(fan_in, fan_out, weights)?)?;
            let bid = self.store.add(&format!("{}.l{}.b", prefix, i), Tensor::zeros(&[fan_out]))?;
            if encoder {
                self.encoder_params.extend([wid, bid]);
            }
            out.push((wid, bid));
        }
        Ok(Mlp { layers: out, activation, activate_last, out_dim: *layers.last().unwrap_or(&0) })
    }

    fn entity(&mut self, prefix: &str, name: &str, kind: &EntityKind, spec: &EncoderSpec) -> Result<EntityNet, RelnetsError> {
        let label = format!("{}ent.{}", prefix, name);
        match kind {
            EntityKind::Attributed { dim } => {
                let mlp = match &spec.layers {
                    Some(l) => {
                        check_layers(&label, l, *dim)?;
                        Some(self.mlp(&label, l, spec.activation, true, true)?)
                    }
                    None => None,
                };
                let out_dim = mlp.as_ref().map_or(*dim, |m| m.out_dim);
                Ok(EntityNet::Dense { mlp, out_dim })
            }
            EntityKind::Symbolic { .. } => {
                let embed = spec.embed_dim.ok_or_else(|| RelnetsError::MissingSpec { kind: "embed_dim of", name: name.into() })?;
                let vocab = self.data.vocab(name).map_or(0, |v| v.len());
                let normal = Normal::new(0.0, 0.1).expect("valid normal");
                let values: Vec<f64> = (0..vocab * embed).map(|_| normal.sample(&mut self.rng)).collect();
                let table = self.store.add(&format!("{}.emb", label), Tensor::matrix(vocab, embed, values)?)?;
                self.encoder_params.insert(table);
                let mlp = match &spec.layers {
                    Some(l) => {
                        check_layers(&label, l, embed)?;
                        Some(self.mlp(&label, l, spec.activation, true, true)?)
                    }
                    None => None,
                };
                let out_dim = if embed == 0 { 0 } else { mlp.as_ref().map_or(embed, |m| m.out_dim) };
                Ok(EntityNet::Embed { table, mlp, out_dim })
            }
        }
    }
}

fn check_layers(name: &str, layers: &[usize], input: usize) -> Result<(), RelnetsError> {
    match layers.first() {
        Some(&first) if first == input && layers.len() >= 2 => Ok(()),
        Some(&first) if layers.len() >= 2 => Err(RelnetsError::DimMismatch { name: name.into(), expected: input, got: first }),
        _ => Err(RelnetsError::Config(format!("{}: layers needs at least [in, out]", name))),
    }
}

fn shared(spec: &EncoderSpec, mode: Sharing) -> bool {
    spec.share.unwrap_or(mode == Sharing::Relnets)
}

/// Instantiates every network named by `config` for `program`, drawing
/// initial weights from `seed`.
pub fn build_scorers(
    program: &CheckedProgram,
    config: &NetConfig,
    data: &Datastore,
    seed: u64,
) -> Result<ScorerGraph, RelnetsError> {
    let mut b = Builder { store: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(seed), encoder_params: BTreeSet::new(), data };
    let mut entity_nets: Vec<(String, EntityNet)> = Vec::new();
    let mut relation_nets: Vec<(String, Option<Mlp>)> = Vec::new();
    let mut entity_key: HashMap<(String, String), usize> = HashMap::new();
    let mut relation_key: HashMap<(String, String), usize> = HashMap::new();
    let mut rules = Vec::new();

    for t in &program.templates {
        if !t.weighted {
            rules.push(None);
            continue;
        }
        let rule_spec = config
            .rule
            .get(&t.template_id)
            .ok_or_else(|| RelnetsError::MissingSpec { kind: "rule", name: t.template_id.clone() })?;
        let head = t.head_atom();
        let mut atoms: Vec<&str> =
            t.body.iter().filter_map(|l| if let Literal::Atom { atom, .. } = l { Some(atom.predicate.as_str()) } else { None }).collect();
        let mut wiring = RuleWiring { entity: BTreeMap::new(), relation: BTreeMap::new(), scorer: Mlp::empty() };

        let mut entity_types: BTreeSet<&str> = BTreeSet::new();
        for p in &atoms {
            entity_types.extend(program.predicates[*p].arg_types.iter().map(String::as_str));
        }
        if config.include_head {
            for (i, ty) in program.predicates[&head.predicate].arg_types.iter().enumerate() {
                if Some(i) != t.label_position {
                    entity_types.insert(ty);
                }
            }
        }
        for ty in entity_types {
            let spec = config.entity.get(ty).ok_or_else(|| RelnetsError::MissingSpec { kind: "entity", name: ty.into() })?;
            let owner = if shared(spec, config.sharing) { String::new() } else { t.template_id.clone() };
            let key = (owner.clone(), ty.to_string());
            let idx = match entity_key.get(&key) {
                Some(i) => *i,
                None => {
                    let prefix = if owner.is_empty() { String::new() } else { format!("{}/", owner) };
                    let net = b.entity(&prefix, ty, &program.entities[ty].kind, spec)?;
                    entity_nets.push((format!("{}{}", prefix, ty), net));
                    entity_key.insert(key, entity_nets.len() - 1);
                    entity_nets.len() - 1
                }
            };
            wiring.entity.insert(ty.to_string(), idx);
        }

        atoms.sort_unstable();
        atoms.dedup();
        for p in atoms {
            let spec = config.relation.get(p).ok_or_else(|| RelnetsError::MissingSpec { kind: "relation", name: p.into() })?;
            let owner = if shared(spec, config.sharing) { String::new() } else { t.template_id.clone() };
            let key = (owner.clone(), p.to_string());
            let idx = match relation_key.get(&key) {
                Some(i) => *i,
                None => {
                    let prefix = if owner.is_empty() { String::new() } else { format!("{}/", owner) };
                    let label = format!("{}rel.{}", prefix, p);
                    let input: usize =
                        program.predicates[p].arg_types.iter().map(|ty| entity_nets[wiring.entity[ty]].1.out_dim()).sum();
                    let mlp = match &spec.layers {
                        Some(l) => {
                            check_layers(&label, l, input)?;
                            Some(b.mlp(&label, l, spec.activation, true, true)?)
                        }
                        None => None,
                    };
                    relation_nets.push((format!("{}{}", prefix, p), mlp));
                    relation_key.insert(key, relation_nets.len() - 1);
                    relation_nets.len() - 1
                }
            };
            wiring.relation.insert(p.to_string(), idx);
        }

        let rel_width = |p: &str, w: &RuleWiring| -> usize {
            match &relation_nets[w.relation[p]].1 {
                Some(m) => m.out_dim,
                None => program.predicates[p].arg_types.iter().map(|ty| entity_nets[w.entity[ty]].1.out_dim()).sum(),
            }
        };
        let mut input: usize = t
            .body
            .iter()
            .filter_map(|l| if let Literal::Atom { atom, .. } = l { Some(rel_width(&atom.predicate, &wiring)) } else { None })
            .sum();
        let head_types = &program.predicates[&head.predicate].arg_types;
        if config.include_head {
            for (i, ty) in head_types.iter().enumerate() {
                if Some(i) != t.label_position {
                    input += entity_nets[wiring.entity[ty]].1.out_dim();
                }
            }
        }
        let labels = match t.label_position {
            Some(pos) => data.vocab(&head_types[pos]).map_or(0, |v| v.len()),
            None => 2,
        };
        let label = format!("rule.{}", t.template_id);
        let layers = rule_spec.layers.clone().unwrap_or_else(|| vec![input, labels]);
        check_layers(&label, &layers, input)?;
        if *layers.last().unwrap() != labels {
            return Err(RelnetsError::DimMismatch {
                name: format!("{} output", label),
                expected: labels,
                got: *layers.last().unwrap(),
            });
        }
        wiring.scorer = b.mlp(&label, &layers, rule_spec.activation, false, false)?;
        rules.push(Some(wiring));
    }

    let arg_types = program.predicates.iter().map(|(k, v)| (k.clone(), v.arg_types.clone())).collect();
    Ok(ScorerGraph {
        store: b.store,
        sharing: config.sharing,
        include_head: config.include_head,
        entity_nets,
        relation_nets,
        rules,
        arg_types,
        encoder_params: b.encoder_params,
    })
}

impl Mlp {
    fn empty() -> Self {
        Mlp { layers: Vec::new(), activation: Activation::Identity, activate_last: false, out_dim: 0 }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: NodeId) -> Result<NodeId, AutodiffError> {
        let n = self.layers.len();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let w = tape.param(store, *w);
            let b = tape.param(store, *b);
            let h = tape.matmul(x, w)?;
            x = tape.add(h, b)?;
            if i + 1 < n || self.activate_last {
                x = match self.activation {
                    Activation::Relu => tape.relu(x)?,
                    Activation::Tanh => tape.tanh(x)?,
                    Activation::Identity => x,
                };
            }
        }
        Ok(x)
    }
}

/// One forward pass over any number of rules, sharing a tape and caching
/// entity and relation encodings.
pub struct Forward<'g> {
    pub tape: Tape,
    scorers: &'g ScorerGraph,
    data: &'g Datastore,
    entity_cache: HashMap<(usize, Sym), NodeId>,
    relation_cache: HashMap<(usize, Vec<Sym>), NodeId>,
}

impl<'g> Forward<'g> {
    pub fn new(scorers: &'g ScorerGraph, data: &'g Datastore) -> Self {
        Forward { tape: Tape::new(), scorers, data, entity_cache: HashMap::new(), relation_cache: HashMap::new() }
    }

    fn entity(&mut self, net: usize, ty: &str, sym: Sym) -> Result<Option<NodeId>, RelnetsError> {
        let (_, spec) = &self.scorers.entity_nets[net];
        if spec.out_dim() == 0 {
            return Ok(None);
        }
        if let Some(n) = self.entity_cache.get(&(net, sym)) {
            return Ok(Some(*n));
        }
        let missing = || RelnetsError::MissingFeature { entity: ty.into(), constant: self.data.name(sym).into() };
        let store = &self.scorers.store;
        let node = match spec {
            EntityNet::Dense { mlp, .. } => {
                let x = self.data.dense(ty, sym).ok_or_else(missing)?;
                let x = self.tape.constant(Tensor::vector(x.to_vec()));
                match mlp {
                    Some(m) => m.forward(&mut self.tape, store, x)?,
                    None => x,
                }
            }
            EntityNet::Embed { table, mlp, .. } => {
                let i = self.data.vocab_index(ty, sym).ok_or_else(missing)?;
                let t = self.tape.param(store, *table);
                let x = self.tape.embedding_lookup(t, i)?;
                match mlp {
                    Some(m) => m.forward(&mut self.tape, store, x)?,
                    None => x,
                }
            }
        };
        self.entity_cache.insert((net, sym), node);
        Ok(Some(node))
    }

    fn relation(&mut self, wiring: &RuleWiring, atom: &GroundAtom) -> Result<Option<NodeId>, RelnetsError> {
        let net = wiring.relation[&atom.predicate];
        if let Some(n) = self.relation_cache.get(&(net, atom.args.clone())) {
            return Ok(Some(*n));
        }
        let types = &self.scorers.arg_types[&atom.predicate];
        let mut parts = Vec::new();
        for (ty, sym) in types.iter().zip(&atom.args) {
            if let Some(n) = self.entity(wiring.entity[ty], ty, *sym)? {
                parts.push(n);
            }
        }
        let node = match &self.scorers.relation_nets[net].1 {
            Some(m) => {
                let x = self.tape.concat(&parts)?;
                Some(m.forward(&mut self.tape, &self.scorers.store, x)?)
            }
            None if parts.is_empty() => None,
            None => Some(self.tape.concat(&parts)?),
        };
        if let Some(n) = node {
            self.relation_cache.insert((net, atom.args.clone()), n);
        }
        Ok(node)
    }

    /// Score vector of `rule`, one entry per head label.
    pub fn score(&mut self, rule: &GroundRule) -> Result<NodeId, RelnetsError> {
        let wiring = self.scorers.rules[rule.template_index].as_ref().expect("weighted template");
        let mut parts = Vec::new();
        for atom in &rule.body_atoms {
            if let Some(n) = self.relation(wiring, atom)? {
                parts.push(n);
            }
        }
        if self.scorers.include_head {
            let types = &self.scorers.arg_types[&rule.head_predicate];
            for (ty, sym) in types.iter().zip(&rule.head_args) {
                if let Some(sym) = sym {
                    if let Some(n) = self.entity(wiring.entity[ty], ty, *sym)? {
                        parts.push(n);
                    }
                }
            }
        }
        let x = self.tape.concat(&parts)?;
        let z = wiring.scorer.forward(&mut self.tape, &self.scorers.store, x)?;
        Ok(match &rule.head {
            Head::Binary(_) => z,
            Head::Multiclass(hs) => {
                let classes: Vec<usize> = hs.iter().map(|h| h.1).collect();
                self.tape.gather(z, &classes)?
            }
        })
    }

    /// Score vectors for every potential of `graph`.
    pub fn score_graph(&mut self, graph: &FactorGraph) -> Result<Vec<NodeId>, RelnetsError> {
        graph.potentials.iter().map(|r| self.score(r)).collect()
    }

    pub fn values(&self, nodes: &[NodeId]) -> Vec<ScoreTable> {
        nodes.iter().map(|n| self.tape.value(*n).data().to_vec()).collect()
    }
}

impl ScorerGraph {
    /// Parameters of entity and relation encoders.
    pub fn encoder_params(&self) -> &BTreeSet<ParamId> {
        &self.encoder_params
    }

    /// Copies values from `other` by name; every parameter here must be
    /// present there with the same shape.
    pub fn load_params(&mut self, other: &ParamStore) -> Result<(), RelnetsError> {
        let ids: Vec<ParamId> = self.store.iter().map(|(id, _)| id).collect();
        for id in ids {
            let p = self.store.get_mut(id);
            let src = other
                .by_name(&p.name)
                .ok_or_else(|| RelnetsError::Checkpoint { name: p.name.clone(), message: "missing".into() })?;
            if src.value.shape() != p.value.shape() {
                return Err(RelnetsError::Checkpoint {
                    name: p.name.clone(),
                    message: format!("shape {:?}, expected {:?}", src.value.shape(), p.value.shape()),
                });
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    /// Embedding tables of symbolic entities: `(net name, table)`.
    pub fn embedding_tables(&self) -> Vec<(&str, &Tensor)> {
        self.entity_nets
            .iter()
            .filter_map(|(name, net)| match net {
                EntityNet::Embed { table, .. } => Some((name.as_str(), &self.store.get(*table).value)),
                _ => None,
            })
            .collect()
    }
}

/// Raw scores of one rule.
pub fn score_rule(scorers: &ScorerGraph, rule: &GroundRule, data: &Datastore) -> Result<ScoreTable, RelnetsError> {
    let mut f = Forward::new(scorers, data);
    let n = f.score(rule)?;
    Ok(f.tape.value(n).data().to_vec())
}

/// Raw scores of every potential in `graph`.
pub fn score_graph(scorers: &ScorerGraph, graph: &FactorGraph, data: &Datastore) -> Result<Vec<ScoreTable>, RelnetsError> {
    let mut f = Forward::new(scorers, data);
    let nodes = f.score_graph(graph)?;
    Ok(f.values(&nodes))
}
