use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SynthesisConfig, SynthesisError};
use crate::ir::{
    FunctionCatalog, FunctionSpec, Modality, Node, Pipeline, DATA_PORT, LANGUAGE_CODES,
};
use crate::par::Exec;

/// Modalities a user can hand in directly.
const INPUT_MODALITIES: [Modality; 5] = [
    Modality::Text,
    Modality::Audio,
    Modality::Video,
    Modality::Image,
    Modality::Tabular,
];

/// An output port that may still take a child.
#[derive(Debug, Clone)]
struct Slot {
    node: String,
    port: String,
    modality: Modality,
    language: Option<String>,
}

struct Builder<'c> {
    catalog: &'c FunctionCatalog,
    cfg: &'c SynthesisConfig,
    rng: ChaCha8Rng,
    pipeline: Pipeline,
    slots: Vec<Slot>,
    children: BTreeMap<String, BTreeSet<String>>,
}

/// Grows a tree-shaped pipeline from `cfg.n_inputs` Input nodes until it
/// holds exactly `cfg.n_function_nodes` Function nodes, then caps every
/// unused output port with an Output node.
///
/// Only catalog functions with a single required input are attached, so
/// every node has one parent. Languages flow down the tree: a speech
/// recogniser under an English input is told the audio is English, and a
/// translation's target becomes the language of everything below it.
pub fn expand_pipeline(
    cfg: &SynthesisConfig,
    catalog: &FunctionCatalog,
) -> Result<Pipeline, SynthesisError> {
    cfg.validate()?;
    let mut b = Builder {
        catalog,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        pipeline: Pipeline::new(),
        slots: Vec::new(),
        children: BTreeMap::new(),
    };
    let mut input_slots = Vec::new();
    for i in 1..=cfg.n_inputs {
        input_slots.push(b.add_input(i));
    }
    for k in 0..cfg.n_function_nodes {
        let slot = match input_slots.get(k) {
            Some(s) => s.clone(),
            None => b.pick_slot()?,
        };
        let last = k + 1 == cfg.n_function_nodes;
        b.attach(&slot, k + 1, last)?;
    }
    b.cap_outputs();
    Ok(b.pipeline)
}

/// Runs [`expand_pipeline`] once per config; output order follows `cfgs`.
pub fn synthesize_batch(
    cfgs: &[SynthesisConfig],
    catalog: &FunctionCatalog,
    exec: Exec,
) -> Result<Vec<Pipeline>, SynthesisError> {
    exec.try_map(cfgs, |cfg| expand_pipeline(cfg, catalog))
}

fn has_language(m: Modality) -> bool {
    matches!(m, Modality::Text | Modality::Audio | Modality::Video)
}

/// The one required input of `f`, if `f` has exactly one.
fn sole_input(f: &FunctionSpec) -> Option<&crate::ir::ParamSpec> {
    let mut req = f.required_inputs();
    let first = req.next()?;
    req.next().is_none().then_some(first)
}

impl<'c> Builder<'c> {
    fn consumers(&self, m: Modality) -> Vec<&'c FunctionSpec> {
        let catalog = self.catalog;
        catalog
            .iter()
            .filter(|f| sole_input(f).is_some_and(|p| p.admits(m)))
            .collect()
    }

    fn extensible(&self, f: &FunctionSpec) -> bool {
        f.outputs
            .iter()
            .any(|o| !self.consumers(o.modality).is_empty())
    }

    fn has_room(&self, node: &str) -> bool {
        self.children.get(node).map_or(0, BTreeSet::len) < self.cfg.max_children
    }

    fn live_slots(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| {
                let s = &self.slots[i];
                self.has_room(&s.node) && !self.consumers(s.modality).is_empty()
            })
            .collect()
    }

    fn add_input(&mut self, i: usize) -> Slot {
        let modality = *INPUT_MODALITIES.choose(&mut self.rng).expect("non-empty");
        let id = format!("input_{i}");
        let mut node = Node::input(&id, modality).with_param("name", format!("Input {i}"));
        let language = has_language(modality).then(|| self.language());
        if let Some(l) = &language {
            node = node.with_param("language", l);
        }
        self.pipeline.add_node(node).expect("fresh id");
        let slot = Slot {
            node: id,
            port: DATA_PORT.to_string(),
            modality,
            language,
        };
        self.slots.push(slot.clone());
        slot
    }

    fn language(&mut self) -> String {
        LANGUAGE_CODES
            .choose(&mut self.rng)
            .expect("non-empty")
            .to_string()
    }

    fn pick_slot(&mut self) -> Result<Slot, SynthesisError> {
        let live = self.live_slots();
        match live.choose(&mut self.rng) {
            Some(&i) => Ok(self.slots[i].clone()),
            None => {
                let s = self.slots.last().expect("inputs exist");
                Err(SynthesisError::DeadEnd {
                    node: s.node.clone(),
                    modality: s.modality,
                })
            }
        }
    }

    fn attach(&mut self, slot: &Slot, k: usize, last: bool) -> Result<(), SynthesisError> {
        let parent_function = self
            .pipeline
            .node(&slot.node)
            .and_then(|n| n.function.clone());
        let mut options = self.consumers(slot.modality);
        if options.is_empty() {
            return Err(SynthesisError::DeadEnd {
                node: slot.node.clone(),
                modality: slot.modality,
            });
        }
        // no immediate repeats such as translating back and forth
        let fresh: Vec<_> = options
            .iter()
            .copied()
            .filter(|f| Some(&f.id) != parent_function.as_ref())
            .collect();
        if !fresh.is_empty() {
            options = fresh;
        }
        // keep the tree growable while function nodes are still owed
        if !last && !self.other_live_slot_after(slot) {
            let growable: Vec<_> = options
                .iter()
                .copied()
                .filter(|f| self.extensible(f))
                .collect();
            if !growable.is_empty() {
                options = growable;
            }
        }
        let f = (*options.choose(&mut self.rng).expect("non-empty")).clone();
        let input = sole_input(&f).expect("filtered on sole input").name.clone();

        let id = format!("{}_{k}", f.id);
        let mut node = Node::function(&id, &f);
        let mut language = slot.language.clone();
        let source = slot.language.clone().unwrap_or_else(|| self.language());
        for domain in &f.required_params {
            let value = match domain.name.as_str() {
                "language" | "source_language" if domain.allows(&source) => source.clone(),
                "target_language" => {
                    let others: Vec<&str> = domain
                        .values
                        .iter()
                        .map(String::as_str)
                        .filter(|v| *v != source)
                        .collect();
                    others
                        .choose(&mut self.rng)
                        .expect("several languages")
                        .to_string()
                }
                _ => domain
                    .values
                    .choose(&mut self.rng)
                    .cloned()
                    .unwrap_or_else(|| "default".to_string()),
            };
            if matches!(domain.name.as_str(), "language" | "target_language") {
                language = Some(value.clone());
            }
            node = node.with_param(&domain.name, value);
        }
        self.pipeline.add_node(node).expect("fresh id");
        self.pipeline
            .connect((&slot.node, &slot.port), (&id, &input));
        self.children
            .entry(slot.node.clone())
            .or_default()
            .insert(id.clone());
        for out in &f.outputs {
            self.slots.push(Slot {
                node: id.clone(),
                port: out.name.clone(),
                modality: out.modality,
                language: language.clone().filter(|_| has_language(out.modality)),
            });
        }
        Ok(())
    }

    /// Whether some slot other than `slot` could still take a child once
    /// `slot`'s node gains one.
    fn other_live_slot_after(&self, slot: &Slot) -> bool {
        let parent_full =
            self.children.get(&slot.node).map_or(0, BTreeSet::len) + 1 >= self.cfg.max_children;
        self.live_slots().into_iter().any(|i| {
            let s = &self.slots[i];
            if s.node == slot.node {
                s.port != slot.port && !parent_full
            } else {
                true
            }
        })
    }

    fn cap_outputs(&mut self) {
        let used: BTreeSet<(String, String)> = self
            .pipeline
            .edges
            .iter()
            .map(|e| (e.source.node.clone(), e.source.port.clone()))
            .collect();
        let open: Vec<Slot> = self
            .slots
            .iter()
            .filter(|s| !used.contains(&(s.node.clone(), s.port.clone())))
            .cloned()
            .collect();
        for (j, s) in open.into_iter().enumerate() {
            let id = format!("output_{}", j + 1);
            let mut node =
                Node::output(&id, s.modality).with_param("name", format!("Output {}", j + 1));
            if let Some(l) = &s.language {
                node = node.with_param("language", l);
            }
            self.pipeline.add_node(node).expect("fresh id");
            self.pipeline.connect((&s.node, &s.port), (&id, DATA_PORT));
        }
    }
}
