//! Part catalog: the mortise-tenon inventory, its equivalence classes, the
//! recipe table and per-character decomposition trees.
//!
//! A catalog is immutable once loaded. [`PartCatalog::from_json`] runs every
//! structural check eagerly, so any value of this type satisfies:
//!
//! * part ids are unique and every referenced id resolves;
//! * equivalence classes partition the part set;
//! * recipe results are composite and the derivation graph is acyclic;
//! * every decomposed character has exactly one part carrying its label.
//!
//! Whether each decomposition tree actually folds through the recipe table
//! is a property checked separately (see `composition`), because reporting
//! it per character is part of catalog tooling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::is_nfc;

pub const CATALOG_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartId(String);

impl PartId {
    pub fn new(id: impl Into<String>) -> Self {
        PartId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PartId {
    fn from(s: &str) -> Self {
        PartId(s.to_owned())
    }
}

/// Identifier of an equivalence class: the smallest member id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Primitive,
    Composite,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Part {
    pub id: PartId,
    pub label: String,
    pub kind: PartKind,
    /// 0 for primitives; 1 + deepest input for composites.
    pub depth: u32,
}

#[derive(Clone, Debug, Default)]
pub struct EquivalenceTable {
    class_of: BTreeMap<PartId, ClassId>,
    members: BTreeMap<ClassId, Vec<PartId>>,
}

impl EquivalenceTable {
    pub fn class_of(&self, part: &PartId) -> Option<&ClassId> {
        self.class_of.get(part)
    }

    pub fn members(&self, class: &ClassId) -> &[PartId] {
        self.members.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = (&ClassId, &[PartId])> {
        self.members.iter().map(|(c, m)| (c, m.as_slice()))
    }

    pub fn class_count(&self) -> usize {
        self.members.len()
    }
}

/// Unordered pair of classes, stored with the smaller id first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassPair(ClassId, ClassId);

impl ClassPair {
    pub fn new(a: ClassId, b: ClassId) -> Self {
        if a <= b {
            ClassPair(a, b)
        } else {
            ClassPair(b, a)
        }
    }

    pub fn first(&self) -> &ClassId {
        &self.0
    }

    pub fn second(&self) -> &ClassId {
        &self.1
    }
}

#[derive(Clone, Debug, Default)]
pub struct RecipeTable {
    entries: BTreeMap<ClassPair, PartId>,
}

impl RecipeTable {
    pub fn get(&self, pair: &ClassPair) -> Option<&PartId> {
        self.entries.get(pair)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassPair, &PartId)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ideographic description operators that take exactly two components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CompositionOp {
    LeftRight,
    TopBottom,
    FullSurround,
    SurroundFromAbove,
    SurroundFromBelow,
    SurroundFromLeft,
    SurroundFromUpperLeft,
    SurroundFromUpperRight,
    SurroundFromLowerLeft,
    Overlaid,
}

impl CompositionOp {
    pub fn from_symbol(symbol: &str) -> Option<Self> {
        use CompositionOp::*;
        Some(match symbol {
            "⿰" => LeftRight,
            "⿱" => TopBottom,
            "⿴" => FullSurround,
            "⿵" => SurroundFromAbove,
            "⿶" => SurroundFromBelow,
            "⿷" => SurroundFromLeft,
            "⿸" => SurroundFromUpperLeft,
            "⿹" => SurroundFromUpperRight,
            "⿺" => SurroundFromLowerLeft,
            "⿻" => Overlaid,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        use CompositionOp::*;
        match self {
            LeftRight => "⿰",
            TopBottom => "⿱",
            FullSurround => "⿴",
            SurroundFromAbove => "⿵",
            SurroundFromBelow => "⿶",
            SurroundFromLeft => "⿷",
            SurroundFromUpperLeft => "⿸",
            SurroundFromUpperRight => "⿹",
            SurroundFromLowerLeft => "⿺",
            Overlaid => "⿻",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecompositionNode {
    Leaf(PartId),
    Join {
        op: CompositionOp,
        left: Box<DecompositionNode>,
        right: Box<DecompositionNode>,
    },
}

impl DecompositionNode {
    pub fn internal_nodes(&self) -> usize {
        match self {
            DecompositionNode::Leaf(_) => 0,
            DecompositionNode::Join { left, right, .. } => {
                1 + left.internal_nodes() + right.internal_nodes()
            }
        }
    }

    /// Number of join levels on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        match self {
            DecompositionNode::Leaf(_) => 0,
            DecompositionNode::Join { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    pub fn leaves(&self) -> Vec<&PartId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a PartId>) {
        match self {
            DecompositionNode::Leaf(p) => out.push(p),
            DecompositionNode::Join { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompositionTree {
    pub character: String,
    /// The part labelled with `character`.
    pub root_part: PartId,
    pub root: DecompositionNode,
}

#[derive(Clone, Debug)]
pub struct PartCatalog {
    parts: BTreeMap<PartId, Part>,
    equivalence: EquivalenceTable,
    recipes: RecipeTable,
    decompositions: BTreeMap<String, DecompositionTree>,
    lexicon: BTreeMap<String, String>,
}

impl PartCatalog {
    pub fn part(&self, id: &PartId) -> Option<&Part> {
        self.parts.get(id)
    }

    pub fn parts(&self) -> impl Iterator<Item = &Part> {
        self.parts.values()
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn equivalence(&self) -> &EquivalenceTable {
        &self.equivalence
    }

    pub fn recipes(&self) -> &RecipeTable {
        &self.recipes
    }

    pub fn decomposition(&self, character: &str) -> Option<&DecompositionTree> {
        self.decompositions.get(character)
    }

    pub fn decompositions(&self) -> impl Iterator<Item = &DecompositionTree> {
        self.decompositions.values()
    }

    pub fn lexicon(&self) -> &BTreeMap<String, String> {
        &self.lexicon
    }

    /// First part (by id) carrying `label`.
    pub fn part_by_label(&self, label: &str) -> Option<&Part> {
        self.parts.values().find(|p| p.label == label)
    }

    pub fn from_json(source: &[u8]) -> Result<Self, CatalogError> {
        let doc: CatalogDocument = serde_json::from_slice(source).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(Self::from_document(doc)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }

    pub fn from_document(doc: CatalogDocument) -> Result<Self, ValidationError> {
        validate(doc)
    }

    /// Re-emits the catalog in file format. Recipes are written once per
    /// class pair using the smallest member of each class.
    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            version: CATALOG_FORMAT_VERSION,
            normalization: Some("NFC".to_owned()),
            parts: self
                .parts
                .values()
                .map(|p| PartEntry {
                    id: p.id.clone(),
                    label: p.label.clone(),
                    kind: p.kind,
                })
                .collect(),
            equivalence: self
                .equivalence
                .classes()
                .filter(|(_, m)| m.len() > 1)
                .map(|(_, m)| m.to_vec())
                .collect(),
            recipes: self
                .recipes
                .iter()
                .map(|(pair, result)| RecipeEntry {
                    a: PartId(pair.first().0.clone()),
                    b: PartId(pair.second().0.clone()),
                    result: result.clone(),
                })
                .collect(),
            decompositions: self
                .decompositions
                .iter()
                .map(|(c, t)| (c.clone(), node_to_doc(&t.root)))
                .collect(),
            lexicon: self.lexicon.clone(),
        }
    }
}

fn node_to_doc(node: &DecompositionNode) -> NodeDocument {
    match node {
        DecompositionNode::Leaf(p) => NodeDocument::Leaf { part: p.clone() },
        DecompositionNode::Join { op, left, right } => NodeDocument::Join {
            op: op.symbol().to_owned(),
            left: Box::new(node_to_doc(left)),
            right: Box::new(node_to_doc(right)),
        },
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("catalog validation error: {0}")]
    Validation(#[from] ValidationError),
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("unsupported catalog version {0} (expected {CATALOG_FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("unsupported normalization form {0:?} (only NFC)")]
    UnsupportedNormalization(String),
    #[error("{context} {text:?} is not in NFC")]
    NotNormalized { context: String, text: String },
    #[error("catalog declares no parts")]
    EmptyParts,
    #[error("part with empty id")]
    EmptyId,
    #[error("part {0} has an empty label")]
    EmptyLabel(PartId),
    #[error("duplicate part id {0}")]
    DuplicatePart(PartId),
    #[error("{context} references undeclared part {id}")]
    UnknownPart { context: String, id: PartId },
    #[error("equivalence class #{0} is empty")]
    EmptyClass(usize),
    #[error("part {part} appears in two equivalence classes (#{first} and #{second})")]
    MultipleClasses {
        part: PartId,
        first: usize,
        second: usize,
    },
    #[error("recipe result {0} is not a composite part")]
    ResultNotComposite(PartId),
    #[error("conflicting recipes for classes {{{a}, {b}}}: {first} vs {second}")]
    ConflictingRecipe {
        a: ClassId,
        b: ClassId,
        first: PartId,
        second: PartId,
    },
    #[error("recipe cycle: {}", fmt_cycle(.0))]
    Cycle(Vec<PartId>),
    #[error("composite part {0} is not produced by any recipe")]
    UnproducedComposite(PartId),
    #[error("decomposed character {0:?} has no part with that label")]
    UnlabeledCharacter(String),
    #[error("character {label:?} labels several parts: {}", fmt_ids(.parts))]
    AmbiguousLabel { label: String, parts: Vec<PartId> },
    #[error("decomposition of {character:?} uses non-primitive leaf {part}")]
    LeafNotPrimitive { character: String, part: PartId },
    #[error("decomposition of {character:?} uses unknown or non-binary operator {op:?}")]
    BadOperator { character: String, op: String },
    #[error("decomposition of {0:?} is a single leaf; at least one join is required")]
    TrivialDecomposition(String),
    #[error("lexicon keyword {0:?} must be non-empty lowercase")]
    BadLexiconKey(String),
    #[error("lexicon keyword {keyword:?} maps to {character:?}, which labels no part")]
    LexiconUnknownCharacter { keyword: String, character: String },
}

fn fmt_ids(ids: &[PartId]) -> String {
    ids.iter().map(PartId::as_str).collect::<Vec<_>>().join(", ")
}

fn fmt_cycle(ids: &[PartId]) -> String {
    ids.iter().map(PartId::as_str).collect::<Vec<_>>().join(" -> ")
}

// ---- file format -------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogDocument {
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<String>,
    pub parts: Vec<PartEntry>,
    #[serde(default)]
    pub equivalence: Vec<Vec<PartId>>,
    #[serde(default)]
    pub recipes: Vec<RecipeEntry>,
    #[serde(default)]
    pub decompositions: BTreeMap<String, NodeDocument>,
    #[serde(default)]
    pub lexicon: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartEntry {
    pub id: PartId,
    pub label: String,
    pub kind: PartKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeEntry {
    pub a: PartId,
    pub b: PartId,
    pub result: PartId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeDocument {
    Leaf {
        part: PartId,
    },
    Join {
        op: String,
        left: Box<NodeDocument>,
        right: Box<NodeDocument>,
    },
}

// ---- validation --------------------------------------------------------

fn check_nfc(context: &str, text: &str) -> Result<(), ValidationError> {
    if is_nfc(text) {
        Ok(())
    } else {
        Err(ValidationError::NotNormalized {
            context: context.to_owned(),
            text: text.to_owned(),
        })
    }
}

fn validate(doc: CatalogDocument) -> Result<PartCatalog, ValidationError> {
    if doc.version != CATALOG_FORMAT_VERSION {
        return Err(ValidationError::UnsupportedVersion(doc.version));
    }
    if let Some(form) = &doc.normalization {
        if form != "NFC" {
            return Err(ValidationError::UnsupportedNormalization(form.clone()));
        }
    }
    if doc.parts.is_empty() {
        return Err(ValidationError::EmptyParts);
    }

    let mut parts = BTreeMap::new();
    for entry in &doc.parts {
        if entry.id.0.is_empty() {
            return Err(ValidationError::EmptyId);
        }
        if entry.label.is_empty() {
            return Err(ValidationError::EmptyLabel(entry.id.clone()));
        }
        check_nfc("part label", &entry.label)?;
        let part = Part {
            id: entry.id.clone(),
            label: entry.label.clone(),
            kind: entry.kind,
            depth: 0,
        };
        if parts.insert(entry.id.clone(), part).is_some() {
            return Err(ValidationError::DuplicatePart(entry.id.clone()));
        }
    }

    let equivalence = build_equivalence(&parts, &doc.equivalence)?;
    let recipes = build_recipes(&parts, &equivalence, &doc.recipes)?;
    assign_depths(&mut parts, &equivalence, &recipes)?;

    let mut decompositions = BTreeMap::new();
    for (character, node) in &doc.decompositions {
        check_nfc("decomposed character", character)?;
        let labelled: Vec<PartId> = parts
            .values()
            .filter(|p| &p.label == character)
            .map(|p| p.id.clone())
            .collect();
        let root_part = match labelled.as_slice() {
            [] => return Err(ValidationError::UnlabeledCharacter(character.clone())),
            [one] => one.clone(),
            _ => {
                return Err(ValidationError::AmbiguousLabel {
                    label: character.clone(),
                    parts: labelled,
                })
            }
        };
        let root = build_node(&parts, character, node)?;
        if matches!(root, DecompositionNode::Leaf(_)) {
            return Err(ValidationError::TrivialDecomposition(character.clone()));
        }
        decompositions.insert(
            character.clone(),
            DecompositionTree {
                character: character.clone(),
                root_part,
                root,
            },
        );
    }

    for (keyword, character) in &doc.lexicon {
        if keyword.is_empty() || keyword.to_lowercase() != *keyword {
            return Err(ValidationError::BadLexiconKey(keyword.clone()));
        }
        check_nfc("lexicon character", character)?;
        if !parts.values().any(|p| &p.label == character) {
            return Err(ValidationError::LexiconUnknownCharacter {
                keyword: keyword.clone(),
                character: character.clone(),
            });
        }
    }

    Ok(PartCatalog {
        parts,
        equivalence,
        recipes,
        decompositions,
        lexicon: doc.lexicon,
    })
}

fn build_equivalence(
    parts: &BTreeMap<PartId, Part>,
    declared: &[Vec<PartId>],
) -> Result<EquivalenceTable, ValidationError> {
    let mut seen: BTreeMap<&PartId, usize> = BTreeMap::new();
    let mut table = EquivalenceTable::default();
    for (index, class) in declared.iter().enumerate() {
        if class.is_empty() {
            return Err(ValidationError::EmptyClass(index));
        }
        for id in class {
            if !parts.contains_key(id) {
                return Err(ValidationError::UnknownPart {
                    context: format!("equivalence class #{index}"),
                    id: id.clone(),
                });
            }
            if let Some(&first) = seen.get(id) {
                // A part listed twice in the same class is merely redundant.
                if first != index {
                    return Err(ValidationError::MultipleClasses {
                        part: id.clone(),
                        first,
                        second: index,
                    });
                }
            }
            seen.insert(id, index);
        }
        let members: BTreeSet<PartId> = class.iter().cloned().collect();
        let class_id = ClassId(members.iter().next().unwrap().0.clone());
        for m in &members {
            table.class_of.insert(m.clone(), class_id.clone());
        }
        table.members.insert(class_id, members.into_iter().collect());
    }
    for id in parts.keys() {
        if !table.class_of.contains_key(id) {
            let class_id = ClassId(id.0.clone());
            table.class_of.insert(id.clone(), class_id.clone());
            table.members.insert(class_id, vec![id.clone()]);
        }
    }
    Ok(table)
}

fn build_recipes(
    parts: &BTreeMap<PartId, Part>,
    equivalence: &EquivalenceTable,
    declared: &[RecipeEntry],
) -> Result<RecipeTable, ValidationError> {
    let mut table = RecipeTable::default();
    for (index, recipe) in declared.iter().enumerate() {
        for (slot, id) in [("input a", &recipe.a), ("input b", &recipe.b)] {
            if !parts.contains_key(id) {
                return Err(ValidationError::UnknownPart {
                    context: format!("recipe #{index} {slot}"),
                    id: id.clone(),
                });
            }
        }
        let result = parts
            .get(&recipe.result)
            .ok_or_else(|| ValidationError::UnknownPart {
                context: format!("recipe #{index} result"),
                id: recipe.result.clone(),
            })?;
        if result.kind != PartKind::Composite {
            return Err(ValidationError::ResultNotComposite(result.id.clone()));
        }
        let pair = ClassPair::new(
            equivalence.class_of[&recipe.a].clone(),
            equivalence.class_of[&recipe.b].clone(),
        );
        match table.entries.get(&pair) {
            Some(existing) if existing != &recipe.result => {
                return Err(ValidationError::ConflictingRecipe {
                    a: pair.0.clone(),
                    b: pair.1.clone(),
                    first: existing.clone(),
                    second: recipe.result.clone(),
                });
            }
            Some(_) => {}
            None => {
                table.entries.insert(pair, recipe.result.clone());
            }
        }
    }
    Ok(table)
}

/// Computes composite depths over the derivation graph (every member of an
/// input class points at the recipe result), rejecting cycles.
fn assign_depths(
    parts: &mut BTreeMap<PartId, Part>,
    equivalence: &EquivalenceTable,
    recipes: &RecipeTable,
) -> Result<(), ValidationError> {
    let mut inputs: BTreeMap<&PartId, BTreeSet<&PartId>> = BTreeMap::new();
    for (pair, result) in recipes.iter() {
        let set = inputs.entry(result).or_default();
        for class in [pair.first(), pair.second()] {
            set.extend(equivalence.members(class).iter());
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done(u32),
    }

    fn visit<'a>(
        id: &'a PartId,
        parts: &BTreeMap<PartId, Part>,
        inputs: &BTreeMap<&'a PartId, BTreeSet<&'a PartId>>,
        marks: &mut BTreeMap<&'a PartId, Mark>,
        stack: &mut Vec<&'a PartId>,
    ) -> Result<u32, ValidationError> {
        match marks.get(id) {
            Some(Mark::Done(d)) => return Ok(*d),
            Some(Mark::Active) => {
                let start = stack.iter().position(|p| *p == id).unwrap_or(0);
                let mut cycle: Vec<PartId> = stack[start..].iter().map(|p| (*p).clone()).collect();
                cycle.push(id.clone());
                return Err(ValidationError::Cycle(cycle));
            }
            None => {}
        }
        let part = &parts[id];
        let depth = match (part.kind, inputs.get(id)) {
            (PartKind::Primitive, _) => 0,
            (PartKind::Composite, None) => {
                return Err(ValidationError::UnproducedComposite(id.clone()))
            }
            (PartKind::Composite, Some(deps)) => {
                marks.insert(id, Mark::Active);
                stack.push(id);
                let mut deepest = 0;
                for dep in deps {
                    deepest = deepest.max(visit(dep, parts, inputs, marks, stack)?);
                }
                stack.pop();
                deepest + 1
            }
        };
        marks.insert(id, Mark::Done(depth));
        Ok(depth)
    }

    let ids: Vec<PartId> = parts.keys().cloned().collect();
    let mut depths = BTreeMap::new();
    {
        let mut marks = BTreeMap::new();
        let mut stack = Vec::new();
        for id in &ids {
            let d = visit(id, parts, &inputs, &mut marks, &mut stack)?;
            depths.insert(id.clone(), d);
        }
    }
    for (id, d) in depths {
        parts.get_mut(&id).unwrap().depth = d;
    }
    Ok(())
}

fn build_node(
    parts: &BTreeMap<PartId, Part>,
    character: &str,
    node: &NodeDocument,
) -> Result<DecompositionNode, ValidationError> {
    match node {
        NodeDocument::Leaf { part } => {
            let p = parts.get(part).ok_or_else(|| ValidationError::UnknownPart {
                context: format!("decomposition of {character:?}"),
                id: part.clone(),
            })?;
            if p.kind != PartKind::Primitive {
                return Err(ValidationError::LeafNotPrimitive {
                    character: character.to_owned(),
                    part: part.clone(),
                });
            }
            Ok(DecompositionNode::Leaf(part.clone()))
        }
        NodeDocument::Join { op, left, right } => {
            let op = CompositionOp::from_symbol(op).ok_or_else(|| ValidationError::BadOperator {
                character: character.to_owned(),
                op: op.clone(),
            })?;
            Ok(DecompositionNode::Join {
                op,
                left: Box::new(build_node(parts, character, left)?),
                right: Box::new(build_node(parts, character, right)?),
            })
        }
    }
}
