use std::fmt::Write as _;

use joinery_core::{PartCatalog, PartKind};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct CatalogReport {
    pub parts: usize,
    pub primitives: usize,
    pub composites: usize,
    pub classes: usize,
    pub recipes: usize,
    pub characters: usize,
    pub foldable: usize,
    pub folds: Vec<FoldLine>,
    pub reusability: Vec<ReuseLine>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldLine {
    pub character: String,
    pub depth: u32,
    pub steps: usize,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReuseLine {
    pub part: String,
    pub label: String,
    pub recipes: usize,
}

impl CatalogReport {
    pub fn all_foldable(&self) -> bool {
        self.foldable == self.characters
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "parts: {} ({} primitive, {} composite)",
            self.parts, self.primitives, self.composites
        );
        let _ = writeln!(out, "classes: {}", self.classes);
        let _ = writeln!(out, "recipes: {}", self.recipes);
        let _ = writeln!(out, "characters: {}", self.characters);
        for f in &self.folds {
            match &f.error {
                None => {
                    let _ = writeln!(
                        out,
                        "  fold {} ok ({} splices, depth {})",
                        f.character, f.steps, f.depth
                    );
                }
                Some(e) => {
                    let _ = writeln!(out, "  fold {} FAILED: {e}", f.character);
                }
            }
        }
        let _ = writeln!(out, "{}/{} characters foldable", self.foldable, self.characters);
        let _ = writeln!(out, "reusability (recipes using each part's class):");
        for r in &self.reusability {
            let _ = writeln!(out, "  {} {} {}", r.part, r.label, r.recipes);
        }
        out
    }
}

/// Counts, a fold of every decomposition through the recipe table, and
/// per-part reuse.
pub fn check_catalog(catalog: &PartCatalog) -> CatalogReport {
    let mut folds = Vec::new();
    for tree in catalog.decompositions() {
        let depth = catalog.part(&tree.root_part).map(|p| p.depth).unwrap_or(0);
        let line = match catalog.assembly_plan(&tree.character) {
            Ok(plan) => {
                let last = plan.last().map(|s| s.result.clone());
                let ok = last.as_ref() == Some(&tree.root_part);
                FoldLine {
                    character: tree.character.clone(),
                    depth,
                    steps: plan.len(),
                    ok,
                    error: (!ok).then(|| {
                        format!(
                            "folds to {} instead of {}",
                            last.map(|p| p.to_string()).unwrap_or_default(),
                            tree.root_part
                        )
                    }),
                }
            }
            Err(e) => FoldLine {
                character: tree.character.clone(),
                depth,
                steps: 0,
                ok: false,
                error: Some(e.to_string()),
            },
        };
        folds.push(line);
    }
    let reuse = catalog.reusability();
    let reusability = catalog
        .parts()
        .map(|p| ReuseLine {
            part: p.id.to_string(),
            label: p.label.clone(),
            recipes: reuse[&p.id],
        })
        .collect();
    let primitives = catalog.parts().filter(|p| p.kind == PartKind::Primitive).count();
    CatalogReport {
        parts: catalog.part_count(),
        primitives,
        composites: catalog.part_count() - primitives,
        classes: catalog.equivalence().class_count(),
        recipes: catalog.recipes().len(),
        characters: folds.len(),
        foldable: folds.iter().filter(|f| f.ok).count(),
        folds,
        reusability,
    }
}
