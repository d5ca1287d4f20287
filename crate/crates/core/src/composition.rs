//! Pure splice algebra over a loaded [`PartCatalog`].

use std::collections::BTreeMap;

use crate::catalog::{ClassId, ClassPair, DecompositionNode, PartCatalog, PartId};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CompositionError {
    #[error("unknown part {0}")]
    UnknownPart(PartId),
    /// Carries the canonical class pair, so the error is as symmetric as
    /// the lookup.
    #[error("no recipe pairs class {} with class {}", .0.first(), .0.second())]
    NoRecipe(ClassPair),
    #[error("no decomposition for character {0:?}")]
    UnknownCharacter(String),
}

/// One pairwise join of an assembly plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpliceStep {
    pub left: PartId,
    pub right: PartId,
    pub result: PartId,
}

impl PartCatalog {
    pub fn canonicalize(&self, part: &PartId) -> Result<&ClassId, CompositionError> {
        self.equivalence()
            .class_of(part)
            .ok_or_else(|| CompositionError::UnknownPart(part.clone()))
    }

    /// Looks up the recipe for the classes of `a` and `b`. Symmetric in its
    /// arguments; a missing entry is reported as [`CompositionError::NoRecipe`].
    pub fn splice(&self, a: &PartId, b: &PartId) -> Result<PartId, CompositionError> {
        let pair = ClassPair::new(self.canonicalize(a)?.clone(), self.canonicalize(b)?.clone());
        self.recipes()
            .get(&pair)
            .cloned()
            .ok_or(CompositionError::NoRecipe(pair))
    }

    pub fn verify_assembly(&self, assembled: &PartId, target: &str) -> Result<bool, CompositionError> {
        let part = self
            .part(assembled)
            .ok_or_else(|| CompositionError::UnknownPart(assembled.clone()))?;
        Ok(part.label == target)
    }

    /// Post-order splice sequence that builds `target` from its primitives.
    ///
    /// Intermediate results are looked up through [`PartCatalog::splice`]; if
    /// the tree does not fold, the failing pair comes back as `NoRecipe`.
    pub fn assembly_plan(&self, target: &str) -> Result<Vec<SpliceStep>, CompositionError> {
        let tree = self
            .decomposition(target)
            .ok_or_else(|| CompositionError::UnknownCharacter(target.to_owned()))?;
        let mut steps = Vec::with_capacity(tree.root.internal_nodes());
        self.plan_node(&tree.root, &mut steps)?;
        Ok(steps)
    }

    fn plan_node(
        &self,
        node: &DecompositionNode,
        steps: &mut Vec<SpliceStep>,
    ) -> Result<PartId, CompositionError> {
        match node {
            DecompositionNode::Leaf(p) => Ok(p.clone()),
            DecompositionNode::Join { left, right, .. } => {
                let left = self.plan_node(left, steps)?;
                let right = self.plan_node(right, steps)?;
                let result = self.splice(&left, &right)?;
                steps.push(SpliceStep {
                    left,
                    right,
                    result: result.clone(),
                });
                Ok(result)
            }
        }
    }

    /// For each part, how many recipes name its class as an input.
    pub fn reusability(&self) -> BTreeMap<PartId, usize> {
        let mut per_class: BTreeMap<&ClassId, usize> = BTreeMap::new();
        for (pair, _) in self.recipes().iter() {
            *per_class.entry(pair.first()).or_default() += 1;
            if pair.second() != pair.first() {
                *per_class.entry(pair.second()).or_default() += 1;
            }
        }
        self.parts()
            .map(|p| {
                let class = self.equivalence().class_of(&p.id).expect("closed catalog");
                (p.id.clone(), per_class.get(class).copied().unwrap_or(0))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini() -> PartCatalog {
        PartCatalog::from_json(include_bytes!("../../../fixtures/catalog_mini.json")).unwrap()
    }

    fn id(cat: &PartCatalog, label: &str) -> PartId {
        cat.part_by_label(label).unwrap().id.clone()
    }

    #[test]
    fn canonicalize_examples() {
        let cat = mini();
        let ri = id(&cat, "日");
        assert_eq!(cat.canonicalize(&ri).unwrap().as_str(), "P01");
        assert_eq!(
            cat.canonicalize(&id(&cat, "亻")).unwrap(),
            cat.canonicalize(&id(&cat, "人")).unwrap()
        );
        assert_eq!(
            cat.canonicalize(&PartId::from("PX")),
            Err(CompositionError::UnknownPart(PartId::from("PX")))
        );
    }

    #[test]
    fn splice_examples() {
        let cat = mini();
        let (ri, yue, ming) = (id(&cat, "日"), id(&cat, "月"), id(&cat, "明"));
        assert_eq!(cat.splice(&ri, &yue).unwrap(), ming);
        assert_eq!(cat.splice(&yue, &ri).unwrap(), ming);
        assert_eq!(
            cat.splice(&ri, &ri),
            Err(CompositionError::NoRecipe(ClassPair::new(
                cat.canonicalize(&ri).unwrap().clone(),
                cat.canonicalize(&ri).unwrap().clone()
            )))
        );
        // Equivalent radical variant substitutes.
        assert_eq!(cat.splice(&id(&cat, "人"), &id(&cat, "木")).unwrap(), id(&cat, "休"));
        assert!(matches!(
            cat.splice(&ri, &PartId::from("PX")),
            Err(CompositionError::UnknownPart(_))
        ));
    }

    #[test]
    fn verify_examples() {
        let cat = mini();
        assert!(cat.verify_assembly(&id(&cat, "猫"), "猫").unwrap());
        assert!(!cat.verify_assembly(&id(&cat, "明"), "猫").unwrap());
        assert!(cat.verify_assembly(&id(&cat, "明"), "明").unwrap());
        assert!(cat.verify_assembly(&PartId::from("PX"), "明").is_err());
    }

    #[test]
    fn plan_examples() {
        let cat = mini();
        assert_eq!(
            cat.assembly_plan("明").unwrap(),
            vec![SpliceStep {
                left: id(&cat, "日"),
                right: id(&cat, "月"),
                result: id(&cat, "明"),
            }]
        );
        let plan = cat.assembly_plan("葆").unwrap();
        assert_eq!(plan.len(), 3);
        assert_eq!(plan[0].result, id(&cat, "呆"));
        assert_eq!(plan[1].result, id(&cat, "保"));
        assert_eq!(plan[2].result, id(&cat, "葆"));
        assert_eq!(
            cat.assembly_plan("Q"),
            Err(CompositionError::UnknownCharacter("Q".into()))
        );
    }

    #[test]
    fn reusability_counts() {
        let cat = mini();
        let reuse = cat.reusability();
        // 木 feeds 休, 呆 and 李.
        assert_eq!(reuse[&id(&cat, "木")], 3);
        // 亻 and 人 share a class feeding 休 and 保.
        assert_eq!(reuse[&id(&cat, "亻")], 2);
        assert_eq!(reuse[&id(&cat, "人")], 2);
        assert_eq!(reuse[&id(&cat, "女")], 0);
        assert_eq!(reuse[&id(&cat, "葆")], 0);
    }
}
