//! Independent reference model of a catalog file, read straight from the
//! JSON with no use of the crate's loader or lookup code.

use std::collections::BTreeMap;

use serde_json::Value;

pub struct OracleCatalog {
    pub labels: BTreeMap<String, String>,
    /// Part id to class representative.
    class: BTreeMap<String, String>,
    recipes: BTreeMap<(String, String), String>,
    trees: BTreeMap<String, Value>,
}

fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
    let mut root = x.to_owned();
    while parent[&root] != root {
        root = parent[&root].clone();
    }
    root
}

impl OracleCatalog {
    pub fn from_json(text: &str) -> Self {
        let doc: Value = serde_json::from_str(text).expect("oracle input is JSON");
        let mut labels = BTreeMap::new();
        for p in doc["parts"].as_array().unwrap() {
            labels.insert(
                p["id"].as_str().unwrap().to_owned(),
                p["label"].as_str().unwrap().to_owned(),
            );
        }
        let mut parent: BTreeMap<String, String> =
            labels.keys().map(|k| (k.clone(), k.clone())).collect();
        for group in doc["equivalence"].as_array().into_iter().flatten() {
            let ids: Vec<&str> = group.as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
            for pair in ids.windows(2) {
                let a = find(&mut parent, pair[0]);
                let b = find(&mut parent, pair[1]);
                // Keep the smaller id as the representative.
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent.insert(hi, lo);
            }
        }
        let class: BTreeMap<String, String> = labels
            .keys()
            .map(|k| (k.clone(), find(&mut parent, k)))
            .collect();
        let mut recipes = BTreeMap::new();
        for r in doc["recipes"].as_array().unwrap() {
            let a = class[r["a"].as_str().unwrap()].clone();
            let b = class[r["b"].as_str().unwrap()].clone();
            let key = if a <= b { (a, b) } else { (b, a) };
            recipes.insert(key, r["result"].as_str().unwrap().to_owned());
        }
        let trees = doc["decompositions"]
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        OracleCatalog {
            labels,
            class,
            recipes,
            trees,
        }
    }

    pub fn part_ids(&self) -> Vec<String> {
        self.labels.keys().cloned().collect()
    }

    pub fn same_class(&self, a: &str, b: &str) -> bool {
        self.class[a] == self.class[b]
    }

    pub fn splice(&self, a: &str, b: &str) -> Option<String> {
        let (x, y) = (self.class[a].clone(), self.class[b].clone());
        let key = if x <= y { (x, y) } else { (y, x) };
        self.recipes.get(&key).cloned()
    }

    pub fn characters(&self) -> Vec<String> {
        self.trees.keys().cloned().collect()
    }

    /// Height of the character's tree (a bare leaf has height 0).
    pub fn tree_depth(&self, character: &str) -> usize {
        fn height(node: &Value) -> usize {
            match node.get("part") {
                Some(_) => 0,
                None => 1 + height(&node["left"]).max(height(&node["right"])),
            }
        }
        height(&self.trees[character])
    }

    pub fn internal_nodes(&self, character: &str) -> usize {
        fn count(node: &Value) -> usize {
            match node.get("part") {
                Some(_) => 0,
                None => 1 + count(&node["left"]) + count(&node["right"]),
            }
        }
        count(&self.trees[character])
    }

    /// Folds the tree bottom-up with the oracle's own lookup.
    pub fn fold(&self, character: &str) -> Option<String> {
        fn go(o: &OracleCatalog, node: &Value) -> Option<String> {
            if let Some(p) = node.get("part") {
                return Some(p.as_str()?.to_owned());
            }
            let l = go(o, &node["left"])?;
            let r = go(o, &node["right"])?;
            o.splice(&l, &r)
        }
        go(self, &self.trees[character])
    }
}
