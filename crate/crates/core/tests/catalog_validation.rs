use std::path::PathBuf;

use joinery_core::catalog::{CatalogError, PartCatalog, PartId, ValidationError};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn validation(name: &str) -> ValidationError {
    match PartCatalog::load(fixture(name)) {
        Err(CatalogError::Validation(e)) => e,
        other => panic!("{name}: expected a validation error, got {other:?}"),
    }
}

#[test]
fn fixture_loads() {
    let catalog = PartCatalog::load(fixture("catalog_mini.json")).unwrap();
    assert_eq!(catalog.part_count(), 20);
    assert_eq!(catalog.lexicon()["cat"], "猫");
}

#[test]
fn duplicate_id_named() {
    assert_eq!(
        validation("corrupt/duplicate_id.json"),
        ValidationError::DuplicatePart(PartId::from("P05"))
    );
}

#[test]
fn dual_class_named() {
    match validation("corrupt/dual_class.json") {
        ValidationError::MultipleClasses { part, first, second } => {
            assert_eq!(part, PartId::from("P07"));
            assert_eq!((first, second), (0, 1));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn dangling_result_named() {
    let err = validation("corrupt/dangling_result.json");
    match &err {
        ValidationError::UnknownPart { id, .. } => assert_eq!(id, &PartId::from("P999")),
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().contains("P999"));
}

#[test]
fn recipe_cycle_named() {
    match validation("corrupt/recipe_cycle.json") {
        ValidationError::Cycle(path) => {
            assert!(path.contains(&PartId::from("P08")));
            assert!(path.contains(&PartId::from("P12")));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn syntax_errors_carry_position() {
    match PartCatalog::from_json(b"{\n  \"version\": 1,\n  \"parts\": [,]\n}") {
        Err(CatalogError::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn degenerate_documents() {
    let empty = br#"{"version":1,"parts":[],"recipes":[],"decompositions":{},"lexicon":{}}"#;
    assert!(matches!(
        PartCatalog::from_json(empty),
        Err(CatalogError::Validation(ValidationError::EmptyParts))
    ));
    let version = br#"{"version":2,"parts":[],"recipes":[],"decompositions":{},"lexicon":{}}"#;
    assert!(matches!(
        PartCatalog::from_json(version),
        Err(CatalogError::Validation(ValidationError::UnsupportedVersion(2)))
    ));
    let missing = br#"{"parts":[],"recipes":[],"decompositions":{},"lexicon":{}}"#;
    assert!(matches!(PartCatalog::from_json(missing), Err(CatalogError::Parse { .. })));
    assert!(matches!(
        PartCatalog::load(fixture("absent.json")),
        Err(CatalogError::Io { .. })
    ));
}

#[test]
fn conflicting_duplicate_recipe_rejected() {
    let text = std::fs::read_to_string(fixture("catalog_mini.json")).unwrap();
    // 人 is equivalent to 亻, so 人+木 restates 休's recipe; pointing it
    // elsewhere conflicts.
    let conflicted = text.replacen(
        r#""recipes": ["#,
        r#""recipes": [{"a": "P07", "b": "P08", "result": "P17"},"#,
        1,
    );
    assert_ne!(conflicted, text);
    assert!(matches!(
        PartCatalog::from_json(conflicted.as_bytes()),
        Err(CatalogError::Validation(ValidationError::ConflictingRecipe { .. }))
    ));
    let restated = text.replacen(
        r#""recipes": ["#,
        r#""recipes": [{"a": "P08", "b": "P07", "result": "P16"},"#,
        1,
    );
    assert!(PartCatalog::from_json(restated.as_bytes()).is_ok());
}

#[test]
fn document_round_trip() {
    let catalog = PartCatalog::load(fixture("catalog_mini.json")).unwrap();
    let again = PartCatalog::from_document(catalog.to_document()).unwrap();
    assert_eq!(again.part_count(), catalog.part_count());
    for a in catalog.parts() {
        for b in catalog.parts() {
            assert_eq!(again.splice(&a.id, &b.id), catalog.splice(&a.id, &b.id));
        }
    }
}
