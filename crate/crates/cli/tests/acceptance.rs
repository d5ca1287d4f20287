//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p joinery-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use joinery_cli::report::check_catalog;
use joinery_cli::script::Script;
use joinery_cli::simulate::simulate;
use joinery_core::catalog::{CatalogError, PartCatalog, ValidationError};
use joinery_core::composition::CompositionError;
use joinery_core::pipeline::{build_extract_prompt, build_image_prompt};
use joinery_core::session::{
    read_log, replay, Action, CardState, Event, EventKind, Location, ModelState, Role, UserId,
    WorldState, Zone,
};
use joinery_core::testkit::oracle::OracleCatalog;
use joinery_core::testkit::{fixture_catalog, fixture_config, Auditor, Driver, FIXTURE_CATALOG};
use joinery_server::{start, Clock, PipelineTick, ProtocolClient, ServerConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn p1_pair_symmetry() -> Result<String, String> {
    let catalog = fixture_catalog();
    let oracle = OracleCatalog::from_json(FIXTURE_CATALOG);
    let ids: Vec<_> = catalog.parts().map(|p| p.id.clone()).collect();
    let (mut pairs, mut hits, mut substitutions) = (0, 0, 0);
    for a in &ids {
        for b in &ids {
            pairs += 1;
            let ab = catalog.splice(a, b);
            ensure!(ab == catalog.splice(b, a), "{a}+{b} is not symmetric");
            match (&ab, oracle.splice(a.as_str(), b.as_str())) {
                (Ok(got), Some(want)) => {
                    ensure!(got.as_str() == want, "{a}+{b}: {got} but oracle says {want}");
                    hits += 1;
                }
                (Err(CompositionError::NoRecipe(_)), None) => {}
                (got, want) => return Err(format!("{a}+{b}: {got:?} but oracle says {want:?}")),
            }
            for a2 in &ids {
                if a2 != a && oracle.same_class(a.as_str(), a2.as_str()) {
                    substitutions += 1;
                    ensure!(ab == catalog.splice(a2, b), "{a}~{a2} differ with {b}");
                }
            }
        }
    }
    Ok(format!(
        "{pairs} ordered pairs, {hits} recipe hits, {substitutions} substitutions checked"
    ))
}

fn p2_fold_oracle() -> Result<String, String> {
    let catalog = fixture_catalog();
    let oracle = OracleCatalog::from_json(FIXTURE_CATALOG);
    let characters = oracle.characters();
    let mut deep = 0;
    for c in &characters {
        let plan = catalog
            .assembly_plan(c)
            .map_err(|e| format!("{c}: {e}"))?;
        let built = plan.last().map(|s| s.result.as_str().to_owned());
        ensure!(built == oracle.fold(c), "{c}: plan builds {built:?}, oracle {:?}", oracle.fold(c));
        ensure!(plan.len() == oracle.internal_nodes(c), "{c}: plan has {} steps", plan.len());
        if oracle.tree_depth(c) >= 2 {
            deep += 1;
        }
    }
    ensure!(characters.len() >= 6, "only {} characters", characters.len());
    ensure!(deep >= 2, "only {deep} characters of depth >= 2");
    Ok(format!("{} characters fold, {deep} with depth >= 2", characters.len()))
}

fn p3_randomized_sessions() -> Result<String, String> {
    let (mut commands, mut events) = (0, 0);
    for seed in 0..100u64 {
        let mut driver = Driver::new(seed, 4);
        driver.run(250);
        commands += 250;
        events += driver.log.len();
        let mut auditor = Auditor::new(fixture_catalog(), &fixture_config());
        auditor
            .observe_all(&driver.log)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let live = driver.session.digest();
        let replayed = replay(&fixture_catalog(), &fixture_config(), &driver.log)
            .map_err(|e| format!("seed {seed}: replay failed: {e}"))?
            .digest();
        ensure!(live == replayed, "seed {seed}: live {live} != replay {replayed}");
        ensure!(auditor.world().digest() == live, "seed {seed}: audit fold differs");
    }
    Ok(format!(
        "100 scripts x 250 commands x 4 users, {commands} commands, {events} events audited"
    ))
}

fn p4_cute_cat() -> Result<String, String> {
    let path = root().join("scripts/cat_two_users.json");
    let script = Script::load(&path).map_err(|e| e.to_string())?;
    let catalog = Arc::new(PartCatalog::load(script.catalog.clone().unwrap()).map_err(|e| e.to_string())?);
    let session = script.session.clone().unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log_path = dir.path().join("cat.ndjson");
    let report = tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(simulate(catalog.clone(), session.clone(), &script, &log_path))
        .map_err(|e| e.to_string())?;
    ensure!(report.ok(), "simulation not clean: {report:?}");

    let log = read_log(std::io::BufReader::new(std::fs::File::open(&log_path).unwrap()))
        .map_err(|e| e.to_string())?;
    let find = |pred: &dyn Fn(&EventKind) -> bool| log.iter().position(|e| pred(&e.kind));
    let u1 = UserId::from("u1");
    let u2 = UserId::from("u2");
    let steps: Vec<(&str, Option<usize>)> = vec![
        ("u1 joins as host", find(&|k| matches!(k, EventKind::UserJoined { user_id, role: Role::Host, .. } if *user_id == u1))),
        ("u2 joins as client", find(&|k| matches!(k, EventKind::UserJoined { user_id, role: Role::Client, .. } if *user_id == u2))),
        ("task from speech", find(&|k| matches!(k, EventKind::TaskCreated { text, owner, .. } if text == "a cute cat" && *owner == u1))),
        ("core character 猫", find(&|k| matches!(k, EventKind::CoreCharacterExtracted { character, .. } if character == "猫"))),
        ("image ready", find(&|k| matches!(k, EventKind::ImageReady { .. }))),
        ("u2 splices 苗", find(&|k| matches!(k, EventKind::SpliceSucceeded { part, user_id, .. } if part.as_str() == "P14" && *user_id == u2))),
        ("u1 splices 猫", find(&|k| matches!(k, EventKind::SpliceSucceeded { part, user_id, .. } if part.as_str() == "P15" && *user_id == u1))),
        ("card minted for 猫", find(&|k| matches!(k, EventKind::VerificationSucceeded { character, owner, .. } if character == "猫" && *owner == u1))),
        ("model activated", find(&|k| matches!(k, EventKind::ModelActivated { user_id, .. } if *user_id == u1))),
        ("card spent", find(&|k| matches!(k, EventKind::CardSpent { .. }))),
    ];
    let mut last = 0;
    for (what, at) in &steps {
        let at = at.ok_or_else(|| format!("missing: {what}"))?;
        ensure!(at >= last, "{what} out of order");
        last = at;
    }
    let model_ready = find(&|k| matches!(k, EventKind::ModelReady { .. })).ok_or("no ModelReady")?;
    let activated = steps[8].1.unwrap();
    ensure!(model_ready < activated, "model activated before it was ready");
    ensure!(
        !log.iter().any(|e| matches!(e.kind, EventKind::Error { .. })),
        "unexpected error events"
    );
    let world = replay(&catalog, &session, &log).map_err(|e| e.to_string())?;
    ensure!(world.cards.len() == 1, "{} cards", world.cards.len());
    ensure!(world.cards.values().all(|c| c.state == CardState::Spent), "card not spent");
    ensure!(
        world.models.values().all(|m| m.state == ModelState::Activated),
        "model not activated"
    );
    Ok(format!(
        "{} events, 1 card minted and spent, 1 model activated",
        log.len()
    ))
}

fn p5_prompt_goldens() -> Result<String, String> {
    let golden = |name: &str| std::fs::read(root().join("crates/core/tests/golden").join(name)).unwrap();
    let cases = [
        ("extract_a_cute_cat.json", build_extract_prompt("a cute cat")),
        ("extract_escaped.json", build_extract_prompt("she said \"hi\"\n 小猫")),
        ("image_cat.json", build_image_prompt("猫")),
    ];
    for (name, spec) in &cases {
        let spec = spec.as_ref().map_err(|e| format!("{name}: {e}"))?;
        ensure!(spec.body.as_bytes() == golden(name).as_slice(), "{name} differs");
    }
    Ok(format!("{} bodies byte-identical", cases.len()))
}

fn pick(rng: &mut ChaCha8Rng, view: &WorldState, me: &UserId) -> Action {
    let mine: Vec<_> = view
        .instances
        .iter()
        .filter(|(_, i)| i.location == Location::HeldBy(me.clone()))
        .map(|(id, _)| id.clone())
        .collect();
    let all: Vec<_> = view.instances.keys().cloned().collect();
    match rng.gen_range(0..10) {
        0..=2 if mine.len() >= 2 => Action::Splice {
            instance_a: mine[0].clone(),
            instance_b: mine[1].clone(),
        },
        3 if !mine.is_empty() => Action::PlaceInZone {
            instance_id: mine[0].clone(),
            zone: Zone::VerificationZone,
        },
        4 if !mine.is_empty() => Action::Release {
            zone: Zone::CharacterArea,
        },
        5 => Action::Speak {
            text: ["a cute cat", "a bright moon", "time to rest"].choose(rng).unwrap().to_string(),
        },
        _ => Action::Grab {
            instance_id: all.choose(rng).unwrap().clone(),
        },
    }
}

fn p6_loopback_clients() -> Result<String, String> {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut session = fixture_config();
        session.pipeline.asset_dir = dir.path().to_path_buf();
        let server = start(
            fixture_catalog(),
            session,
            ServerConfig {
                listen: "127.0.0.1:0".parse().unwrap(),
                announce: None,
                pipeline_tick: PipelineTick::Manual,
                clock: Clock::manual(),
                ..ServerConfig::default()
            },
        )
        .await
        .map_err(|e| e.to_string())?;
        let url = server.url();
        let connect = |name: &'static str| {
            let url = url.clone();
            async move { ProtocolClient::connect(&url, name).await.map_err(|e| e.to_string()) }
        };
        let mut clients = vec![connect("a").await?, connect("b").await?, connect("c").await?];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for step in 0..160u64 {
            if step == 70 {
                clients.push(connect("late").await?);
            }
            server.clock().set_ms(step * 40);
            let who = rng.gen_range(0..clients.len());
            let view = clients[who].view().map_err(|e| e.to_string())?;
            let me = clients[who].user_id().clone();
            let action = pick(&mut rng, &view, &me);
            clients[who].command(action).await.map_err(|e| e.to_string())?;
            if step % 5 == 0 {
                clients[who].ping().await.map_err(|e| e.to_string())?;
                server.tick_pipeline().await.map_err(|e| e.to_string())?;
            }
        }
        for c in clients.iter_mut() {
            c.ping().await.map_err(|e| e.to_string())?;
        }
        let inspection = server.inspect().await.map_err(|e| e.to_string())?;
        for c in clients.iter_mut() {
            c.wait_for_seq(inspection.world.last_event_seq)
                .await
                .map_err(|e| e.to_string())?;
        }
        let digest = inspection.snapshot.digest;
        let reference = clients[0].event_frames().to_vec();
        for (i, c) in clients.iter().enumerate() {
            let frames = c.event_frames();
            let offset = reference.len() - frames.len();
            ensure!(frames == &reference[offset..], "client {i} stream differs");
            let view = c.view().map_err(|e| e.to_string())?;
            ensure!(view.digest() == digest, "client {i} view {} != server {digest}", view.digest());
        }
        let late = &clients[3];
        let base = late.welcome().snapshot.event_seq;
        ensure!(base > 50, "late joiner came too early (seq {base})");
        ensure!(
            late.events().first().map(|e: &Event| e.seq) == Some(base + 1),
            "late stream does not start after its snapshot"
        );
        let roles: Vec<Role> = clients.iter().map(|c| c.role()).collect();
        ensure!(
            roles == [Role::Host, Role::Client, Role::Client, Role::Client],
            "roles {roles:?}"
        );
        server.shutdown().await;
        Ok(format!(
            "4 clients, {} events each, late join at seq {base}, digest {digest}",
            reference.len()
        ))
    })
}

fn p7_catalog_validation() -> Result<String, String> {
    let corrupt = root().join("fixtures/corrupt");
    let load = |name: &str| match PartCatalog::load(corrupt.join(name)) {
        Err(CatalogError::Validation(e)) => Ok(e),
        Err(e) => Err(format!("{name}: unexpected {e}")),
        Ok(_) => Err(format!("{name}: accepted")),
    };
    match load("duplicate_id.json")? {
        ValidationError::DuplicatePart(id) if id.as_str() == "P05" => {}
        e => return Err(format!("duplicate_id: {e}")),
    }
    match load("dual_class.json")? {
        ValidationError::MultipleClasses { part, .. } if part.as_str() == "P07" => {}
        e => return Err(format!("dual_class: {e}")),
    }
    match load("dangling_result.json")? {
        ValidationError::UnknownPart { id, .. } if id.as_str() == "P999" => {}
        e => return Err(format!("dangling_result: {e}")),
    }
    match load("recipe_cycle.json")? {
        ValidationError::Cycle(ids) if ids.iter().any(|p| p.as_str() == "P08") => {}
        e => return Err(format!("recipe_cycle: {e}")),
    }
    let report = check_catalog(&fixture_catalog());
    let text = report.render();
    let line = text
        .lines()
        .find(|l| l.ends_with("characters foldable"))
        .ok_or("no fold summary")?;
    ensure!(line == "6/6 characters foldable", "fixture reports {line:?}");
    Ok(format!("4 corrupt catalogs rejected by name, fixture {line:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Option<Duration>, Check); 7] = [
        ("P1", "pair symmetry and equivalence substitution", Some(Duration::from_secs(1)), p1_pair_symmetry),
        ("P2", "fold oracle", Some(Duration::from_secs(1)), p2_fold_oracle),
        ("P3", "randomized sessions replay and keep invariants", Some(Duration::from_secs(30)), p3_randomized_sessions),
        ("P4", "two-user cute-cat script", Some(Duration::from_secs(5)), p4_cute_cat),
        ("P5", "prompt goldens byte-exact", None, p5_prompt_goldens),
        ("P6", "loopback clients agree, late join converges", Some(Duration::from_secs(10)), p6_loopback_clients),
        ("P7", "corrupt catalogs rejected, fixture foldable", None, p7_catalog_validation),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_owned()));
        let elapsed = started.elapsed();
        let timing = match limit {
            Some(l) => format!("{:.2}s, limit {}s", elapsed.as_secs_f64(), l.as_secs()),
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        let verdict = match (&result, limit) {
            (Err(e), _) => Err(e.clone()),
            (Ok(_), Some(l)) if elapsed >= l => Err("over time limit".to_owned()),
            (Ok(detail), _) => Ok(detail.clone()),
        };
        match verdict {
            Ok(detail) => println!("PASS {id} {name}: {detail} ({timing})"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name}: {why} ({timing})");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: 7/7 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 7 criteria failed");
        ExitCode::FAILURE
    }
}
