use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use joinery_core::digest::Digest64;
use joinery_core::pipeline::{
    build_extract_prompt, build_image_prompt, extract_core_character, AssetRef, AssetStore,
    Backends, ChatBackend, FailingBackend, ImageBackend, JobKind, JobState, MediaKind, MockChat,
    MockImage, MockModel3d, Model3dBackend, Pipeline, PipelineConfig, PipelineError,
    PipelineRequest, PipelineResult, PromptKind, PromptSpec, RemoteJob, RemoteStatus, RetryPolicy,
};
use joinery_core::testkit::fixture_catalog;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn extract_body_matches_golden() {
    let spec = build_extract_prompt("a cute cat").unwrap();
    assert_eq!(spec.kind, PromptKind::Chat);
    assert_eq!(spec.model_name, "glm-4-flash");
    assert_eq!(spec.body.as_bytes(), golden("extract_a_cute_cat.json"));
    assert_eq!(build_extract_prompt("a cute cat").unwrap(), spec);
}

#[test]
fn extract_body_escapes_user_text() {
    let spec = build_extract_prompt("she said \"hi\"\n 小猫").unwrap();
    assert_eq!(spec.body.as_bytes(), golden("extract_escaped.json"));
}

#[test]
fn image_body_matches_golden() {
    let spec = build_image_prompt("猫").unwrap();
    assert_eq!(spec.kind, PromptKind::Image);
    assert_eq!(spec.model_name, "cogView-4-250304");
    assert_eq!(spec.body.as_bytes(), golden("image_cat.json"));
    for subject in ["明", "a long phrase", "\"quoted\""] {
        let v: serde_json::Value =
            serde_json::from_str(&build_image_prompt(subject).unwrap().body).unwrap();
        assert_eq!(v["size"], "512x512");
    }
}

#[test]
fn prompt_preconditions() {
    assert!(matches!(build_extract_prompt(""), Err(PipelineError::EmptyText)));
    assert!(matches!(build_image_prompt(" "), Err(PipelineError::EmptyText)));
    assert!(build_extract_prompt(&"x".repeat(512)).is_ok());
    assert!(matches!(
        build_extract_prompt(&"x".repeat(513)),
        Err(PipelineError::TextTooLong(513))
    ));
}

struct Canned(&'static str);

impl ChatBackend for Canned {
    fn reply(&self, _: &str) -> Result<String, PipelineError> {
        Ok(self.0.to_owned())
    }
}

#[test]
fn core_character_extraction() {
    let mock = MockChat::new(fixture_catalog().lexicon().clone());
    assert_eq!(extract_core_character(&mock, "a cute cat").unwrap(), "猫");
    assert_eq!(extract_core_character(&mock, "A KITTEN!").unwrap(), "猫");
    assert!(matches!(
        extract_core_character(&mock, "zzz unknown zzz"),
        Err(PipelineError::NoLexiconMatch(_))
    ));
    assert!(matches!(
        extract_core_character(&Canned("小猫"), "a cat"),
        Err(PipelineError::NotOneCharacter(_))
    ));
    assert_eq!(extract_core_character(&Canned(" 猫\n"), "a cat").unwrap(), "猫");
    assert!(matches!(
        extract_core_character(&Canned(""), "a cat"),
        Err(PipelineError::NotOneCharacter(_))
    ));
}

#[test]
fn longest_keyword_wins() {
    let lexicon: BTreeMap<String, String> = [("cat", "猫"), ("catalog", "录"), ("dog", "犬")]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let mock = MockChat::new(lexicon);
    assert_eq!(mock.reply("my catalog").unwrap(), "录");
    // Equal length: the alphabetically first keyword.
    assert_eq!(mock.reply("a dog and a cat").unwrap(), "猫");
}

fn mock_pipeline(dir: &std::path::Path, ticks: u32) -> Pipeline {
    Pipeline::from_config(
        &PipelineConfig {
            asset_dir: dir.to_path_buf(),
            mock_model_ticks: ticks,
            ..PipelineConfig::default()
        },
        fixture_catalog().lexicon(),
    )
    .unwrap()
}

fn image_of(result: &PipelineResult) -> AssetRef {
    match result {
        PipelineResult::ImageReady { asset, .. } => asset.clone(),
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_job_completes_with_digest_uri() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = mock_pipeline(dir.path(), 3);
    let image = AssetRef {
        uri: "mock://image/x".into(),
        media: MediaKind::Png,
        digest: Digest64(0xabc),
    };
    let job = pipeline.submit(PipelineRequest::GenerateModel3d {
        model_id: "m1".into(),
        task_id: "t1".into(),
        image,
    });
    assert_eq!(pipeline.poll_job(job).unwrap().state, JobState::Submitted);
    pipeline.tick();
    let poll = pipeline.poll_job(job).unwrap();
    assert_eq!(poll.state, JobState::Running);
    assert!(poll.delivery.is_none());
    pipeline.tick();
    pipeline.tick();
    assert_eq!(pipeline.poll_job(job).unwrap().state, JobState::Running);
    pipeline.tick();
    let poll = pipeline.poll_job(job).unwrap();
    match poll.delivery {
        Some(PipelineResult::ModelReady { model_id, asset }) => {
            assert_eq!(model_id.as_str(), "m1");
            assert_eq!(asset.uri, "mock://model/0000000000000abc");
            assert_eq!(asset.media, MediaKind::Glb);
            assert!(pipeline.store().path_of(&asset).exists());
        }
        other => panic!("{other:?}"),
    }
    // Second poll: same state, nothing handed over.
    let again = pipeline.poll_job(job).unwrap();
    assert!(again.state.is_terminal());
    assert!(again.delivery.is_none());
    assert!(pipeline.drain().is_empty());
    assert!(pipeline.poll_job("j99".parse().unwrap()).is_err());
}

#[test]
fn failing_backend_fails_after_retries() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::from_config(
        &PipelineConfig {
            asset_dir: dir.path().to_path_buf(),
            mock_fail: vec![JobKind::Image],
            max_retries: 2,
            ..PipelineConfig::default()
        },
        fixture_catalog().lexicon(),
    )
    .unwrap();
    let job = pipeline.submit(PipelineRequest::GenerateImage {
        task_id: "t1".into(),
        subject: "猫".into(),
    });
    for _ in 0..10 {
        pipeline.tick();
    }
    let state = pipeline.job(job).unwrap();
    assert!(matches!(state.state, JobState::Failed { .. }));
    assert_eq!(state.attempts, 3);
    assert!(matches!(
        pipeline.drain().as_slice(),
        [PipelineResult::ImageFailed { .. }]
    ));
}

#[test]
fn chain_yields_three_results_in_task_order() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = mock_pipeline(dir.path(), 2);
    pipeline.submit(PipelineRequest::ExtractCoreCharacter {
        task_id: "t1".into(),
        text: "a cute cat".into(),
    });
    let mut results = Vec::new();
    for _ in 0..10 {
        pipeline.tick();
        for result in pipeline.drain() {
            match &result {
                PipelineResult::CoreCharacterExtracted { task_id, character } => {
                    pipeline.submit(PipelineRequest::GenerateImage {
                        task_id: task_id.clone(),
                        subject: character.clone(),
                    });
                }
                PipelineResult::ImageReady { task_id, asset } => {
                    pipeline.submit(PipelineRequest::GenerateModel3d {
                        model_id: "m1".into(),
                        task_id: task_id.clone(),
                        image: asset.clone(),
                    });
                }
                _ => {}
            }
            results.push(result);
        }
    }
    let kinds: Vec<&str> = results
        .iter()
        .map(|r| match r {
            PipelineResult::CoreCharacterExtracted { .. } => "core",
            PipelineResult::ImageReady { .. } => "image",
            PipelineResult::ModelReady { .. } => "model",
            _ => "failure",
        })
        .collect();
    assert_eq!(kinds, ["core", "image", "model"]);
    let image = image_of(&results[1]);
    assert_eq!(image.media, MediaKind::Png);
    let stored = pipeline.store().read(&image).unwrap();
    assert_eq!(Digest64::of(&stored), image.digest);
}

/// Whole-chain transcript under mocks, keyed by tick.
fn transcript(texts: &[&str], schedule: &[usize], dir: &std::path::Path) -> Vec<(usize, PipelineResult)> {
    let pipeline = mock_pipeline(dir, 2);
    let mut out = Vec::new();
    let mut model = 0;
    for (tick, submits) in schedule.iter().enumerate() {
        for text in texts.iter().take(*submits) {
            pipeline.submit(PipelineRequest::ExtractCoreCharacter {
                task_id: format!("t{tick}").as_str().into(),
                text: (*text).to_owned(),
            });
        }
        pipeline.tick();
        for result in pipeline.drain() {
            match &result {
                PipelineResult::CoreCharacterExtracted { task_id, character } => {
                    pipeline.submit(PipelineRequest::GenerateImage {
                        task_id: task_id.clone(),
                        subject: character.clone(),
                    });
                }
                PipelineResult::ImageReady { task_id, asset } => {
                    model += 1;
                    pipeline.submit(PipelineRequest::GenerateModel3d {
                        model_id: format!("m{model}").as_str().into(),
                        task_id: task_id.clone(),
                        image: asset.clone(),
                    });
                }
                _ => {}
            }
            out.push((tick, result));
        }
    }
    out
}

#[test]
fn mock_pipeline_is_a_function_of_text_and_schedule() {
    let texts = ["a cute cat", "a bright moon", "zzz unknown zzz", "a sour plum"];
    let schedule = [2, 0, 1, 0, 0, 3, 0, 0, 0, 0, 0, 0];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = transcript(&texts, &schedule, a.path());
    let second = transcript(&texts, &schedule, b.path());
    assert_eq!(first, second);
    assert!(first
        .iter()
        .any(|(_, r)| matches!(r, PipelineResult::ExtractionFailed { .. })));
    assert!(first
        .iter()
        .any(|(_, r)| matches!(r, PipelineResult::ModelReady { .. })));
    let shifted = transcript(&texts, &[0, 2, 1, 0, 0, 3, 0, 0, 0, 0, 0, 0], b.path());
    assert_ne!(first, shifted);
}

/// Fails each call with the given probability, from a seeded stream.
struct Flaky {
    rng: Mutex<ChaCha8Rng>,
    fail: f64,
    ticks: u32,
}

impl Flaky {
    fn roll(&self) -> Result<(), PipelineError> {
        if self.rng.lock().unwrap().gen_bool(self.fail) {
            Err(PipelineError::Backend("flaky".into()))
        } else {
            Ok(())
        }
    }
}

impl ChatBackend for Flaky {
    fn reply(&self, _: &str) -> Result<String, PipelineError> {
        self.roll().map(|_| "猫".to_owned())
    }
}

impl ImageBackend for Flaky {
    fn generate(&self, _: &PromptSpec) -> Result<String, PipelineError> {
        self.roll().map(|_| "mock://image/flaky".to_owned())
    }
}

impl Model3dBackend for Flaky {
    fn submit(&self, image: &AssetRef) -> Result<RemoteJob, PipelineError> {
        self.roll().map(|_| RemoteJob(image.digest.to_hex()))
    }

    fn status(&self, job: &RemoteJob, polls: u32) -> Result<RemoteStatus, PipelineError> {
        self.roll()?;
        if self.rng.lock().unwrap().gen_ratio(1, 20) {
            return Ok(RemoteStatus::Failed {
                reason: "remote gave up".into(),
            });
        }
        Ok(if polls + 1 >= self.ticks {
            RemoteStatus::Done {
                uri: format!("mock://model/{}", job.0),
            }
        } else {
            RemoteStatus::Pending
        })
    }
}

#[test]
fn job_interleavings_respect_the_state_machine() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flaky = Arc::new(Flaky {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)),
            fail: rng.gen_range(0.0..0.6),
            ticks: rng.gen_range(1..4),
        });
        let max_retries = rng.gen_range(0..4);
        let pipeline = Pipeline::new(
            Backends {
                chat: flaky.clone(),
                image: flaky.clone(),
                model3d: flaky.clone(),
            },
            AssetStore::offline(dir.path()),
            RetryPolicy {
                max_retries,
                backoff: Duration::ZERO,
            },
        );
        let mut submitted = Vec::new();
        let mut delivered: BTreeMap<_, usize> = BTreeMap::new();
        let mut drained = 0;
        let mut terminal: BTreeMap<_, JobState> = BTreeMap::new();
        let image = AssetRef {
            uri: "mock://image/seed".into(),
            media: MediaKind::Png,
            digest: Digest64(seed),
        };
        for _ in 0..rng.gen_range(5..40) {
            match rng.gen_range(0..10) {
                0..=2 => {
                    let request = match rng.gen_range(0..3) {
                        0 => PipelineRequest::ExtractCoreCharacter {
                            task_id: "t1".into(),
                            text: "a cat".into(),
                        },
                        1 => PipelineRequest::GenerateImage {
                            task_id: "t1".into(),
                            subject: "猫".into(),
                        },
                        _ => PipelineRequest::GenerateModel3d {
                            model_id: "m1".into(),
                            task_id: "t1".into(),
                            image: image.clone(),
                        },
                    };
                    submitted.push(pipeline.submit(request));
                }
                3..=5 => pipeline.tick(),
                6..=8 if !submitted.is_empty() => {
                    let job = submitted[rng.gen_range(0..submitted.len())];
                    if pipeline.poll_job(job).unwrap().delivery.is_some() {
                        *delivered.entry(job).or_default() += 1;
                    }
                }
                _ => drained += pipeline.drain().len(),
            }
            for job in pipeline.jobs() {
                assert!(job.attempts <= max_retries + 1, "seed {seed}: {job:?}");
                if let Some(previous) = terminal.get(&job.job_id) {
                    assert_eq!(previous, &job.state, "seed {seed}: left a terminal state");
                } else if job.state.is_terminal() {
                    terminal.insert(job.job_id, job.state.clone());
                }
            }
        }
        // Settle; afterwards every job is terminal and the deliveries seen
        // through both channels add up to exactly one per job.
        for _ in 0..20 {
            pipeline.tick();
        }
        drained += pipeline.drain().len();
        assert!(pipeline.drain().is_empty(), "seed {seed}");
        for job in &submitted {
            assert!(pipeline.poll_job(*job).unwrap().delivery.is_none(), "seed {seed}");
        }
        assert!(delivered.values().all(|n| *n == 1), "seed {seed}");
        let jobs = pipeline.jobs();
        assert!(jobs.iter().all(|j| j.state.is_terminal()), "seed {seed}");
        assert_eq!(delivered.len() + drained, jobs.len(), "seed {seed}");
    }
}

#[test]
fn exactly_once_across_poll_and_drain() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pipeline = mock_pipeline(dir.path(), rng.gen_range(1..4));
        let mut jobs = Vec::new();
        for i in 0..rng.gen_range(1..8) {
            jobs.push(pipeline.submit(PipelineRequest::GenerateImage {
                task_id: format!("t{i}").as_str().into(),
                subject: "猫".into(),
            }));
        }
        let mut count: BTreeMap<_, usize> = BTreeMap::new();
        for _ in 0..30 {
            match rng.gen_range(0..3) {
                0 => pipeline.tick(),
                1 => {
                    let job = jobs[rng.gen_range(0..jobs.len())];
                    if pipeline.poll_job(job).unwrap().delivery.is_some() {
                        *count.entry(job).or_default() += 1;
                    }
                }
                _ => {
                    for result in pipeline.drain() {
                        let PipelineResult::ImageReady { task_id, .. } = result else {
                            panic!("unexpected {result:?}");
                        };
                        let index: usize = task_id.as_str()[1..].parse().unwrap();
                        *count.entry(jobs[index]).or_default() += 1;
                    }
                }
            }
        }
        pipeline.tick();
        for result in pipeline.drain() {
            let PipelineResult::ImageReady { task_id, .. } = result else {
                panic!();
            };
            let index: usize = task_id.as_str()[1..].parse().unwrap();
            *count.entry(jobs[index]).or_default() += 1;
        }
        for job in &jobs {
            assert_eq!(count.get(job), Some(&1), "seed {seed}");
        }
    }
}

#[test]
fn failing_backends_map_to_failure_results() {
    let dir = tempfile::tempdir().unwrap();
    let failing = Arc::new(FailingBackend {
        reason: "down".into(),
    });
    let pipeline = Pipeline::new(
        Backends {
            chat: failing.clone(),
            image: Arc::new(MockImage),
            model3d: Arc::new(MockModel3d { ticks: 1 }),
        },
        AssetStore::offline(dir.path()),
        RetryPolicy {
            max_retries: 0,
            backoff: Duration::ZERO,
        },
    );
    pipeline.submit(PipelineRequest::ExtractCoreCharacter {
        task_id: "t1".into(),
        text: "a cat".into(),
    });
    pipeline.tick();
    match pipeline.drain().as_slice() {
        [PipelineResult::ExtractionFailed { task_id, reason }] => {
            assert_eq!(task_id.as_str(), "t1");
            assert!(reason.contains("down"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn asset_store_is_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let store = AssetStore::offline(dir.path());
    let a = store.fetch("mock://image/abc", MediaKind::Png).unwrap();
    let b = store.fetch("mock://image/abc", MediaKind::Png).unwrap();
    assert_eq!(a.digest, b.digest);
    assert_eq!(
        store.path_of(&a),
        dir.path().join(format!("{}.png", a.digest.to_hex()))
    );
    assert_eq!(Digest64::of(&store.read(&a).unwrap()), a.digest);
    assert!(store.fetch("::nope::", MediaKind::Png).is_err());
}
