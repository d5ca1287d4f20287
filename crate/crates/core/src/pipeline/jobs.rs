//! Generation job table.
//!
//! Jobs advance only when [`Pipeline::tick`] runs, so under mock backends the
//! whole pipeline is a function of the submitted work and the tick schedule.
//! Backend calls happen outside the table lock; results are handed to the
//! session exactly once through [`Pipeline::poll_job`] / [`Pipeline::drain`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::assets::AssetStore;
use super::backend::{
    extract_core_character, ChatBackend, ImageBackend, Model3dBackend, RemoteJob, RemoteStatus,
};
use super::prompt::build_image_prompt;
use super::{MediaKind, PipelineError, PipelineRequest, PipelineResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}", self.0)
    }
}

impl std::str::FromStr for JobId {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('j')
            .and_then(|n| n.parse().ok())
            .map(JobId)
            .ok_or_else(|| PipelineError::UnknownJob(s.to_owned()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Extract,
    Image,
    Model3d,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JobState {
    Submitted,
    Running,
    Complete { payload: PipelineResult },
    Failed { reason: String },
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobState::Complete { .. } | JobState::Failed { .. })
    }
}

#[derive(Clone, Debug)]
pub struct GenerationJob {
    pub job_id: JobId,
    pub kind: JobKind,
    pub request: PipelineRequest,
    pub state: JobState,
    pub attempts: u32,
    polls: u32,
    remote: Option<RemoteJob>,
    not_before: Option<Instant>,
    delivered: bool,
}

/// Result of polling one job. `delivery` is `Some` exactly once per job,
/// on the first poll after it reached a terminal state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobPoll {
    pub state: JobState,
    pub delivery: Option<PipelineResult>,
}

#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub image: Arc<dyn ImageBackend>,
    pub model3d: Arc<dyn Model3dBackend>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl RetryPolicy {
    pub fn max_attempts(&self) -> u32 {
        self.max_retries + 1
    }
}

#[derive(Default)]
struct JobTable {
    issued: u64,
    jobs: BTreeMap<JobId, GenerationJob>,
}

pub struct Pipeline {
    backends: Backends,
    store: AssetStore,
    retry: RetryPolicy,
    table: Mutex<JobTable>,
}

/// What one tick decided to do for a job, computed under the lock.
struct Work {
    job_id: JobId,
    request: PipelineRequest,
    polls: u32,
    remote: Option<RemoteJob>,
}

enum StepOutcome {
    Complete(PipelineResult),
    /// Model job submitted or still pending remotely.
    Waiting { remote: RemoteJob, polled: bool },
    /// Transport-level failure: retried until attempts run out.
    Transient(String),
    /// Non-retryable failure.
    Fatal(String),
}

fn kind_of(request: &PipelineRequest) -> JobKind {
    match request {
        PipelineRequest::ExtractCoreCharacter { .. } => JobKind::Extract,
        PipelineRequest::GenerateImage { .. } => JobKind::Image,
        PipelineRequest::GenerateModel3d { .. } => JobKind::Model3d,
    }
}

fn failure_result(request: &PipelineRequest, reason: &str) -> PipelineResult {
    let reason = reason.to_owned();
    match request {
        PipelineRequest::ExtractCoreCharacter { task_id, .. } => PipelineResult::ExtractionFailed {
            task_id: task_id.clone(),
            reason,
        },
        PipelineRequest::GenerateImage { task_id, .. } => PipelineResult::ImageFailed {
            task_id: task_id.clone(),
            reason,
        },
        PipelineRequest::GenerateModel3d { model_id, .. } => PipelineResult::ModelFailed {
            model_id: model_id.clone(),
            reason,
        },
    }
}

fn classify(error: PipelineError) -> StepOutcome {
    match error {
        PipelineError::Backend(m) => StepOutcome::Transient(m),
        PipelineError::Fetch(e) => StepOutcome::Transient(e.to_string()),
        other => StepOutcome::Fatal(other.to_string()),
    }
}

impl Pipeline {
    pub fn new(backends: Backends, store: AssetStore, retry: RetryPolicy) -> Self {
        Pipeline {
            backends,
            store,
            retry,
            table: Mutex::new(JobTable::default()),
        }
    }

    pub fn store(&self) -> &AssetStore {
        &self.store
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    fn table(&self) -> MutexGuard<'_, JobTable> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn submit(&self, request: PipelineRequest) -> JobId {
        let mut table = self.table();
        table.issued += 1;
        let job_id = JobId(table.issued);
        table.jobs.insert(
            job_id,
            GenerationJob {
                job_id,
                kind: kind_of(&request),
                request,
                state: JobState::Submitted,
                attempts: 0,
                polls: 0,
                remote: None,
                not_before: None,
                delivered: false,
            },
        );
        job_id
    }

    pub fn job(&self, job_id: JobId) -> Option<GenerationJob> {
        self.table().jobs.get(&job_id).cloned()
    }

    pub fn jobs(&self) -> Vec<GenerationJob> {
        self.table().jobs.values().cloned().collect()
    }

    /// True when some job has not yet been delivered.
    pub fn has_pending(&self) -> bool {
        self.table().jobs.values().any(|j| !j.delivered)
    }

    /// Advances every runnable job by one step, in job order.
    pub fn tick(&self) {
        let now = Instant::now();
        let work: Vec<Work> = {
            let mut table = self.table();
            table
                .jobs
                .values_mut()
                .filter(|j| !j.state.is_terminal() && j.not_before.map_or(true, |t| t <= now))
                .map(|j| {
                    if j.attempts == 0 {
                        j.attempts = 1;
                    }
                    Work {
                        job_id: j.job_id,
                        request: j.request.clone(),
                        polls: j.polls,
                        remote: j.remote.clone(),
                    }
                })
                .collect()
        };

        let outcomes: Vec<(JobId, StepOutcome)> =
            work.into_iter().map(|w| (w.job_id, self.step(&w))).collect();

        let mut table = self.table();
        for (job_id, outcome) in outcomes {
            let job = table.jobs.get_mut(&job_id).expect("jobs are never removed");
            self.record(job, outcome);
        }
    }

    fn record(&self, job: &mut GenerationJob, outcome: StepOutcome) {
        debug_assert!(!job.state.is_terminal());
        match outcome {
            StepOutcome::Complete(payload) => job.state = JobState::Complete { payload },
            StepOutcome::Waiting { remote, polled } => {
                if polled {
                    job.polls += 1;
                }
                job.remote = Some(remote);
                job.state = JobState::Running;
            }
            StepOutcome::Transient(reason) => {
                if job.attempts >= self.retry.max_attempts() {
                    job.state = JobState::Failed { reason };
                } else {
                    tracing::debug!(job = %job.job_id, attempt = job.attempts, %reason, "retrying");
                    job.attempts += 1;
                    job.state = JobState::Running;
                    if !self.retry.backoff.is_zero() {
                        job.not_before = Some(Instant::now() + self.retry.backoff);
                    }
                }
            }
            StepOutcome::Fatal(reason) => job.state = JobState::Failed { reason },
        }
    }

    fn step(&self, work: &Work) -> StepOutcome {
        match &work.request {
            PipelineRequest::ExtractCoreCharacter { task_id, text } => {
                match extract_core_character(self.backends.chat.as_ref(), text) {
                    Ok(character) => StepOutcome::Complete(PipelineResult::CoreCharacterExtracted {
                        task_id: task_id.clone(),
                        character,
                    }),
                    Err(e) => classify(e),
                }
            }
            PipelineRequest::GenerateImage { task_id, subject } => {
                let run = || -> Result<PipelineResult, PipelineError> {
                    let spec = build_image_prompt(subject)?;
                    let uri = self.backends.image.generate(&spec)?;
                    let asset = self.store.fetch(&uri, MediaKind::Png)?;
                    Ok(PipelineResult::ImageReady {
                        task_id: task_id.clone(),
                        asset,
                    })
                };
                run().map_or_else(classify, StepOutcome::Complete)
            }
            PipelineRequest::GenerateModel3d {
                model_id, image, ..
            } => {
                let Some(remote) = &work.remote else {
                    return match self.backends.model3d.submit(image) {
                        Ok(remote) => StepOutcome::Waiting {
                            remote,
                            polled: false,
                        },
                        Err(e) => classify(e),
                    };
                };
                match self.backends.model3d.status(remote, work.polls) {
                    Ok(RemoteStatus::Pending) => StepOutcome::Waiting {
                        remote: remote.clone(),
                        polled: true,
                    },
                    Ok(RemoteStatus::Done { uri }) => match self.store.fetch(&uri, MediaKind::Glb) {
                        Ok(asset) => StepOutcome::Complete(PipelineResult::ModelReady {
                            model_id: model_id.clone(),
                            asset,
                        }),
                        Err(e) => StepOutcome::Transient(e.to_string()),
                    },
                    Ok(RemoteStatus::Failed { reason }) => StepOutcome::Fatal(reason),
                    Err(e) => classify(e),
                }
            }
        }
    }

    pub fn poll_job(&self, job_id: JobId) -> Result<JobPoll, PipelineError> {
        let mut table = self.table();
        let job = table
            .jobs
            .get_mut(&job_id)
            .ok_or_else(|| PipelineError::UnknownJob(job_id.to_string()))?;
        Ok(JobPoll {
            state: job.state.clone(),
            delivery: take_delivery(job),
        })
    }

    /// Collects every undelivered terminal result, in job order.
    pub fn drain(&self) -> Vec<PipelineResult> {
        let mut table = self.table();
        table.jobs.values_mut().filter_map(take_delivery).collect()
    }
}

fn take_delivery(job: &mut GenerationJob) -> Option<PipelineResult> {
    if job.delivered {
        return None;
    }
    let result = match &job.state {
        JobState::Complete { payload } => payload.clone(),
        JobState::Failed { reason } => failure_result(&job.request, reason),
        _ => return None,
    };
    job.delivered = true;
    Some(result)
}
