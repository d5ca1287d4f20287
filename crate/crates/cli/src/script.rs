//! Scripted multi-client sessions.
//!
//! ```json
//! {
//!   "catalog": "../fixtures/catalog_mini.json",
//!   "session": { "spawn": [{"part": "P01", "count": 2}] },
//!   "steps": [
//!     {"at_tick": 0, "client": "ada", "command": {"op": "join", "name": "Ada"}},
//!     {"at_tick": 1, "client": "ada", "command": {"op": "grab", "instance_id": "i1"}},
//!     {"at_tick": 2, "expect": {"count": {"PartGrabbed": 1}}}
//!   ]
//! }
//! ```
//!
//! A client connects on its `join` and disconnects after `leave`. Steps
//! within a tick run in file order; the pipeline advances once between
//! ticks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use joinery_core::session::{Action, SessionConfig};
use joinery_core::Digest64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub name: Option<String>,
    /// Relative to the script file.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub session: Option<SessionConfig>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    Command(CommandStep),
    Expect(ExpectStep),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandStep {
    pub at_tick: u64,
    pub client: String,
    pub command: Action,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectStep {
    pub at_tick: u64,
    pub expect: Expectation,
}

/// Checked against the whole log so far.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Event type names (`SpliceSucceeded`) or error codes (`GRAB_CONFLICT`).
    #[serde(default)]
    pub count: BTreeMap<String, usize>,
    #[serde(default)]
    pub digest: Option<Digest64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("step {index}: at_tick {tick} goes back in time (previous {previous})")]
    TickOrder { index: usize, tick: u64, previous: u64 },
    #[error("script has no steps")]
    Empty,
}

impl Step {
    pub fn at_tick(&self) -> u64 {
        match self {
            Step::Command(c) => c.at_tick,
            Step::Expect(e) => e.at_tick,
        }
    }
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let script: Script = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    /// Loads a script and resolves its catalog path against the file.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut script = Self::from_json(&text)?;
        if let (Some(catalog), Some(dir)) = (&script.catalog, path.parent()) {
            script.catalog = Some(dir.join(catalog));
        }
        Ok(script)
    }

    fn validate(&self) -> Result<(), ScriptError> {
        if self.steps.is_empty() {
            return Err(ScriptError::Empty);
        }
        let mut previous = 0;
        for (index, step) in self.steps.iter().enumerate() {
            let tick = step.at_tick();
            if tick < previous {
                return Err(ScriptError::TickOrder {
                    index,
                    tick,
                    previous,
                });
            }
            previous = tick;
        }
        Ok(())
    }

    pub fn last_tick(&self) -> u64 {
        self.steps.last().map(Step::at_tick).unwrap_or(0)
    }
}
