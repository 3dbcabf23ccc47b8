//! Session logs and their line-delimited JSON persistence.
//!
//! A log file holds one `header` record, one `step` record per interaction
//! and a closing `summary` record. Files live at
//! `<root>/<condition>/<profile>/<seed>.jsonl`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::ConstraintToggles;
use crate::error::HarnessError;
use crate::pedagogy::{Action, RewardWeights};
use crate::safety::ConstraintParams;
use crate::student::ProfileKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionName {
    EO,
    MAS,
    MO,
    ST,
    NoC1,
    NoC3,
}

impl ConditionName {
    pub const ALL: [ConditionName; 6] = [
        ConditionName::EO,
        ConditionName::MAS,
        ConditionName::MO,
        ConditionName::ST,
        ConditionName::NoC1,
        ConditionName::NoC3,
    ];

    pub const MAIN: [ConditionName; 4] = [
        ConditionName::EO,
        ConditionName::MAS,
        ConditionName::MO,
        ConditionName::ST,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionName::EO => "EO",
            ConditionName::MAS => "MAS",
            ConditionName::MO => "MO",
            ConditionName::ST => "ST",
            ConditionName::NoC1 => "NoC1",
            ConditionName::NoC3 => "NoC3",
        }
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ConditionName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        ConditionName::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub condition: ConditionName,
    pub profile: ProfileKind,
    pub seed: u64,
    pub session_length: usize,
    pub weights: RewardWeights,
    pub toggles: ConstraintToggles,
    pub params: ConstraintParams,
    pub concept_ids: Vec<String>,
    pub initial_mastery: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub concept: String,
    pub action: Action,
    pub demand: f64,
    pub mastery_delta: f64,
    pub mastery_after: f64,
    pub engagement_delta: f64,
    pub r_eng: f64,
    pub r_mas: f64,
    pub r_ped: f64,
    pub reward: f64,
    pub accessible: bool,
    pub appropriate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub delta_k: f64,
    pub n_mastered: usize,
    pub cum_r_eng: f64,
    pub cum_r_mas: f64,
    pub cum_r_ped: f64,
    pub cum_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub steps: Vec<StepRecord>,
    pub summary: SessionSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header(SessionHeader),
    Step(StepRecord),
    Summary(SessionSummary),
}

impl SessionLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn key(&self) -> SessionKey {
        SessionKey {
            condition: self.header.condition,
            profile: self.header.profile,
            seed: self.header.seed,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        };
        push(&Record::Header(self.header.clone()));
        for s in &self.steps {
            push(&Record::Step(s.clone()));
        }
        push(&Record::Summary(self.summary.clone()));
        out
    }

    /// Parses a log; `path` is only used to label errors.
    pub fn from_reader(reader: impl BufRead, path: &Path) -> Result<Self, HarnessError> {
        let corrupt = |line: usize, message: String| HarnessError::CorruptLog {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut header = None;
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| HarnessError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(&line).map_err(|e| corrupt(lineno, e.to_string()))?;
            match rec {
                Record::Header(h) if header.is_none() && lineno == 1 => header = Some(h),
                Record::Header(_) => return Err(corrupt(lineno, "unexpected header".into())),
                Record::Step(s) => {
                    if header.is_none() || summary.is_some() {
                        return Err(corrupt(lineno, "step outside header/summary".into()));
                    }
                    if s.t != steps.len() {
                        return Err(corrupt(
                            lineno,
                            format!("expected step {}, found {}", steps.len(), s.t),
                        ));
                    }
                    steps.push(s);
                }
                Record::Summary(s) if summary.is_none() => summary = Some(s),
                Record::Summary(_) => return Err(corrupt(lineno, "duplicate summary".into())),
            }
        }
        let header = header.ok_or_else(|| corrupt(1, "missing header".into()))?;
        let summary = summary.ok_or_else(|| corrupt(steps.len() + 2, "missing summary".into()))?;
        Ok(Self {
            header,
            steps,
            summary,
        })
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_reader(BufReader::new(file), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionKey {
    pub condition: ConditionName,
    pub profile: ProfileKind,
    pub seed: u64,
}

impl SessionKey {
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(self.condition.name())
            .join(self.profile.name())
            .join(format!("{}.jsonl", self.seed))
    }
}

/// All logs of a batch, keyed and ordered by (condition, profile, seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogSet {
    pub logs: BTreeMap<SessionKey, SessionLog>,
}

impl LogSet {
    pub fn insert(&mut self, log: SessionLog) {
        self.logs.insert(log.key(), log);
    }

    pub fn len(&self) -> usize {
        self.logs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logs.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.logs.values().map(SessionLog::len).sum()
    }

    pub fn conditions(&self) -> Vec<ConditionName> {
        let mut cs: Vec<_> = self.logs.keys().map(|k| k.condition).collect();
        cs.dedup();
        cs
    }

    pub fn condition(&self, c: ConditionName) -> impl Iterator<Item = &SessionLog> {
        self.logs
            .iter()
            .filter(move |(k, _)| k.condition == c)
            .map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SessionLog> {
        self.logs.values()
    }

    /// Writes every log below `root`, each file atomically.
    pub fn write_dir(&self, root: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let mut written = Vec::with_capacity(self.len());
        for (key, log) in &self.logs {
            let path = root.join(key.relative_path());
            crate::io::atomic_write(&path, log.to_jsonl().as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }

    /// Loads every `*.jsonl` file found under `root`.
    pub fn read_dir(root: &Path) -> Result<Self, HarnessError> {
        let mut files = Vec::new();
        collect_jsonl(root, &mut files)?;
        files.sort();
        let mut set = LogSet::default();
        for f in files {
            set.insert(SessionLog::read(&f)?);
        }
        Ok(set)
    }
}

impl FromIterator<SessionLog> for LogSet {
    fn from_iter<I: IntoIterator<Item = SessionLog>>(iter: I) -> Self {
        let mut set = LogSet::default();
        for log in iter {
            set.insert(log);
        }
        set
    }
}

fn collect_jsonl(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_jsonl(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}
