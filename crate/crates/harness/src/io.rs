//! On-disk formats: transcript and judgment JSONL, scenario sets.

use std::fs;
use std::path::{Path, PathBuf};

use proact_core::evaluation::DialogJudgment;
use proact_core::orchestrator::{EndingReason, Transcript};
use proact_core::scenario::{generate_scenario, template_by_name, Branch, ScenarioBackground, ScenarioSource, Tier};
use proact_core::synthesis::{
    plan_samples, CellCounts, PipelineConfig, ScenarioRequest, ShareGptTurn, TEST_DISTRIBUTION, TRAIN_DISTRIBUTION,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{path} line {line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("scenario set {0:?}: {1}")]
    ScenarioSet(String, String),
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Io(path.to_path_buf(), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| IoError::Parse { path: path.to_path_buf(), line: i + 1, source })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, text).map_err(|e| IoError::Io(path.to_path_buf(), e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_text(path, &to_jsonl(items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub scenario_ref: String,
    pub tier: Tier,
    pub branch: Branch,
    pub ending: Option<EndingReason>,
    pub config_hash: String,
}

/// ShareGPT-shaped dialog plus the metadata needed to judge it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub conversations: Vec<ShareGptTurn>,
    pub system: String,
    pub metadata: TranscriptMeta,
}

impl TranscriptRecord {
    pub fn from_transcript(t: &Transcript, config_hash: &str) -> TranscriptRecord {
        TranscriptRecord {
            conversations: t.turns.iter().map(|d| ShareGptTurn { role: d.role, content: d.content.clone() }).collect(),
            system: t.system_prompt.clone(),
            metadata: TranscriptMeta {
                scenario_ref: t.scenario_ref.clone(),
                tier: t.tier,
                branch: t.branch,
                ending: t.ending,
                config_hash: config_hash.to_string(),
            },
        }
    }

    pub fn to_transcript(&self) -> Transcript {
        Transcript {
            scenario_ref: self.metadata.scenario_ref.clone(),
            tier: self.metadata.tier,
            branch: self.metadata.branch,
            system_prompt: self.system.clone(),
            turns: self
                .conversations
                .iter()
                .map(|c| proact_core::orchestrator::DialogTurn::new(c.role, c.content.clone()))
                .collect(),
            ending: self.metadata.ending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    #[serde(flatten)]
    pub judgment: DialogJudgment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// One dialog to run: a scenario and the setting to run it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub scenario_ref: String,
    pub tier: Tier,
    pub branch: Branch,
    pub scenario: ScenarioBackground,
}

fn parse_counts(name: &str, s: &str) -> Result<CellCounts, IoError> {
    let bad = || IoError::ScenarioSet(name.into(), "counts must be four integers `sp,sn,cp,cn`".into());
    let n: Vec<u32> = s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match n[..] {
        [sp, sn, cp, cn] => Ok(CellCounts::new(sp, sn, cp, cn)),
        _ => Err(bad()),
    }
}

/// Sample distribution named by `name`:
/// `builtin:test`, `builtin:train`, either with `:sp,sn,cp,cn` for uniform
/// per-template counts, or a JSON file holding a list of
/// `{template, counts}` requests.
pub fn resolve_distribution(name: &str) -> Result<Vec<ScenarioRequest>, IoError> {
    if let Some(rest) = name.strip_prefix("builtin:") {
        let (set, counts) = match rest.split_once(':') {
            Some((set, c)) => (set, Some(parse_counts(name, c)?)),
            None => (rest, None),
        };
        let dist: &[(&str, CellCounts)] = match set {
            "test" => &TEST_DISTRIBUTION,
            "train" => &TRAIN_DISTRIBUTION,
            other => return Err(IoError::ScenarioSet(name.into(), format!("unknown builtin set {other:?}"))),
        };
        let cfg = match counts {
            Some(c) => PipelineConfig::scaled(dist, c),
            None => PipelineConfig::from_distribution(dist),
        };
        return Ok(cfg.requests);
    }
    let path = Path::new(name);
    let text = fs::read_to_string(path).map_err(|e| IoError::Io(path.to_path_buf(), e))?;
    let reqs: Vec<ScenarioRequest> =
        serde_json::from_str(&text).map_err(|source| IoError::Parse { path: path.to_path_buf(), line: 1, source })?;
    for r in &reqs {
        if template_by_name(&r.template).is_none() {
            return Err(IoError::ScenarioSet(name.into(), format!("unknown template {:?}", r.template)));
        }
    }
    Ok(reqs)
}

/// Dialogs named by `name`. Builtin sets expand to seeded scenarios, one
/// per planned sample; a `.jsonl` path is read as stored [`EvalItem`]s.
pub fn resolve_scenarios(name: &str, seed: u64) -> Result<Vec<EvalItem>, IoError> {
    if name.ends_with(".jsonl") {
        return read_jsonl(Path::new(name));
    }
    let cfg = PipelineConfig { requests: resolve_distribution(name)?, seed, ..PipelineConfig::default() };
    let plans = plan_samples(&cfg).map_err(|e| IoError::ScenarioSet(name.into(), e.to_string()))?;
    plans
        .into_iter()
        .map(|p| {
            let template = template_by_name(&p.template).expect("planned templates exist");
            let scenario = generate_scenario(template, p.tier, ScenarioSource::Seeded(p.scenario_seed))
                .map_err(|e| IoError::ScenarioSet(name.into(), e.to_string()))?;
            Ok(EvalItem { scenario_ref: p.sample_id, tier: p.tier, branch: p.branch, scenario })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_test_set_has_216_dialogs() {
        let items = resolve_scenarios("builtin:test", 0).unwrap();
        assert_eq!(items.len(), 216);
        let simple_pos = items.iter().filter(|i| i.tier == Tier::Simple && i.branch == Branch::Positive).count();
        assert_eq!(simple_pos, 81);
        let mut refs: Vec<_> = items.iter().map(|i| &i.scenario_ref).collect();
        refs.sort();
        refs.dedup();
        assert_eq!(refs.len(), 216);
    }

    #[test]
    fn scaled_and_file_distributions() {
        let reqs = resolve_distribution("builtin:train:4,4,2,2").unwrap();
        assert_eq!(reqs.len(), 3);
        assert!(reqs.iter().all(|r| r.counts == CellCounts::new(4, 4, 2, 2)));
        assert!(resolve_distribution("builtin:train:4,4").is_err());
        assert!(resolve_distribution("builtin:dev").is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        fs::write(&p, r#"[{"template":"job_search","counts":{"simple_positive":1,"simple_negative":0,"complex_positive":0,"complex_negative":0}}]"#).unwrap();
        let items = resolve_scenarios(p.to_str().unwrap(), 3).unwrap();
        assert_eq!(items.len(), 1);
    }

    #[test]
    fn eval_items_round_trip_through_jsonl() {
        let items = resolve_scenarios("builtin:test:1,0,0,1", 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_jsonl(&p, &items).unwrap();
        assert_eq!(resolve_scenarios(p.to_str().unwrap(), 0).unwrap(), items);
    }
}
