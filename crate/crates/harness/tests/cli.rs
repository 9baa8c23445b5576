use std::path::Path;
use std::process::{Command, Output};

use proact::io::{read_jsonl, write_jsonl, JudgmentRecord, TranscriptRecord};
use proact_core::evaluation::DialogJudgment;
use proact_core::orchestrator::EndingReason;
use proact_core::scenario::{Branch, Tier};
use proact_core::synthesis::ShareGptRecord;

fn proact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proact")).args(args).env_remove("PROACT_API_KEY").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn judgment(i: usize, tier: Tier, branch: Branch, success: bool) -> JudgmentRecord {
    JudgmentRecord {
        judgment: DialogJudgment {
            scenario_ref: format!("{tier}-{branch}-{i}"),
            tier,
            branch,
            success,
            ending: if success { EndingReason::MissionFinishedProperly } else { EndingReason::MaxTurnsReached },
            action_errors: vec![],
            status_errors: vec![],
            agent_turns: 6,
            diagnostics: vec![],
        },
        config_hash: Some("abc".into()),
    }
}

#[test]
fn report_prints_the_equal_weight_overall() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j.jsonl");
    // 80/81 positive and 79/81 negative successes.
    let mut js = Vec::new();
    js.extend((0..81).map(|i| judgment(i, Tier::Simple, Branch::Positive, i < 80)));
    js.extend((0..81).map(|i| judgment(i, Tier::Simple, Branch::Negative, i < 79)));
    write_jsonl(&path, &js).unwrap();
    let json = dir.path().join("report.json");
    let out = proact(&["report", "--judgments", p(&path), "--out", p(&json)]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    let row = table.lines().find(|l| l.starts_with("SIMPLE")).unwrap();
    let cells: Vec<&str> = row.split('|').map(str::trim).collect();
    assert_eq!(&cells[1..4], ["98.77", "97.53", "98.15"]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["tiers"][0]["overall"], 98.15);
    assert_eq!(report["config_hash"], "abc");
}

#[test]
fn eval_over_the_test_set_writes_216_records_and_judges_clean() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let out = proact(&["eval", "--scenarios", "builtin:test", "--agent-endpoint", "oracle", "--out", p(&t), "--workers", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<TranscriptRecord> = read_jsonl(&t).unwrap();
    assert_eq!(records.len(), 216);
    let hash = &records[0].metadata.config_hash;
    assert!(records.iter().all(|r| &r.metadata.config_hash == hash));

    let j = dir.path().join("j.jsonl");
    let out = proact(&["judge", "--transcripts", p(&t), "--scenarios", "builtin:test", "--out", p(&j)]);
    assert_eq!(out.status.code(), Some(0));
    let js: Vec<JudgmentRecord> = read_jsonl(&j).unwrap();
    assert_eq!(js.len(), 216);
    assert!(js.iter().all(|r| r.judgment.success));
}

#[test]
fn synth_with_zero_counts_writes_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("data.jsonl");
    let out = proact(&["synth", "--scenarios", "builtin:train:0,0,0,0", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), "");
}

#[test]
fn synth_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (i, workers) in ["1", "4"].into_iter().enumerate() {
        let path = dir.path().join(format!("d{i}.jsonl"));
        let out = proact(&["synth", "--scenarios", "builtin:train:2,2,1,1", "--seed", "3", "--workers", workers, "--out", p(&path)]);
        assert_eq!(out.status.code(), Some(0));
        bytes.push(std::fs::read(&path).unwrap());
        assert!(dir.path().join(format!("d{i}.provenance.jsonl")).exists());
    }
    assert_eq!(bytes[0], bytes[1]);
    let records: Vec<ShareGptRecord> = read_jsonl(&dir.path().join("d0.jsonl")).unwrap();
    assert_eq!(records.len(), 18);
}

#[test]
fn judge_exits_one_when_a_transcript_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let out = proact(&["eval", "--scenarios", "builtin:test:1,0,0,0", "--agent-endpoint", "oracle", "--out", p(&t)]);
    assert_eq!(out.status.code(), Some(0));
    let mut records: Vec<TranscriptRecord> = read_jsonl(&t).unwrap();
    records.push(records[0].clone());
    records[1].metadata.scenario_ref = "unknown-ref".into();
    write_jsonl(&t, &records).unwrap();
    let j = dir.path().join("j.jsonl");
    let out = proact(&["judge", "--transcripts", p(&t), "--scenarios", "builtin:test:1,0,0,0", "--out", p(&j)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown-ref"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o.jsonl");
    let o = p(&o);
    assert_eq!(proact(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(proact(&["report", "--judgments", "/nonexistent/j.jsonl"]).status.code(), Some(2));
    assert_eq!(proact(&["eval", "--scenarios", "builtin:test", "--out", o]).status.code(), Some(2));
    assert_eq!(
        proact(&["eval", "--scenarios", "builtin:nope", "--agent-endpoint", "oracle", "--out", o]).status.code(),
        Some(2)
    );
    assert_eq!(
        proact(&["eval", "--scenarios", "builtin:test", "--agent-endpoint", "https://x/v1", "--out", o]).status.code(),
        Some(2),
        "remote agent without a model"
    );
    assert_eq!(proact(&["replay", "--scenarios", "builtin:test", "--out", o]).status.code(), Some(2));
    assert_eq!(proact(&["eval", "--max-turns", "5", "--scenarios", "builtin:test", "--out", o]).status.code(), Some(2));
    assert_eq!(proact(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults_that_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("proact.toml");
    std::fs::write(&cfg, "scenarios = \"builtin:test:1,1,0,0\"\n[agent]\nendpoint = \"fixture:always_silent\"\n").unwrap();
    let t = dir.path().join("t.jsonl");
    let out = proact(&["eval", "--config", p(&cfg), "--out", p(&t)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Vec<TranscriptRecord> = read_jsonl(&t).unwrap();
    assert_eq!(r.len(), 6);
    assert!(r.iter().all(|r| r.metadata.ending == Some(EndingReason::PrematureSilence)));

    let out = proact(&["eval", "--config", p(&cfg), "--agent-endpoint", "oracle", "--out", p(&t)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Vec<TranscriptRecord> = read_jsonl(&t).unwrap();
    assert!(r.iter().all(|r| r.metadata.ending == Some(EndingReason::MissionFinishedProperly)));

    std::fs::write(&cfg, "[agent]\nsecret = 1\n").unwrap();
    assert_eq!(proact(&["eval", "--config", p(&cfg), "--out", p(&t)]).status.code(), Some(2));
}
