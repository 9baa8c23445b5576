//! Critic-gated dialog synthesis and ShareGPT export.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::actors::{render_dialogue_history, AgentAdapter, LlmAgent, LlmUser, OracleAgent, ScriptedUser, UserAdapter, UserUtterance};
use crate::chat::{ChannelError, ChatChannel, ChatMessage, ChatRequest, ChatRole};
use crate::evaluation::{classify_action, ActionErrorKind};
use crate::json::{extract_first_object, Json};
use crate::orchestrator::{
    run_dialog_gated, DialogSpec, DialogTurn, EndingReason, GateVerdict, OrchestratorError, RunConfig, Transcript,
    TurnGate, TurnRole,
};
use crate::prompts::{agent_system_prompt, render, AGENT_CRITIC, USER_CRITIC};
use crate::protocol::{parse_agent_response, validate_agent_response, AgentResponse, ProactiveAction};
use crate::runtime::{expected_actions, expected_status, next_user_kind, DialogContext, UserKind};
use crate::scenario::{derive_seed, generate_scenario, template_by_name, Branch, ScenarioBackground, ScenarioSource, Tier};

pub const PASS_THRESHOLD: u32 = 75;
pub const DEFAULT_DIM_SCORE: u32 = 12;
pub const MAX_DIM_SCORE: u32 = 20;
pub const DEFAULT_REGENERATION_BUDGET: u32 = 3;
pub const CRITIC_PARSE_ATTEMPTS: u32 = 3;

pub const SIMPLE_SHIFT_NOTE: &str = "user rubric intention_shift fixed at 12 for SIMPLE dialogs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rubric {
    User,
    Agent,
}

impl Rubric {
    pub fn dims(self) -> [&'static str; 5] {
        match self {
            Rubric::User => ["profile_consistency", "intention_clarity", "intention_shift", "naturalness", "contextual_logic"],
            Rubric::Agent => ["tool_usage", "reminder_setting", "context_understanding", "proactivity", "status_accuracy"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScore {
    pub rubric: Rubric,
    pub dims: [u32; 5],
    pub total: u32,
    pub passed: bool,
    pub feedback: String,
    /// Set when the critic's own total disagreed with its dimensions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_total: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CriticError {
    #[error("critic output unusable: {0}")]
    Unparseable(String),
    #[error("dimension {dim} = {value} out of range")]
    DimOutOfRange { dim: &'static str, value: i64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl QualityScore {
    pub fn from_dims(rubric: Rubric, dims: [u32; 5], threshold: u32, feedback: impl Into<String>) -> Result<QualityScore, CriticError> {
        for (name, &v) in rubric.dims().iter().zip(&dims) {
            let binary = rubric == Rubric::Agent && *name == "status_accuracy";
            if v > MAX_DIM_SCORE || (binary && v != 0 && v != MAX_DIM_SCORE) {
                return Err(CriticError::DimOutOfRange { dim: name, value: v as i64 });
            }
        }
        let total = dims.iter().sum();
        Ok(QualityScore { rubric, dims, total, passed: total >= threshold, feedback: feedback.into(), reported_total: None })
    }

    pub fn dim(&self, name: &str) -> Option<u32> {
        self.rubric.dims().iter().position(|d| *d == name).map(|i| self.dims[i])
    }

    /// Replaces one dimension and recomputes total and verdict.
    pub fn with_dim(mut self, name: &str, value: u32, threshold: u32) -> QualityScore {
        if let Some(i) = self.rubric.dims().iter().position(|d| *d == name) {
            self.dims[i] = value;
            self.total = self.dims.iter().sum();
            self.passed = self.total >= threshold;
        }
        self
    }
}

/// Critic prompt for one candidate turn. `profile` is only used by the
/// user rubric.
pub fn critic_prompt(rubric: Rubric, profile: &str, history: &str, candidate: &str) -> String {
    match rubric {
        Rubric::User => render(
            USER_CRITIC,
            &[("user_profile", profile), ("dialogue_history", history), ("user_response", candidate)],
        ),
        Rubric::Agent => render(AGENT_CRITIC, &[("dialogue_history", history), ("agent_response", candidate)]),
    }
}

/// Parses critic output. The total is always recomputed from the
/// dimensions; the critic's own total and verdict are not trusted.
pub fn parse_critic_output(rubric: Rubric, text: &str, threshold: u32) -> Result<QualityScore, CriticError> {
    let (_, v) = extract_first_object(text).ok_or_else(|| CriticError::Unparseable("no JSON object".into()))?;
    let scores = v.get("scores").ok_or_else(|| CriticError::Unparseable("missing scores".into()))?;
    let mut dims = [0u32; 5];
    for (slot, name) in rubric.dims().iter().enumerate() {
        let raw = match scores.get(name) {
            Some(Json::Number(n)) => n.as_i64().or_else(|| n.as_f64().filter(|f| (*f as i64) as f64 == *f).map(|f| f as i64)),
            _ => None,
        }
        .ok_or_else(|| CriticError::Unparseable(format!("dimension {name} missing or not an integer")))?;
        if !(0..=MAX_DIM_SCORE as i64).contains(&raw) {
            return Err(CriticError::DimOutOfRange { dim: name, value: raw });
        }
        dims[slot] = raw as u32;
    }
    let feedback = v.get("feedback").and_then(Json::as_str).unwrap_or("").to_string();
    let mut score = QualityScore::from_dims(rubric, dims, threshold, feedback)?;
    let reported = match v.get("total_score") {
        Some(Json::Number(n)) => n.as_i64(),
        _ => None,
    };
    if reported.is_some_and(|t| t != score.total as i64) {
        score.reported_total = reported;
    }
    Ok(score)
}

/// Everything a critic may look at for one candidate turn.
pub struct CriticRequest<'a> {
    pub scenario: &'a ScenarioBackground,
    pub ctx: &'a DialogContext,
    pub turns: &'a [DialogTurn],
    pub candidate: Candidate<'a>,
}

#[derive(Clone, Copy)]
pub enum Candidate<'a> {
    User(&'a UserUtterance),
    Agent(&'a AgentResponse),
}

impl CriticRequest<'_> {
    pub fn rubric(&self) -> Rubric {
        match self.candidate {
            Candidate::User(_) => Rubric::User,
            Candidate::Agent(_) => Rubric::Agent,
        }
    }

    pub fn prompt(&self) -> String {
        let history = render_dialogue_history(self.turns);
        let candidate = match self.candidate {
            Candidate::User(u) => u.text.clone(),
            Candidate::Agent(r) => r.render(),
        };
        critic_prompt(self.rubric(), self.scenario.user_profile.as_deref().unwrap_or(""), &history, &candidate)
    }
}

pub trait Critic {
    fn score(&self, req: &CriticRequest<'_>, threshold: u32) -> Result<QualityScore, CriticError>;
}

/// Critic backed by a language model.
pub struct LlmCritic<'a> {
    pub channel: &'a dyn ChatChannel,
    pub model: String,
    pub temperature: f64,
}

impl Critic for LlmCritic<'_> {
    fn score(&self, req: &CriticRequest<'_>, threshold: u32) -> Result<QualityScore, CriticError> {
        let chat = ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::new(ChatRole::User, req.prompt())],
            temperature: self.temperature,
            max_output: None,
        };
        let mut last = CriticError::Unparseable("no attempt".into());
        for _ in 0..CRITIC_PARSE_ATTEMPTS {
            let text = self.channel.complete(&chat)?;
            match parse_critic_output(req.rubric(), &text, threshold) {
                Ok(s) => return Ok(s),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

/// Deterministic critic that scores against the reference rules.
pub struct RuleCritic;

fn user_dims(ctx: &DialogContext, u: &UserUtterance) -> [u32; 5] {
    let fits = u.kind == next_user_kind(ctx);
    let shift = if u.kind == UserKind::Shift && fits { MAX_DIM_SCORE } else { DEFAULT_DIM_SCORE };
    let natural = if u.text.trim().is_empty() { 0 } else { MAX_DIM_SCORE };
    if fits {
        [MAX_DIM_SCORE, MAX_DIM_SCORE, shift, natural, MAX_DIM_SCORE]
    } else {
        [MAX_DIM_SCORE, DEFAULT_DIM_SCORE, shift, natural, 0]
    }
}

fn agent_dims(ctx: &DialogContext, r: &AgentResponse) -> [u32; 5] {
    use ProactiveAction::*;
    let action = r.proactive_action;
    let expected = expected_actions(ctx).contains(&action);
    let error = if expected { None } else { classify_action(ctx, action) };
    let dim = |used: bool, penalized: bool| match (used, penalized) {
        (_, true) => 0,
        (true, false) => MAX_DIM_SCORE,
        (false, false) => DEFAULT_DIM_SCORE,
    };
    use ActionErrorKind as K;
    let tool = dim(action == InfoRetrieval, matches!(error, Some(K::UnnecessaryInfoRetrieval)));
    let reminder = dim(
        action == SetReminder,
        matches!(error, Some(K::FirstSetReminderTooEarly | K::SetReminderTooFrequent)),
    );
    let proactive = dim(
        matches!(action, FollowUp | KeepSilent),
        matches!(error, Some(K::FollowUpKeepSilentUsage | K::KeepSilentInPositiveBranch)),
    );
    let context = if expected { MAX_DIM_SCORE } else { 8 };
    let status_ok = r.task_description.status == Some(expected_status(&ctx.after_agent(action)))
        && validate_agent_response(r).is_empty();
    [tool, reminder, context, proactive, if status_ok { MAX_DIM_SCORE } else { 0 }]
}

impl Critic for RuleCritic {
    fn score(&self, req: &CriticRequest<'_>, threshold: u32) -> Result<QualityScore, CriticError> {
        let (rubric, dims) = match req.candidate {
            Candidate::User(u) => (Rubric::User, user_dims(req.ctx, u)),
            Candidate::Agent(r) => (Rubric::Agent, agent_dims(req.ctx, r)),
        };
        QualityScore::from_dims(rubric, dims, threshold, "rule-based")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreLogEntry {
    pub turn: usize,
    pub role: TurnRole,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<QualityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Turn gate that asks a critic about every candidate turn.
pub struct CriticGate<'a> {
    pub scenario: &'a ScenarioBackground,
    pub user_critic: &'a dyn Critic,
    pub agent_critic: &'a dyn Critic,
    pub budget: u32,
    pub threshold: u32,
    pub log: Vec<ScoreLogEntry>,
    pub notes: Vec<String>,
}

impl<'a> CriticGate<'a> {
    pub fn new(
        scenario: &'a ScenarioBackground,
        user_critic: &'a dyn Critic,
        agent_critic: &'a dyn Critic,
        budget: u32,
        threshold: u32,
    ) -> CriticGate<'a> {
        CriticGate { scenario, user_critic, agent_critic, budget, threshold, log: Vec::new(), notes: Vec::new() }
    }

    fn review(&mut self, ctx: &DialogContext, turns: &[DialogTurn], candidate: Candidate<'_>) -> GateVerdict {
        let req = CriticRequest { scenario: self.scenario, ctx, turns, candidate };
        let (role, critic) = match candidate {
            Candidate::User(_) => (TurnRole::User, self.user_critic),
            Candidate::Agent(_) => (TurnRole::Assistant, self.agent_critic),
        };
        let attempt = self.log.iter().filter(|e| e.turn == turns.len() && e.role == role).count() as u32;
        let mut result = critic.score(&req, self.threshold);
        if let (Ok(s), Candidate::User(_), Tier::Simple) = (&result, candidate, ctx.tier) {
            result = Ok(s.clone().with_dim("intention_shift", DEFAULT_DIM_SCORE, self.threshold));
            if !self.notes.iter().any(|n| n == SIMPLE_SHIFT_NOTE) {
                self.notes.push(SIMPLE_SHIFT_NOTE.to_string());
            }
        }
        let verdict = match &result {
            Ok(s) if s.passed => GateVerdict::Accept,
            Ok(s) => GateVerdict::Reject(format!("score {} below {}", s.total, self.threshold)),
            Err(e) => GateVerdict::Reject(e.to_string()),
        };
        let (score, error) = match result {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.log.push(ScoreLogEntry { turn: turns.len(), role, attempt, score, error });
        verdict
    }
}

impl TurnGate for CriticGate<'_> {
    fn regeneration_budget(&self) -> u32 {
        self.budget
    }

    fn review_user(&mut self, ctx: &DialogContext, turns: &[DialogTurn], candidate: &UserUtterance) -> GateVerdict {
        self.review(ctx, turns, Candidate::User(candidate))
    }

    fn review_agent(&mut self, ctx: &DialogContext, turns: &[DialogTurn], candidate: &AgentResponse) -> GateVerdict {
        self.review(ctx, turns, Candidate::Agent(candidate))
    }
}

/// Requested dialogs per tier and branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellCounts {
    pub simple_positive: u32,
    pub simple_negative: u32,
    pub complex_positive: u32,
    pub complex_negative: u32,
}

impl CellCounts {
    pub const fn new(sp: u32, sn: u32, cp: u32, cn: u32) -> CellCounts {
        CellCounts { simple_positive: sp, simple_negative: sn, complex_positive: cp, complex_negative: cn }
    }

    pub fn get(&self, tier: Tier, branch: Branch) -> u32 {
        match (tier, branch) {
            (Tier::Simple, Branch::Positive) => self.simple_positive,
            (Tier::Simple, Branch::Negative) => self.simple_negative,
            (Tier::Complex, Branch::Positive) => self.complex_positive,
            (Tier::Complex, Branch::Negative) => self.complex_negative,
        }
    }

    pub fn total(&self) -> u32 {
        self.simple_positive + self.simple_negative + self.complex_positive + self.complex_negative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRequest {
    pub template: String,
    pub counts: CellCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub requests: Vec<ScenarioRequest>,
    pub regeneration_budget: u32,
    pub threshold: u32,
    /// Temperature for scenario generation, user simulation and critics.
    pub generation_temperature: f64,
    pub seed: u64,
    pub run: RunConfig,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            requests: Vec::new(),
            regeneration_budget: DEFAULT_REGENERATION_BUDGET,
            threshold: PASS_THRESHOLD,
            generation_temperature: 0.7,
            seed: 0,
            run: RunConfig::default(),
        }
    }
}

pub const TRAIN_DISTRIBUTION: [(&str, CellCounts); 3] = [
    ("product_recommendation", CellCounts::new(131, 123, 52, 32)),
    ("job_search", CellCounts::new(143, 143, 46, 51)),
    ("flight_booking", CellCounts::new(127, 124, 37, 43)),
];

pub const TEST_DISTRIBUTION: [(&str, CellCounts); 3] = [
    ("car_purchase", CellCounts::new(27, 27, 9, 9)),
    ("house_hunting", CellCounts::new(27, 27, 9, 9)),
    ("ticket_booking", CellCounts::new(27, 27, 9, 9)),
];

impl PipelineConfig {
    pub fn from_distribution(dist: &[(&str, CellCounts)]) -> PipelineConfig {
        PipelineConfig {
            requests: dist.iter().map(|(t, c)| ScenarioRequest { template: t.to_string(), counts: *c }).collect(),
            ..PipelineConfig::default()
        }
    }

    pub fn train_set() -> PipelineConfig {
        PipelineConfig::from_distribution(&TRAIN_DISTRIBUTION)
    }

    pub fn test_set() -> PipelineConfig {
        PipelineConfig::from_distribution(&TEST_DISTRIBUTION)
    }

    /// Same templates as `dist` with uniform per-cell counts.
    pub fn scaled(dist: &[(&str, CellCounts)], counts: CellCounts) -> PipelineConfig {
        let uniform: Vec<(&str, CellCounts)> = dist.iter().map(|(t, _)| (*t, counts)).collect();
        PipelineConfig::from_distribution(&uniform)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub sample_id: String,
    pub template: String,
    pub tier: Tier,
    pub branch: Branch,
    /// Scenario index within (template, tier); both branches of an index
    /// share one scenario.
    pub index: u32,
    pub scenario_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error("unknown scenario template {0:?}")]
    UnknownTemplate(String),
    #[error("sharegpt export refused: {0}")]
    Export(String),
}

pub fn plan_samples(cfg: &PipelineConfig) -> Result<Vec<SamplePlan>, SynthesisError> {
    let mut plans = Vec::new();
    for req in &cfg.requests {
        if template_by_name(&req.template).is_none() {
            return Err(SynthesisError::UnknownTemplate(req.template.clone()));
        }
        for tier in Tier::ALL {
            for branch in Branch::ALL {
                for index in 0..req.counts.get(tier, branch) {
                    plans.push(SamplePlan {
                        sample_id: format!("{}-{}-{}-{index:04}", req.template, tier, branch).to_lowercase(),
                        template: req.template.clone(),
                        tier,
                        branch,
                        index,
                        scenario_seed: derive_seed(cfg.seed, &[&req.template, &tier.to_string(), &index.to_string()]),
                    });
                }
            }
        }
    }
    Ok(plans)
}

/// Sources of the four generation roles plus the scenario generator.
pub trait SampleActors {
    fn scenario_source(&self, seed: u64) -> ScenarioSource<'_>;
    fn agent<'s>(&'s self, sb: &'s ScenarioBackground, tier: Tier, branch: Branch) -> Box<dyn AgentAdapter + 's>;
    fn user<'s>(&'s self, sb: &'s ScenarioBackground) -> Result<Box<dyn UserAdapter + 's>, String>;
    fn user_critic(&self) -> &dyn Critic;
    fn agent_critic(&self) -> &dyn Critic;
}

/// Reference agent, scripted user and rule critics; needs no network.
pub struct OfflineActors;

impl SampleActors for OfflineActors {
    fn scenario_source(&self, seed: u64) -> ScenarioSource<'_> {
        ScenarioSource::Seeded(seed)
    }
    fn agent<'s>(&'s self, sb: &'s ScenarioBackground, tier: Tier, branch: Branch) -> Box<dyn AgentAdapter + 's> {
        Box::new(OracleAgent { scenario: sb, tier, branch })
    }
    fn user<'s>(&'s self, sb: &'s ScenarioBackground) -> Result<Box<dyn UserAdapter + 's>, String> {
        Ok(Box::new(ScriptedUser::new(sb).map_err(|e| e.to_string())?))
    }
    fn user_critic(&self) -> &dyn Critic {
        &RuleCritic
    }
    fn agent_critic(&self) -> &dyn Critic {
        &RuleCritic
    }
}

/// All roles played by language models behind one channel.
pub struct LlmActors<'a> {
    pub channel: &'a dyn ChatChannel,
    pub agent_model: String,
    pub user_model: String,
    pub critic_model: String,
    pub temperature: f64,
    user_critic: LlmCritic<'a>,
    agent_critic: LlmCritic<'a>,
}

impl<'a> LlmActors<'a> {
    pub fn new(channel: &'a dyn ChatChannel, agent_model: &str, user_model: &str, critic_model: &str, temperature: f64) -> LlmActors<'a> {
        let critic = || LlmCritic { channel, model: critic_model.to_string(), temperature: 0.0 };
        LlmActors {
            channel,
            agent_model: agent_model.into(),
            user_model: user_model.into(),
            critic_model: critic_model.into(),
            temperature,
            user_critic: critic(),
            agent_critic: critic(),
        }
    }
}

impl SampleActors for LlmActors<'_> {
    fn scenario_source(&self, _seed: u64) -> ScenarioSource<'_> {
        ScenarioSource::Llm { channel: self.channel, model: &self.user_model, temperature: self.temperature }
    }
    fn agent<'s>(&'s self, _: &'s ScenarioBackground, _: Tier, _: Branch) -> Box<dyn AgentAdapter + 's> {
        Box::new(LlmAgent { channel: self.channel, model: self.agent_model.clone() })
    }
    fn user<'s>(&'s self, sb: &'s ScenarioBackground) -> Result<Box<dyn UserAdapter + 's>, String> {
        Ok(Box::new(LlmUser { channel: self.channel, model: self.user_model.clone(), temperature: self.temperature, scenario: sb }))
    }
    fn user_critic(&self) -> &dyn Critic {
        &self.user_critic
    }
    fn agent_critic(&self) -> &dyn Critic {
        &self.agent_critic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareGptTurn {
    pub role: TurnRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareGptRecord {
    pub conversations: Vec<ShareGptTurn>,
    pub system: String,
}

impl ShareGptRecord {
    /// Whether every assistant turn parses and validates cleanly.
    pub fn assistant_turns_valid(&self) -> bool {
        self.conversations
            .iter()
            .filter(|t| t.role == TurnRole::Assistant)
            .all(|t| parse_agent_response(&t.content).is_ok_and(|r| validate_agent_response(&r).is_empty()))
    }
}

/// ShareGPT record for a finished dialog. Unsuccessful dialogs are refused
/// unless `force` is set; unparsable assistant turns are always refused.
pub fn export_sharegpt(t: &Transcript, system: &str, force: bool) -> Result<ShareGptRecord, SynthesisError> {
    if !force && t.ending != Some(EndingReason::MissionFinishedProperly) {
        return Err(SynthesisError::Export(format!("ending {:?}", t.ending)));
    }
    let record = ShareGptRecord {
        conversations: t.turns.iter().map(|d| ShareGptTurn { role: d.role, content: d.content.clone() }).collect(),
        system: system.to_string(),
    };
    if record.conversations.iter().any(|c| c.role == TurnRole::Assistant && parse_agent_response(&c.content).is_err()) {
        return Err(SynthesisError::Export("assistant turn does not parse".into()));
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub sample_id: String,
    pub scenario_ref: String,
    pub tier: Tier,
    pub branch: Branch,
    pub dropped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_reason: Option<String>,
    pub critic_scores: Vec<ScoreLogEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub record: Option<ShareGptRecord>,
    pub provenance: ProvenanceEntry,
}

/// Failure that should stop the whole batch rather than drop one sample.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sample {sample_id}: {reason}")]
pub struct BatchAbort {
    pub sample_id: String,
    pub reason: String,
}

impl fmt::Display for SamplePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sample_id)
    }
}

/// Runs one planned sample: scenario, gated dialog, export.
pub fn run_sample(plan: &SamplePlan, cfg: &PipelineConfig, actors: &dyn SampleActors) -> Result<SampleOutcome, BatchAbort> {
    let scenario_ref = format!("{}#{}-{}", plan.template, plan.tier, plan.index).to_lowercase();
    let mut provenance = ProvenanceEntry {
        sample_id: plan.sample_id.clone(),
        scenario_ref: scenario_ref.clone(),
        tier: plan.tier,
        branch: plan.branch,
        dropped: true,
        drop_reason: None,
        critic_scores: Vec::new(),
        notes: Vec::new(),
    };
    let dropped = |mut p: ProvenanceEntry, reason: String| {
        p.drop_reason = Some(reason);
        Ok(SampleOutcome { record: None, provenance: p })
    };
    let template = template_by_name(&plan.template).expect("planned templates exist");
    let sb = match generate_scenario(template, plan.tier, actors.scenario_source(plan.scenario_seed)) {
        Ok(sb) => sb,
        Err(e) => return dropped(provenance, e.to_string()),
    };
    let user = match actors.user(&sb) {
        Ok(u) => u,
        Err(e) => return dropped(provenance, e),
    };
    let agent = actors.agent(&sb, plan.tier, plan.branch);
    let spec = DialogSpec { scenario: &sb, scenario_ref: &scenario_ref, tier: plan.tier, branch: plan.branch, config: &cfg.run };
    let mut gate = CriticGate::new(&sb, actors.user_critic(), actors.agent_critic(), cfg.regeneration_budget, cfg.threshold);
    let result = run_dialog_gated(&spec, agent.as_ref(), user.as_ref(), &mut gate);
    provenance.critic_scores = core::mem::take(&mut gate.log);
    provenance.notes = core::mem::take(&mut gate.notes);
    let transcript = match result {
        Ok(t) => t,
        Err(e @ OrchestratorError::GateExhausted { .. }) => return dropped(provenance, e.to_string()),
        Err(OrchestratorError::User(e)) => {
            return Err(BatchAbort { sample_id: plan.sample_id.clone(), reason: e.to_string() })
        }
        Err(e) => return dropped(provenance, e.to_string()),
    };
    match export_sharegpt(&transcript, &agent_system_prompt(false), false) {
        Ok(record) => {
            provenance.dropped = false;
            Ok(SampleOutcome { record: Some(record), provenance })
        }
        Err(e) => dropped(provenance, e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineOutput {
    pub records: Vec<ShareGptRecord>,
    pub provenance: Vec<ProvenanceEntry>,
    pub aborted: Option<BatchAbort>,
}

/// Sequential pipeline over every planned sample. Stops at the first
/// batch-level failure and returns what was produced up to then.
pub fn run_pipeline(cfg: &PipelineConfig, actors: &dyn SampleActors) -> Result<PipelineOutput, SynthesisError> {
    let mut out = PipelineOutput::default();
    for plan in plan_samples(cfg)? {
        match run_sample(&plan, cfg, actors) {
            Ok(o) => {
                out.records.extend(o.record);
                out.provenance.push(o.provenance);
            }
            Err(abort) => {
                out.aborted = Some(abort);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_boundary() {
        let pass = QualityScore::from_dims(Rubric::User, [16, 15, 15, 15, 15], PASS_THRESHOLD, "").unwrap();
        assert_eq!((pass.total, pass.passed), (76, true));
        let fail = QualityScore::from_dims(Rubric::User, [14, 15, 15, 15, 15], PASS_THRESHOLD, "").unwrap();
        assert_eq!((fail.total, fail.passed), (74, false));
        let edge = QualityScore::from_dims(Rubric::User, [15; 5], PASS_THRESHOLD, "").unwrap();
        assert!(edge.passed);
    }

    #[test]
    fn status_dimension_is_binary() {
        assert!(QualityScore::from_dims(Rubric::Agent, [20, 20, 20, 20, 10], 75, "").is_err());
        assert!(QualityScore::from_dims(Rubric::User, [20, 20, 20, 20, 10], 75, "").is_ok());
        assert!(QualityScore::from_dims(Rubric::User, [21, 0, 0, 0, 0], 75, "").is_err());
    }

    #[test]
    fn critic_total_is_recomputed() {
        let text = "Sure:\n{\"scores\": {\"tool_usage\": 12, \"reminder_setting\": 12, \"context_understanding\": 20, \
                    \"proactivity\": 12, \"status_accuracy\": 20}, \"total_score\": 90, \"passed\": false, \"feedback\": \"ok\"}";
        let s = parse_critic_output(Rubric::Agent, text, PASS_THRESHOLD).unwrap();
        assert_eq!((s.total, s.passed, s.reported_total), (76, true, Some(90)));
        assert_eq!(s.feedback, "ok");
    }

    #[test]
    fn critic_output_errors() {
        assert!(matches!(parse_critic_output(Rubric::User, "nope", 75), Err(CriticError::Unparseable(_))));
        let missing = "{\"scores\": {\"profile_consistency\": 20}}";
        assert!(matches!(parse_critic_output(Rubric::User, missing, 75), Err(CriticError::Unparseable(_))));
        let big = "{\"scores\": {\"profile_consistency\": 30, \"intention_clarity\": 1, \"intention_shift\": 1, \
                   \"naturalness\": 1, \"contextual_logic\": 1}}";
        assert!(matches!(parse_critic_output(Rubric::User, big, 75), Err(CriticError::DimOutOfRange { .. })));
    }

    #[test]
    fn critic_prompts_fill_placeholders() {
        let p = critic_prompt(Rubric::User, "A student", "User: hi", "I need a laptop");
        assert!(p.contains("**User Profile:**\nA student"));
        assert!(p.contains("\"profile_consistency\": 0-20"));
        assert!(!p.contains("{user_response}"));
        let p = critic_prompt(Rubric::Agent, "", "h", "{\"proactive_action\": \"NO_ACTION\"}");
        assert!(p.contains("\"status_accuracy\": 0/20"));
        assert!(p.contains("{\"proactive_action\": \"NO_ACTION\"}"));
    }

    #[test]
    fn table_one_presets() {
        let train = PipelineConfig::train_set();
        let totals: Vec<u32> = train.requests.iter().map(|r| r.counts.total()).collect();
        assert_eq!(totals, [338, 383, 331]);
        let test = PipelineConfig::test_set();
        assert_eq!(test.requests.iter().map(|r| r.counts.total()).sum::<u32>(), 216);
        assert_eq!(plan_samples(&test).unwrap().len(), 216);
    }

    #[test]
    fn branches_share_scenarios() {
        let cfg = PipelineConfig::scaled(&TEST_DISTRIBUTION[..1], CellCounts::new(2, 2, 1, 1));
        let plans = plan_samples(&cfg).unwrap();
        assert_eq!(plans.len(), 6);
        let seed = |tier, branch, index| {
            plans.iter().find(|p| p.tier == tier && p.branch == branch && p.index == index).unwrap().scenario_seed
        };
        assert_eq!(seed(Tier::Simple, Branch::Positive, 1), seed(Tier::Simple, Branch::Negative, 1));
        assert_ne!(seed(Tier::Simple, Branch::Positive, 0), seed(Tier::Simple, Branch::Positive, 1));
        assert_ne!(seed(Tier::Simple, Branch::Positive, 0), seed(Tier::Complex, Branch::Positive, 0));
    }

    #[test]
    fn unknown_template_is_refused() {
        let cfg = PipelineConfig::from_distribution(&[("space_travel", CellCounts::new(1, 0, 0, 0))]);
        assert_eq!(plan_samples(&cfg), Err(SynthesisError::UnknownTemplate("space_travel".into())));
    }

    #[test]
    fn offline_pipeline_produces_valid_records() {
        let cfg = PipelineConfig::scaled(&TRAIN_DISTRIBUTION[..1], CellCounts::new(2, 0, 0, 0));
        let out = run_pipeline(&cfg, &OfflineActors).unwrap();
        assert_eq!(out.records.len(), 2);
        for r in &out.records {
            assert!(r.assistant_turns_valid());
            assert!(r.conversations.last().unwrap().content.contains("\"status\": \"COMPLETED\""));
        }
        assert!(out.provenance.iter().all(|p| !p.dropped && p.notes == [SIMPLE_SHIFT_NOTE]));
        assert!(run_pipeline(&PipelineConfig::default(), &OfflineActors).unwrap().records.is_empty());
    }
}
