//! The per-agent solver state machine.
//!
//! An agent repeatedly runs improvement cycles over its single variable:
//! apply received value updates and penalty requests, pick the cheapest
//! domain value against the current neighbour view, and propagate the result.
//! When no value strictly improves the penalty-augmented cost while
//! constraints are still violated, the agent is deadlocked; it then imposes a
//! penalty on its current value — a one-step temporary penalty or a lasting
//! incremental one, chosen at random — and asks lower-priority neighbours to
//! do the same, perturbing the cost landscape until the search escapes.
//! Incremental penalties reset the moment the agent's own value is
//! violation-free.
//!
//! Global termination is detected breakout-style: each agent keeps a counter
//! that drops to zero whenever it violates a constraint and otherwise grows
//! to one past the smallest counter its neighbours last reported. Once the
//! counter reaches the farthest-agent distance, consistency has held long
//! enough to cover the whole constraint graph and the agent declares the
//! problem solved.
//!
//! The engine is single-threaded and IO-free; drivers move [`Message`]s
//! between engines and decide when an agent may step (see
//! [`Engine::ready_to_step`]).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::problem::{AgentConfig, ConfigError, ConstraintExpr};
use crate::protocol::{
    FinalStatus, HandshakeOutcome, HandshakeResult, HandshakeTracker, Message, Payload,
};

/// The two penalty flavours used to escape deadlocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PenaltyKind {
    /// One-step weight on the current value, removed immediately after use.
    Temp,
    /// Per-value weight that accumulates and persists until the agent's
    /// value is violation-free.
    Inc,
}

impl PenaltyKind {
    pub fn token(self) -> &'static str {
        match self {
            PenaltyKind::Temp => "TEMP",
            PenaltyKind::Inc => "INC",
        }
    }

    pub fn from_token(token: &str) -> Option<PenaltyKind> {
        match token {
            "TEMP" => Some(PenaltyKind::Temp),
            "INC" => Some(PenaltyKind::Inc),
            _ => None,
        }
    }
}

/// Penalty bookkeeping for one agent.
#[derive(Debug, Clone, Default)]
pub struct PenaltyTable {
    inc: BTreeMap<i64, u64>,
    temp: Option<i64>,
}

impl PenaltyTable {
    pub fn inc_of(&self, value: i64) -> u64 {
        self.inc.get(&value).copied().unwrap_or(0)
    }

    pub fn temp_value(&self) -> Option<i64> {
        self.temp
    }

    pub fn temp_active(&self) -> bool {
        self.temp.is_some()
    }

    pub fn is_clear(&self) -> bool {
        self.temp.is_none() && self.inc.values().all(|&c| c == 0)
    }

    fn add_inc(&mut self, value: i64, step: u64) {
        *self.inc.entry(value).or_insert(0) += step;
    }

    fn set_temp(&mut self, value: i64) {
        self.temp = Some(value);
    }

    fn clear_temp(&mut self) {
        self.temp = None;
    }

    fn reset(&mut self) {
        self.inc.clear();
        self.temp = None;
    }
}

/// Where an agent is in its lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Running,
    /// Termination counter reached the farthest-agent distance.
    Solved,
    /// Iteration cap reached without detecting a solution.
    Interim,
}

impl AgentStatus {
    pub fn token(self) -> &'static str {
        match self {
            AgentStatus::Running => "RUNNING",
            AgentStatus::Solved => "SOLVED",
            AgentStatus::Interim => "INTERIM",
        }
    }
}

/// Latest state a neighbour reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighbourInfo {
    pub value: i64,
    pub round: u64,
    pub tc: u64,
}

/// Outcome of one improvement step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDecision {
    pub new_value: i64,
    pub deadlocked: bool,
    pub penalty_kind: Option<PenaltyKind>,
    pub penalty_recipients: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no value received yet from neighbour `{0}`")]
    MissingNeighbourValue(String),
    #[error("agent is not running (status {0})")]
    NotRunning(&'static str),
    #[error("candidate {0} is not in the domain")]
    NotInDomain(i64),
}

/// One agent's complete solver state, driven through messages.
#[derive(Debug, Clone)]
pub struct Engine {
    config: AgentConfig,
    current_value: i64,
    round: u64,
    penalties: PenaltyTable,
    view: BTreeMap<String, NeighbourInfo>,
    tc: u64,
    status: AgentStatus,
    rng: ChaCha8Rng,
    handshake: HandshakeTracker,
    /// Neighbours that announced FINAL; their view entries are frozen and
    /// they receive no further traffic.
    finished: BTreeSet<String>,
    warnings: Vec<String>,
    skipped_messages: u64,
    last_decision: Option<StepDecision>,
}

impl Engine {
    /// Validates the config and draws the initial value uniformly from the
    /// domain with the seeded generator. Same config and seed, same engine.
    pub fn new(config: AgentConfig) -> Result<Engine, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let idx = rng.gen_range(0..config.domain.len());
        let current_value = config.domain.values()[idx];
        Ok(Engine {
            config,
            current_value,
            round: 0,
            penalties: PenaltyTable::default(),
            view: BTreeMap::new(),
            tc: 0,
            status: AgentStatus::Running,
            rng,
            handshake: HandshakeTracker::new(),
            finished: BTreeSet::new(),
            warnings: Vec::new(),
            skipped_messages: 0,
            last_decision: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn current_value(&self) -> i64 {
        self.current_value
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn termination_counter(&self) -> u64 {
        self.tc
    }

    pub fn status(&self) -> AgentStatus {
        self.status
    }

    pub fn penalties(&self) -> &PenaltyTable {
        &self.penalties
    }

    pub fn view(&self) -> &BTreeMap<String, NeighbourInfo> {
        &self.view
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn skipped_messages(&self) -> u64 {
        self.skipped_messages
    }

    /// The decision taken by the most recent cycle, if any.
    pub fn last_decision(&self) -> Option<&StepDecision> {
        self.last_decision.as_ref()
    }

    fn active_constraints(&self) -> impl Iterator<Item = &ConstraintExpr> {
        self.config.constraints.iter().filter(|c| !c.ignored)
    }

    /// Neighbours that still share a non-ignored constraint with us; only
    /// these take part in messaging and termination counting.
    pub fn active_neighbours(&self) -> BTreeSet<String> {
        self.active_constraints().map(|c| c.other_var.clone()).collect()
    }

    // ------------------------------------------------------------------
    // Startup: handshake and initial values
    // ------------------------------------------------------------------

    /// HANDSHAKE messages announcing our operator to every neighbour.
    pub fn handshake_messages(&self) -> Vec<Message> {
        HandshakeTracker::outbound(&self.config.name, &self.config.constraints)
    }

    /// True once every neighbour's operator has been heard.
    pub fn handshake_complete(&self) -> bool {
        self.handshake.complete(&self.config.constraints)
    }

    /// Settles the handshake: conflicting and unheard neighbours get their
    /// constraints ignored, with a warning recorded. Call once, when all
    /// operators are in or the startup deadline passes.
    pub fn finish_handshake(&mut self) -> Vec<HandshakeResult> {
        let results = self.handshake.finish(&self.config.constraints);
        for result in &results {
            match result.outcome {
                HandshakeOutcome::Consistent => {}
                HandshakeOutcome::Conflict => {
                    self.ignore_constraint(&result.neighbour.clone(), "conflicting operator");
                }
                HandshakeOutcome::Missing => {
                    self.ignore_constraint(&result.neighbour.clone(), "no handshake received");
                }
            }
        }
        results
    }

    /// Drops the constraint shared with an unreachable neighbour so a dead
    /// peer cannot wedge the run. Used for unresolved names and for
    /// neighbours that never sent an initial value.
    pub fn mark_unreachable(&mut self, neighbour: &str, reason: &str) {
        self.ignore_constraint(neighbour, reason);
    }

    fn ignore_constraint(&mut self, neighbour: &str, reason: &str) {
        let name = self.config.name.clone();
        for c in self.config.constraints.iter_mut() {
            if c.other_var == neighbour && !c.ignored {
                c.ignored = true;
                self.warnings
                    .push(format!("{name}: constraint {c} ignored ({reason})"));
            }
        }
    }

    /// Round-0 VALUE broadcast that seeds neighbours' views.
    pub fn initial_messages(&self) -> Vec<Message> {
        self.active_neighbours()
            .into_iter()
            .map(|n| {
                Message::new(
                    self.config.name.clone(),
                    n,
                    0,
                    Payload::Value {
                        value: self.current_value,
                        tc: self.tc,
                    },
                )
            })
            .collect()
    }

    // ------------------------------------------------------------------
    // Message intake
    // ------------------------------------------------------------------

    /// Applies one received message to the local state. Messages that make
    /// no sense here (registry records, unknown senders, duplicate
    /// handshakes) are skipped and counted.
    pub fn apply_message(&mut self, msg: &Message) {
        match &msg.payload {
            Payload::Value { value, tc } => {
                if !self.is_neighbour(&msg.sender) {
                    self.skipped_messages += 1;
                    return;
                }
                let entry = self.view.entry(msg.sender.clone());
                let info = NeighbourInfo {
                    value: *value,
                    round: msg.round,
                    tc: *tc,
                };
                match entry {
                    alloc::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(info);
                    }
                    alloc::collections::btree_map::Entry::Occupied(mut o) => {
                        // A late message from an earlier round is stale.
                        if msg.round >= o.get().round {
                            o.insert(info);
                        }
                    }
                }
            }
            Payload::Penalty(kind) => {
                if self.is_neighbour(&msg.sender) && self.status == AgentStatus::Running {
                    self.receive_penalty(*kind);
                } else {
                    self.skipped_messages += 1;
                }
            }
            Payload::Handshake(op) => {
                if self.handshake.is_done() || !self.is_neighbour(&msg.sender) {
                    self.skipped_messages += 1;
                } else {
                    self.handshake.record(&msg.sender, *op);
                }
            }
            Payload::Final { value, .. } => {
                if !self.is_neighbour(&msg.sender) {
                    self.skipped_messages += 1;
                    return;
                }
                if let Some(info) = self.view.get_mut(&msg.sender) {
                    info.value = *value;
                }
                self.finished.insert(msg.sender.clone());
            }
            _ => self.skipped_messages += 1,
        }
    }

    fn is_neighbour(&self, name: &str) -> bool {
        self.config.constraints.iter().any(|c| c.other_var == name)
    }

    // ------------------------------------------------------------------
    // Cost model
    // ------------------------------------------------------------------

    /// Number of non-ignored constraints violated if this agent took
    /// `candidate` against the current view.
    pub fn violation_count(&self, candidate: i64) -> Result<u64, EngineError> {
        if !self.config.domain.contains(candidate) {
            return Err(EngineError::NotInDomain(candidate));
        }
        let mut violated = 0;
        for c in self.active_constraints() {
            let other = self
                .view
                .get(&c.other_var)
                .ok_or_else(|| EngineError::MissingNeighbourValue(c.other_var.clone()))?;
            if !c.evaluate(candidate, other.value) {
                violated += 1;
            }
        }
        Ok(violated)
    }

    /// Penalty-augmented cost: violations, plus the value's accumulated
    /// incremental penalty, plus the temporary weight if the one-step
    /// penalty sits on this value.
    pub fn effective_cost(&self, candidate: i64) -> Result<u64, EngineError> {
        let mut cost = self.violation_count(candidate)?;
        cost += self.penalties.inc_of(candidate);
        if self.penalties.temp_value() == Some(candidate) {
            cost += self.config.temp_weight;
        }
        Ok(cost)
    }

    /// Cheapest domain value, preferring the current value on ties and then
    /// the earliest value in domain order.
    fn argmin_cost(&self) -> Result<(i64, u64), EngineError> {
        let mut best = self.current_value;
        let mut best_cost = self.effective_cost(best)?;
        for v in self.config.domain.iter() {
            if v == self.current_value {
                continue;
            }
            let cost = self.effective_cost(v)?;
            if cost < best_cost {
                best = v;
                best_cost = cost;
            }
        }
        Ok((best, best_cost))
    }

    // ------------------------------------------------------------------
    // Improvement
    // ------------------------------------------------------------------

    /// Runs one improvement step against the current view, applying any
    /// value move, penalty imposition and penalty reset to the state.
    ///
    /// Violation-free agents keep their value and reset every penalty. A
    /// violating agent moves only on a strict cost improvement; otherwise it
    /// is deadlocked and imposes a randomly chosen penalty kind on its
    /// current value, re-picks the cheapest value under the perturbed costs,
    /// and names the lower-priority neighbours that must apply the same
    /// penalty. The temporary penalty never outlives the step that used it.
    pub fn improvement_step(&mut self) -> Result<StepDecision, EngineError> {
        if self.violation_count(self.current_value)? == 0 {
            self.penalties.reset();
            return Ok(StepDecision {
                new_value: self.current_value,
                deadlocked: false,
                penalty_kind: None,
                penalty_recipients: BTreeSet::new(),
            });
        }

        let current_cost = self.effective_cost(self.current_value)?;
        let (best, best_cost) = self.argmin_cost()?;
        if best_cost < current_cost {
            self.current_value = best;
            self.penalties.clear_temp();
            return Ok(StepDecision {
                new_value: best,
                deadlocked: false,
                penalty_kind: None,
                penalty_recipients: BTreeSet::new(),
            });
        }

        // Deadlock: no strictly better value exists.
        let kind = if self.rng.gen_bool(0.5) {
            PenaltyKind::Temp
        } else {
            PenaltyKind::Inc
        };
        let recipients = self.penalty_recipients(kind)?;
        self.impose_penalty(kind);
        let (new_value, _) = self.argmin_cost()?;
        self.current_value = new_value;
        self.penalties.clear_temp();
        Ok(StepDecision {
            new_value,
            deadlocked: true,
            penalty_kind: Some(kind),
            penalty_recipients: recipients,
        })
    }

    /// Who must share a penalty we impose: every lower-priority (name order)
    /// active neighbour for incremental penalties; for temporary ones, only
    /// those currently violating the constraint they share with us.
    pub fn penalty_recipients(&self, kind: PenaltyKind) -> Result<BTreeSet<String>, EngineError> {
        let mut recipients = BTreeSet::new();
        for c in self.active_constraints() {
            if c.other_var.as_str() <= self.config.name.as_str() {
                continue;
            }
            match kind {
                PenaltyKind::Inc => {
                    recipients.insert(c.other_var.clone());
                }
                PenaltyKind::Temp => {
                    let other = self
                        .view
                        .get(&c.other_var)
                        .ok_or_else(|| EngineError::MissingNeighbourValue(c.other_var.clone()))?;
                    if !c.evaluate(self.current_value, other.value) {
                        recipients.insert(c.other_var.clone());
                    }
                }
            }
        }
        Ok(recipients)
    }

    fn impose_penalty(&mut self, kind: PenaltyKind) {
        match kind {
            PenaltyKind::Inc => self.penalties.add_inc(self.current_value, self.config.inc_step),
            PenaltyKind::Temp => self.penalties.set_temp(self.current_value),
        }
    }

    /// Applies a penalty requested by a neighbour to our current value.
    pub fn receive_penalty(&mut self, kind: PenaltyKind) {
        self.impose_penalty(kind);
    }

    // ------------------------------------------------------------------
    // Termination detection
    // ------------------------------------------------------------------

    /// Recomputes the termination counter: zero while our own value violates
    /// a constraint, otherwise one past the smallest counter our neighbours
    /// last reported. With no active neighbours the counter jumps straight
    /// to the threshold. Returns the new counter.
    pub fn update_termination_counter(&mut self) -> Result<u64, EngineError> {
        if self.violation_count(self.current_value)? > 0 {
            self.tc = 0;
            return Ok(0);
        }
        let neighbours = self.active_neighbours();
        self.tc = if neighbours.is_empty() {
            self.config.diameter
        } else {
            let mut min_tc = u64::MAX;
            for n in &neighbours {
                let info = self
                    .view
                    .get(n)
                    .ok_or_else(|| EngineError::MissingNeighbourValue(n.clone()))?;
                min_tc = min_tc.min(info.tc);
            }
            1 + min_tc
        };
        Ok(self.tc)
    }

    // ------------------------------------------------------------------
    // Cycle driver
    // ------------------------------------------------------------------

    /// True when the pipelined name-order schedule allows the next step:
    /// lower-named active neighbours must have reported this upcoming round,
    /// higher-named ones the previous round. Finished neighbours are never
    /// waited on. Drivers may step anyway once their timeout expires,
    /// treating the view as unchanged.
    pub fn ready_to_step(&self) -> bool {
        let upcoming = self.round + 1;
        for n in self.active_neighbours() {
            if self.finished.contains(&n) {
                continue;
            }
            let needed = if n.as_str() < self.config.name.as_str() {
                upcoming
            } else {
                upcoming - 1
            };
            match self.view.get(&n) {
                Some(info) if info.round >= needed => {}
                _ => return false,
            }
        }
        true
    }

    /// Runs one full cycle: applies the inbox, steps, refreshes the
    /// termination counter, advances the round, settles the status, and
    /// returns the outbound traffic (VALUE to every active neighbour,
    /// PENALTY to the step's recipients, FINAL on leaving RUNNING).
    pub fn run_cycle(&mut self, inbox: &[Message]) -> Result<Vec<Message>, EngineError> {
        if self.status != AgentStatus::Running {
            return Err(EngineError::NotRunning(self.status.token()));
        }
        for msg in inbox {
            self.apply_message(msg);
        }
        let decision = self.improvement_step()?;
        self.last_decision = Some(decision.clone());
        self.update_termination_counter()?;
        self.round += 1;

        if self.tc >= self.config.diameter {
            self.status = AgentStatus::Solved;
        } else if self.round >= self.config.max_iterations {
            self.status = AgentStatus::Interim;
        }

        let mut out = Vec::new();
        let name = self.config.name.clone();
        for n in self.active_neighbours() {
            if self.finished.contains(&n) {
                continue;
            }
            out.push(Message::new(
                name.clone(),
                n,
                self.round,
                Payload::Value {
                    value: self.current_value,
                    tc: self.tc,
                },
            ));
        }
        if let Some(kind) = decision.penalty_kind {
            for r in &decision.penalty_recipients {
                if self.finished.contains(r) {
                    continue;
                }
                out.push(Message::new(name.clone(), r.clone(), self.round, Payload::Penalty(kind)));
            }
        }
        if self.status != AgentStatus::Running {
            let status = match self.status {
                AgentStatus::Solved => FinalStatus::Solved,
                _ => FinalStatus::Interim,
            };
            for n in self.active_neighbours() {
                if self.finished.contains(&n) {
                    continue;
                }
                out.push(Message::new(
                    name.clone(),
                    n,
                    self.round,
                    Payload::Final {
                        value: self.current_value,
                        status,
                    },
                ));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{parse_constraints, parse_domain, ComparisonOp};
    use alloc::string::ToString;
    use alloc::vec;

    fn engine(name: &str, domain: &str, constraints: &str) -> Engine {
        let cfg = AgentConfig::new(
            name,
            parse_domain(domain).unwrap(),
            parse_constraints(constraints, name).unwrap(),
        );
        Engine::new(cfg).unwrap()
    }

    fn seed_view(e: &mut Engine, entries: &[(&str, i64)]) {
        for (n, v) in entries {
            e.apply_message(&Message::new(*n, e.name().to_string(), 0, Payload::Value { value: *v, tc: 0 }));
        }
    }

    fn set_value(e: &mut Engine, v: i64) {
        e.current_value = v;
    }

    #[test]
    fn counts_violations_against_view() {
        let mut e = engine("A", "1,2,3,4,5", "A>B");
        seed_view(&mut e, &[("B", 2)]);
        assert_eq!(e.violation_count(4).unwrap(), 0);
        assert_eq!(e.violation_count(1).unwrap(), 1);

        let mut e = engine("A", "1,2,3,4,5", "A=B");
        seed_view(&mut e, &[("B", 6)]);
        assert_eq!(e.violation_count(2).unwrap(), 1);

        let mut e = engine("A", "1,2,3,4,5", "A>B,A<C");
        seed_view(&mut e, &[("B", 4), ("C", 9)]);
        assert_eq!(e.violation_count(5).unwrap(), 0);
    }

    #[test]
    fn violation_count_needs_complete_view() {
        let e = engine("A", "1,2", "A>B");
        assert_eq!(
            e.violation_count(1),
            Err(EngineError::MissingNeighbourValue("B".into()))
        );
    }

    #[test]
    fn ignored_constraints_do_not_count() {
        let mut e = engine("A", "1,2", "A>B");
        e.mark_unreachable("B", "test");
        assert_eq!(e.violation_count(1).unwrap(), 0);
        assert!(e.active_neighbours().is_empty());
        assert_eq!(e.warnings().len(), 1);
    }

    #[test]
    fn effective_cost_adds_penalties() {
        let mut e = engine("A", "1,2,3", "A=B");
        seed_view(&mut e, &[("B", 9)]);
        set_value(&mut e, 1);
        // 1 violation + inc 2.
        e.penalties.add_inc(1, 2);
        assert_eq!(e.effective_cost(1).unwrap(), 3);
        // 0 violations is impossible here; use a constraint-free engine for
        // the temp-only case.
        let mut f = engine("A", "1,2,3", "");
        f.penalties.set_temp(2);
        assert_eq!(f.effective_cost(2).unwrap(), 3);
        assert_eq!(f.effective_cost(1).unwrap(), 0);
    }

    #[test]
    fn improvement_moves_to_cheapest_value() {
        let mut e = engine("A", "1,2,3", "A>B");
        seed_view(&mut e, &[("B", 2)]);
        set_value(&mut e, 1);
        // costs over {1,2,3} = {1,1,0}
        let d = e.improvement_step().unwrap();
        assert_eq!(d.new_value, 3);
        assert!(!d.deadlocked);
        assert_eq!(e.current_value(), 3);
    }

    #[test]
    fn consistent_agent_keeps_value_and_resets_penalties() {
        let mut e = engine("A", "1,2,3", "A>B");
        seed_view(&mut e, &[("B", 2)]);
        set_value(&mut e, 3);
        e.penalties.add_inc(3, 4);
        e.penalties.set_temp(1);
        let d = e.improvement_step().unwrap();
        assert_eq!(d.new_value, 3);
        assert!(!d.deadlocked);
        assert!(e.penalties().is_clear());
    }

    #[test]
    fn deadlock_imposes_penalty_and_escapes() {
        let mut e = engine("A", "1,2", "A=B");
        seed_view(&mut e, &[("B", 5)]);
        set_value(&mut e, 1);
        let d = e.improvement_step().unwrap();
        assert!(d.deadlocked);
        assert!(d.penalty_kind.is_some());
        // Whatever the kind, value 1 got weighted and 2 is now cheaper.
        assert_eq!(d.new_value, 2);
        assert!(!e.penalties().temp_active(), "temp penalty must not survive the step");
    }

    #[test]
    fn tie_break_prefers_current_then_domain_order() {
        // All of {5,1,3} violate A=B equally; staying put wins.
        let mut e = engine("A", "5,1,3", "A=B");
        seed_view(&mut e, &[("B", 9)]);
        set_value(&mut e, 3);
        let d = e.improvement_step().unwrap();
        assert!(d.deadlocked);
        if d.penalty_kind == Some(PenaltyKind::Inc) {
            // inc lands on 3; 5 is the earliest of the remaining tie.
            assert_eq!(d.new_value, 5);
        }
    }

    #[test]
    fn penalty_recipients_follow_name_order() {
        let mut e = engine("B", "1,2", "B>A,B<C,B=D");
        seed_view(&mut e, &[("A", 0), ("C", 9), ("D", 7)]);
        set_value(&mut e, 1);
        let inc = e.penalty_recipients(PenaltyKind::Inc).unwrap();
        assert_eq!(inc, BTreeSet::from(["C".to_string(), "D".to_string()]));
        // B=1 satisfies B<C (1<9) but violates B=D (1!=7): temp goes to D only.
        let temp = e.penalty_recipients(PenaltyKind::Temp).unwrap();
        assert_eq!(temp, BTreeSet::from(["D".to_string()]));
    }

    #[test]
    fn no_lower_priority_neighbours_means_no_recipients() {
        let mut e = engine("D", "1", "D>A,D<B");
        seed_view(&mut e, &[("A", 0), ("B", 9)]);
        assert!(e.penalty_recipients(PenaltyKind::Inc).unwrap().is_empty());
    }

    #[test]
    fn received_penalties_accumulate() {
        let mut e = engine("A", "1,2,3", "");
        set_value(&mut e, 3);
        e.receive_penalty(PenaltyKind::Inc);
        assert_eq!(e.penalties().inc_of(3), 1);
        e.receive_penalty(PenaltyKind::Inc);
        assert_eq!(e.penalties().inc_of(3), 2);
        e.receive_penalty(PenaltyKind::Temp);
        assert_eq!(e.penalties().temp_value(), Some(3));
    }

    #[test]
    fn termination_counter_follows_recurrence() {
        let mut e = engine("B", "1,2,3", "B>A,B<C");
        seed_view(&mut e, &[("A", 0), ("C", 9)]);
        set_value(&mut e, 2);
        // Consistent, neighbour tcs default 0 -> 1.
        assert_eq!(e.update_termination_counter().unwrap(), 1);
        e.apply_message(&Message::new("A", "B", 1, Payload::Value { value: 0, tc: 2 }));
        e.apply_message(&Message::new("C", "B", 1, Payload::Value { value: 9, tc: 3 }));
        assert_eq!(e.update_termination_counter().unwrap(), 3);
        // A violated constraint zeroes the counter.
        e.apply_message(&Message::new("A", "B", 2, Payload::Value { value: 5, tc: 0 }));
        assert_eq!(e.update_termination_counter().unwrap(), 0);
    }

    #[test]
    fn agent_without_neighbours_jumps_to_threshold() {
        let mut e = engine("A", "4", "");
        e.config.diameter = 3;
        assert_eq!(e.update_termination_counter().unwrap(), 3);
        let out = e.run_cycle(&[]).unwrap();
        assert_eq!(e.status(), AgentStatus::Solved);
        assert!(out.is_empty());
    }

    #[test]
    fn initialize_is_deterministic_and_in_domain() {
        let cfg = AgentConfig::new("A", parse_domain("7").unwrap(), vec![]);
        assert_eq!(Engine::new(cfg).unwrap().current_value(), 7);

        let mk = || {
            let mut cfg = AgentConfig::new(
                "A",
                parse_domain("1,2,3,4,5").unwrap(),
                vec![],
            );
            cfg.seed = 42;
            Engine::new(cfg).unwrap()
        };
        assert_eq!(mk().current_value(), mk().current_value());
    }

    #[test]
    fn initial_draw_is_roughly_uniform() {
        // 10_000 seeds over 5 values: expect 2000 each, sigma = 40.
        let domain = parse_domain("1,2,3,4,5").unwrap();
        let mut counts = BTreeMap::new();
        for seed in 0..10_000u64 {
            let mut cfg = AgentConfig::new("A", domain.clone(), vec![]);
            cfg.seed = seed;
            let e = Engine::new(cfg).unwrap();
            *counts.entry(e.current_value()).or_insert(0u64) += 1;
        }
        for v in domain.iter() {
            let c = counts.get(&v).copied().unwrap_or(0);
            assert!((1800..=2200).contains(&c), "value {v} drawn {c} times");
        }
    }

    #[test]
    fn run_cycle_reaches_interim_at_cap() {
        let mut e = engine("A", "1,2", "A=B");
        e.config.max_iterations = 3;
        seed_view(&mut e, &[("B", 9)]);
        for _ in 0..3 {
            e.run_cycle(&[]).unwrap();
        }
        assert_eq!(e.status(), AgentStatus::Interim);
        assert_eq!(e.round(), 3);
        assert!(e.run_cycle(&[]).is_err());
    }

    #[test]
    fn run_cycle_emits_value_and_final() {
        let mut e = engine("A", "1,2,3", "A>B");
        e.config.diameter = 1;
        seed_view(&mut e, &[("B", 2)]);
        let out = e.run_cycle(&[]).unwrap();
        // Solved in one cycle: VALUE then FINAL to B.
        assert_eq!(e.status(), AgentStatus::Solved);
        assert_eq!(out.len(), 2);
        assert!(matches!(out[0].payload, Payload::Value { .. }));
        assert!(matches!(out[1].payload, Payload::Final { .. }));
        assert_eq!(out[0].round, 1);
    }

    #[test]
    fn empty_inbox_keeps_view_and_proceeds() {
        let mut e = engine("A", "1,2,3", "A>B");
        seed_view(&mut e, &[("B", 2)]);
        let before = *e.view().get("B").unwrap();
        e.run_cycle(&[]).unwrap();
        assert_eq!(e.view().get("B"), Some(&before));
        assert_eq!(e.round(), 1);
    }

    #[test]
    fn contextually_invalid_messages_are_counted() {
        let mut e = engine("A", "1,2", "A>B");
        seed_view(&mut e, &[("B", 1)]);
        let junk = vec![
            Message::new("Z", "A", 1, Payload::Value { value: 1, tc: 0 }),
            Message::new("B", "A", 0, Payload::Lookup),
        ];
        e.run_cycle(&junk).unwrap();
        assert_eq!(e.skipped_messages(), 2);
    }

    #[test]
    fn stale_value_does_not_replace_newer() {
        let mut e = engine("A", "1,2", "A>B");
        e.apply_message(&Message::new("B", "A", 5, Payload::Value { value: 9, tc: 2 }));
        e.apply_message(&Message::new("B", "A", 3, Payload::Value { value: 1, tc: 1 }));
        let info = e.view().get("B").unwrap();
        assert_eq!((info.value, info.round, info.tc), (9, 5, 2));
    }

    #[test]
    fn readiness_follows_name_order_pipeline() {
        let mut e = engine("B", "1,2", "B>A,B<C");
        // Cycle 1 needs A at round >= 1 and C at round >= 0.
        assert!(!e.ready_to_step());
        e.apply_message(&Message::new("A", "B", 0, Payload::Value { value: 1, tc: 0 }));
        e.apply_message(&Message::new("C", "B", 0, Payload::Value { value: 9, tc: 0 }));
        assert!(!e.ready_to_step(), "A has only reported round 0");
        e.apply_message(&Message::new("A", "B", 1, Payload::Value { value: 1, tc: 0 }));
        assert!(e.ready_to_step());
        // Finished neighbours are never waited on.
        let mut f = engine("B", "1,2", "B>A");
        f.apply_message(&Message::new("A", "B", 0, Payload::Value { value: 1, tc: 0 }));
        f.apply_message(&Message::new(
            "A",
            "B",
            0,
            Payload::Final {
                value: 1,
                status: FinalStatus::Solved,
            },
        ));
        assert!(f.ready_to_step());
    }

    #[test]
    fn handshake_conflict_ignores_constraint_on_finish() {
        let mut e = engine("A", "1,2", "A>B");
        e.apply_message(&Message::new("B", "A", 0, Payload::Handshake(ComparisonOp::Gt)));
        let results = e.finish_handshake();
        assert_eq!(results[0].outcome, HandshakeOutcome::Conflict);
        assert!(e.config().constraints[0].ignored);
        assert_eq!(e.warnings().len(), 1);
    }
}
