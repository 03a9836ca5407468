//! Variables, integer domains and binary comparison constraints, plus the
//! text grammars agents accept for them.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// The six comparison operators a constraint expression may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComparisonOp {
    Gt,
    Lt,
    Ne,
    Eq,
    Ge,
    Le,
}

impl ComparisonOp {
    pub const ALL: [ComparisonOp; 6] = [
        ComparisonOp::Gt,
        ComparisonOp::Lt,
        ComparisonOp::Ne,
        ComparisonOp::Eq,
        ComparisonOp::Ge,
        ComparisonOp::Le,
    ];

    /// The operator seen from the other endpoint: `x > y` holds exactly when
    /// `y < x` does. `=` and `!=` are their own mirrors.
    pub fn mirror(self) -> ComparisonOp {
        match self {
            ComparisonOp::Gt => ComparisonOp::Lt,
            ComparisonOp::Lt => ComparisonOp::Gt,
            ComparisonOp::Ge => ComparisonOp::Le,
            ComparisonOp::Le => ComparisonOp::Ge,
            ComparisonOp::Eq => ComparisonOp::Eq,
            ComparisonOp::Ne => ComparisonOp::Ne,
        }
    }

    pub fn holds(self, left: i64, right: i64) -> bool {
        match self {
            ComparisonOp::Gt => left > right,
            ComparisonOp::Lt => left < right,
            ComparisonOp::Ne => left != right,
            ComparisonOp::Eq => left == right,
            ComparisonOp::Ge => left >= right,
            ComparisonOp::Le => left <= right,
        }
    }

    /// Expression-grammar spelling (`>`, `<`, `!=`, `=`, `>=`, `<=`).
    pub fn symbol(self) -> &'static str {
        match self {
            ComparisonOp::Gt => ">",
            ComparisonOp::Lt => "<",
            ComparisonOp::Ne => "!=",
            ComparisonOp::Eq => "=",
            ComparisonOp::Ge => ">=",
            ComparisonOp::Le => "<=",
        }
    }

    /// Wire token used in handshake payloads.
    pub fn token(self) -> &'static str {
        match self {
            ComparisonOp::Gt => "GT",
            ComparisonOp::Lt => "LT",
            ComparisonOp::Ne => "NE",
            ComparisonOp::Eq => "EQ",
            ComparisonOp::Ge => "GE",
            ComparisonOp::Le => "LE",
        }
    }

    pub fn from_token(token: &str) -> Option<ComparisonOp> {
        Self::ALL.iter().copied().find(|op| op.token() == token)
    }
}

impl fmt::Display for ComparisonOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One directed binary constraint, evaluated by the owner of `self_var`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintExpr {
    pub self_var: String,
    pub op: ComparisonOp,
    pub other_var: String,
    /// Set when the startup handshake found the neighbour's expression
    /// conflicting (or the neighbour unreachable); ignored constraints take
    /// no part in evaluation.
    pub ignored: bool,
}

impl ConstraintExpr {
    pub fn new(self_var: impl Into<String>, op: ComparisonOp, other_var: impl Into<String>) -> Self {
        ConstraintExpr {
            self_var: self_var.into(),
            op,
            other_var: other_var.into(),
            ignored: false,
        }
    }

    /// Truth of `self_value op other_value`.
    pub fn evaluate(&self, self_value: i64, other_value: i64) -> bool {
        self.op.holds(self_value, other_value)
    }
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.self_var, self.op, self.other_var)
    }
}

/// Ordered list of distinct integers a variable may take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    values: Vec<i64>,
}

impl Domain {
    /// Builds a domain, rejecting empty lists and duplicates. Input order is
    /// preserved: the engine's tie-breaking is defined over it.
    pub fn new(values: Vec<i64>) -> Result<Domain, ParseError> {
        if values.is_empty() {
            return Err(ParseError::EmptyDomain);
        }
        let mut seen = BTreeSet::new();
        for &v in &values {
            if !seen.insert(v) {
                return Err(ParseError::DuplicateDomainValue(v));
            }
        }
        Ok(Domain { values })
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, value: i64) -> bool {
        self.values.contains(&value)
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.values.iter().copied()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Errors from the domain and constraint text grammars.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("domain is empty")]
    EmptyDomain,
    #[error("domain token `{0}` is not an integer")]
    NonIntegerDomainValue(String),
    #[error("duplicate domain value {0}")]
    DuplicateDomainValue(i64),
    #[error("constraint `{0}` must start with this agent's variable name `{1}`")]
    ConstraintNotOwnedBySelf(String, String),
    #[error("constraint `{0}` has no comparison operator (expected one of >, <, !=, =, >=, <=)")]
    MissingOperator(String),
    #[error("constraint `{0}` references this agent's own variable on both sides")]
    SelfReference(String),
    #[error("more than one constraint against neighbour `{0}` (at most one per pair)")]
    DuplicateNeighbour(String),
    #[error("`{0}` is not a valid variable name (letter followed by letters, digits or `_`)")]
    BadName(String),
    #[error("constraint expression is empty")]
    EmptyConstraint,
}

/// Variable names double as agent names and travel on the wire, so the
/// grammar keeps them clear of delimiters and operator characters.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses a comma-separated integer domain, e.g. `"1, 2,3"`.
pub fn parse_domain(text: &str) -> Result<Domain, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyDomain);
    }
    let mut values = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        let value = token
            .parse::<i64>()
            .map_err(|_| ParseError::NonIntegerDomainValue(token.to_string()))?;
        values.push(value);
    }
    Domain::new(values)
}

/// Parses a comma-separated list of constraint expressions owned by
/// `self_name`, e.g. `"A>B, A<C"` for agent `A`. Blank text means the agent
/// has no constraints.
pub fn parse_constraints(text: &str, self_name: &str) -> Result<Vec<ConstraintExpr>, ParseError> {
    if !is_valid_name(self_name) {
        return Err(ParseError::BadName(self_name.to_string()));
    }
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut constraints = Vec::new();
    let mut neighbours = BTreeSet::new();
    for raw in text.split(',') {
        let expr = parse_constraint_expr(raw, self_name)?;
        if !neighbours.insert(expr.other_var.clone()) {
            return Err(ParseError::DuplicateNeighbour(expr.other_var));
        }
        constraints.push(expr);
    }
    Ok(constraints)
}

fn parse_constraint_expr(raw: &str, self_name: &str) -> Result<ConstraintExpr, ParseError> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(ParseError::EmptyConstraint);
    }
    let rest = text
        .strip_prefix(self_name)
        .ok_or_else(|| ParseError::ConstraintNotOwnedBySelf(text.to_string(), self_name.to_string()))?;
    let rest = rest.trim_start();
    // Longest operators first so ">=" is not read as ">" followed by "=5".
    const OPS: [(&str, ComparisonOp); 6] = [
        (">=", ComparisonOp::Ge),
        ("<=", ComparisonOp::Le),
        ("!=", ComparisonOp::Ne),
        (">", ComparisonOp::Gt),
        ("<", ComparisonOp::Lt),
        ("=", ComparisonOp::Eq),
    ];
    let (op, tail) = OPS
        .iter()
        .find_map(|(sym, op)| rest.strip_prefix(sym).map(|tail| (*op, tail)))
        .ok_or_else(|| {
            if rest.starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_') {
                // The text before the operator was longer than self_name.
                ParseError::ConstraintNotOwnedBySelf(text.to_string(), self_name.to_string())
            } else {
                ParseError::MissingOperator(text.to_string())
            }
        })?;
    let other = tail.trim();
    if !is_valid_name(other) {
        return Err(ParseError::BadName(other.to_string()));
    }
    if other == self_name {
        return Err(ParseError::SelfReference(text.to_string()));
    }
    Ok(ConstraintExpr::new(self_name, op, other))
}

/// Configuration errors detected before an agent starts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid agent name `{0}`")]
    BadAgentName(String),
    #[error("constraint `{0}` does not belong to agent `{1}`")]
    ForeignConstraint(String, String),
    #[error("more than one constraint against neighbour `{0}`")]
    DuplicateNeighbour(String),
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("duplicate agent name `{0}` in problem")]
    DuplicateAgent(String),
    #[error("agent `{0}` constrains unknown agent `{1}`")]
    UnknownNeighbour(String, String),
}

/// Everything one agent knows at startup.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub name: String,
    pub domain: Domain,
    pub constraints: Vec<ConstraintExpr>,
    /// Improvement cycles after which the agent stops and reports an interim
    /// assignment. Deliberately not validated across agents.
    pub max_iterations: u64,
    /// Farthest-agent distance: the termination counter threshold.
    pub diameter: u64,
    pub registry_addr: String,
    pub listen_addr: String,
    pub seed: u64,
    /// Per-cycle wait for neighbour messages before assuming their values
    /// unchanged.
    pub timeout_ms: u64,
    /// Cost added to a value carrying the one-step temporary penalty.
    pub temp_weight: u64,
    /// Increment applied per incremental penalty request.
    pub inc_step: u64,
}

impl AgentConfig {
    /// A config with the default penalty weights and timeout; network
    /// addresses are unused by in-process drivers and default empty.
    pub fn new(name: impl Into<String>, domain: Domain, constraints: Vec<ConstraintExpr>) -> Self {
        AgentConfig {
            name: name.into(),
            domain,
            constraints,
            max_iterations: 100,
            diameter: 1,
            registry_addr: String::new(),
            listen_addr: String::new(),
            seed: 0,
            timeout_ms: 500,
            temp_weight: 3,
            inc_step: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_valid_name(&self.name) {
            return Err(ConfigError::BadAgentName(self.name.clone()));
        }
        let mut neighbours = BTreeSet::new();
        for c in &self.constraints {
            if c.self_var != self.name {
                return Err(ConfigError::ForeignConstraint(c.to_string(), self.name.clone()));
            }
            if !neighbours.insert(c.other_var.as_str()) {
                return Err(ConfigError::DuplicateNeighbour(c.other_var.clone()));
            }
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::NonPositive("max_iterations"));
        }
        if self.diameter == 0 {
            return Err(ConfigError::NonPositive("diameter"));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::NonPositive("timeout_ms"));
        }
        if self.inc_step == 0 {
            return Err(ConfigError::NonPositive("inc_step"));
        }
        if self.temp_weight == 0 {
            return Err(ConfigError::NonPositive("temp_weight"));
        }
        Ok(())
    }

    /// Distinct neighbours named by the constraint list.
    pub fn neighbours(&self) -> BTreeSet<String> {
        self.constraints.iter().map(|c| c.other_var.clone()).collect()
    }
}

/// One agent's slice of a whole-problem file: name, domain and directed
/// constraints, exactly what that agent would be started with.
#[derive(Debug, Clone)]
pub struct ProblemAgent {
    pub name: String,
    pub domain: Domain,
    pub constraints: Vec<ConstraintExpr>,
}

/// A whole problem collected into one description, consumed by solve mode
/// and the oracle. Deployed agents never see more than their own entry.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub agents: Vec<ProblemAgent>,
    pub max_iterations: u64,
    /// Farthest-agent distance; when absent, drivers derive it from the
    /// constraint graph.
    pub diameter: Option<u64>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = BTreeSet::new();
        for agent in &self.agents {
            if !is_valid_name(&agent.name) {
                return Err(ConfigError::BadAgentName(agent.name.clone()));
            }
            if !names.insert(agent.name.as_str()) {
                return Err(ConfigError::DuplicateAgent(agent.name.clone()));
            }
        }
        for agent in &self.agents {
            let mut neighbours = BTreeSet::new();
            for c in &agent.constraints {
                if c.self_var != agent.name {
                    return Err(ConfigError::ForeignConstraint(c.to_string(), agent.name.clone()));
                }
                if !neighbours.insert(c.other_var.as_str()) {
                    return Err(ConfigError::DuplicateNeighbour(c.other_var.clone()));
                }
                if !names.contains(c.other_var.as_str()) {
                    return Err(ConfigError::UnknownNeighbour(agent.name.clone(), c.other_var.clone()));
                }
            }
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::NonPositive("max_iterations"));
        }
        if self.diameter == Some(0) {
            return Err(ConfigError::NonPositive("diameter"));
        }
        Ok(())
    }

    pub fn agent(&self, name: &str) -> Option<&ProblemAgent> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn agent_names(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.name.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parses_comma_separated_domain() {
        let d = parse_domain("1,2,3,4,5").unwrap();
        assert_eq!(d.values(), &[1, 2, 3, 4, 5]);
    }

    #[test]
    fn parses_single_value_domain() {
        assert_eq!(parse_domain("7").unwrap().values(), &[7]);
    }

    #[test]
    fn rejects_non_integer_domain_token() {
        assert_eq!(
            parse_domain("1,2,x"),
            Err(ParseError::NonIntegerDomainValue("x".into()))
        );
    }

    #[test]
    fn rejects_empty_and_duplicate_domains() {
        assert_eq!(parse_domain("  "), Err(ParseError::EmptyDomain));
        assert_eq!(parse_domain("1,2,1"), Err(ParseError::DuplicateDomainValue(1)));
    }

    #[test]
    fn domain_tolerates_whitespace_and_negatives() {
        let d = parse_domain(" -1 , 0 ,  2 ").unwrap();
        assert_eq!(d.values(), &[-1, 0, 2]);
    }

    #[test]
    fn parses_constraint_list() {
        let cs = parse_constraints("A>B,A<C", "A").unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0], ConstraintExpr::new("A", ComparisonOp::Gt, "B"));
        assert_eq!(cs[1], ConstraintExpr::new("A", ComparisonOp::Lt, "C"));
        assert!(!cs[0].ignored);
    }

    #[test]
    fn parses_two_char_operators_longest_first() {
        let cs = parse_constraints("A<=D", "A").unwrap();
        assert_eq!(cs, vec![ConstraintExpr::new("A", ComparisonOp::Le, "D")]);
        let cs = parse_constraints("A >= B , A != C", "A").unwrap();
        assert_eq!(cs[0].op, ComparisonOp::Ge);
        assert_eq!(cs[1].op, ComparisonOp::Ne);
    }

    #[test]
    fn rejects_constraint_not_starting_with_self() {
        let err = parse_constraints("B>A", "A").unwrap_err();
        assert!(matches!(err, ParseError::ConstraintNotOwnedBySelf(_, _)));
    }

    #[test]
    fn rejects_longer_variable_prefix() {
        // "AB" is a different variable even though it starts with "A".
        let err = parse_constraints("AB>C", "A").unwrap_err();
        assert!(matches!(err, ParseError::ConstraintNotOwnedBySelf(_, _)));
    }

    #[test]
    fn rejects_self_reference_and_duplicate_pair() {
        assert!(matches!(
            parse_constraints("A=A", "A").unwrap_err(),
            ParseError::SelfReference(_)
        ));
        assert_eq!(
            parse_constraints("A>B,A<B", "A").unwrap_err(),
            ParseError::DuplicateNeighbour("B".into())
        );
    }

    #[test]
    fn empty_constraint_text_means_no_constraints() {
        assert!(parse_constraints("", "A").unwrap().is_empty());
        assert!(parse_constraints("   ", "A").unwrap().is_empty());
    }

    #[test]
    fn mirror_swaps_strict_and_weak_orders() {
        assert_eq!(ComparisonOp::Gt.mirror(), ComparisonOp::Lt);
        assert_eq!(ComparisonOp::Eq.mirror(), ComparisonOp::Eq);
        for op in ComparisonOp::ALL {
            assert_eq!(op.mirror().mirror(), op);
        }
    }

    #[test]
    fn evaluates_comparisons() {
        let gt = ConstraintExpr::new("A", ComparisonOp::Gt, "B");
        assert!(gt.evaluate(4, 2));
        let eq = ConstraintExpr::new("A", ComparisonOp::Eq, "B");
        assert!(!eq.evaluate(2, 6));
        let ne = ConstraintExpr::new("A", ComparisonOp::Ne, "B");
        assert!(!ne.evaluate(5, 5));
    }

    #[test]
    fn operator_tokens_round_trip() {
        for op in ComparisonOp::ALL {
            assert_eq!(ComparisonOp::from_token(op.token()), Some(op));
        }
        assert_eq!(ComparisonOp::from_token("GG"), None);
    }

    #[test]
    fn name_grammar() {
        assert!(is_valid_name("A"));
        assert!(is_valid_name("agent_2"));
        assert!(!is_valid_name(""));
        assert!(!is_valid_name("2agent"));
        assert!(!is_valid_name("a|b"));
        assert!(!is_valid_name("a b"));
    }

    #[test]
    fn config_validation_catches_foreign_constraints() {
        let domain = parse_domain("1,2").unwrap();
        let mut cfg = AgentConfig::new("A", domain, parse_constraints("A>B", "A").unwrap());
        assert!(cfg.validate().is_ok());
        cfg.constraints[0].self_var = "B".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::ForeignConstraint(_, _))));
    }

    #[test]
    fn problem_validation_catches_unknown_neighbour() {
        let spec = ProblemSpec {
            agents: vec![ProblemAgent {
                name: "A".into(),
                domain: parse_domain("1").unwrap(),
                constraints: parse_constraints("A>Z", "A").unwrap(),
            }],
            max_iterations: 100,
            diameter: None,
        };
        assert_eq!(
            spec.validate(),
            Err(ConfigError::UnknownNeighbour("A".into(), "Z".into()))
        );
    }
}
