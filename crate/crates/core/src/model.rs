//! ReKo knowledge modules: the on-disk document, its validation rules and
//! the compiled, indexed form the engine reads.
//!
//! A module is plain data. It is parsed from JSON, checked by [`validate`],
//! and only then compiled into a [`KnowledgeBase`]. Every engine entry point
//! takes a `KnowledgeBase`, so a module that fails validation can never
//! reach inference.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigOverrides, EngineConfig};
use crate::evidence::FindingState;
use crate::guard::{Constraint, ConstraintRule};

pub const REKO_VERSION: &str = "1.0";
pub const PROB_FLOOR: f64 = 1e-6;
pub const PROB_CEIL: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("probability {0} is outside [0, 1]")]
pub struct RangeError(pub f64);

/// Clamps a probability into `[1e-6, 1 - 1e-6]` so odds stay finite.
pub fn clamp_probability(p: f64) -> Result<f64, RangeError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RangeError(p));
    }
    Ok(p.clamp(PROB_FLOOR, PROB_CEIL))
}

fn clamp_lossy(p: f64) -> f64 {
    if p.is_nan() {
        PROB_FLOOR
    } else {
        p.clamp(PROB_FLOOR, PROB_CEIL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Category,
    Disorder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyNode {
    pub id: String,
    pub name: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingDef {
    pub id: String,
    pub name: String,
    /// Acquisition cost in abstract units.
    pub cost: f64,
    /// Probability the finding is present when no linked node is.
    pub leak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    #[serde(rename = "node")]
    pub node_id: String,
    #[serde(rename = "finding")]
    pub finding_id: String,
    /// P(finding present | node's condition present).
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerRule {
    #[serde(rename = "finding")]
    pub finding_id: String,
    pub state: FindingState,
    #[serde(rename = "node")]
    pub node_id: String,
}

/// The ReKo module document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReKoModule {
    pub reko_version: String,
    pub id: String,
    pub name: String,
    pub version: String,
    pub domain: String,
    pub nodes: Vec<TaxonomyNode>,
    pub findings: Vec<FindingDef>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub triggers: Vec<TriggerRule>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigOverrides>,
    /// Unrecognised top-level keys, kept so documents round-trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("document is not valid UTF-8: {0}")]
    Encoding(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field error at {path}: {message}")]
    Field { path: String, message: String },
    #[error("duplicate id {id:?} at {path}")]
    DuplicateId { path: String, id: String },
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Encoding(_) => "ENCODING",
            ParseError::Syntax { .. } => "SYNTAX",
            ParseError::Field { .. } => "FIELD",
            ParseError::DuplicateId { .. } => "DUPLICATE_ID",
        }
    }
}

pub fn parse_module(document: &[u8]) -> Result<ReKoModule, ParseError> {
    let text = std::str::from_utf8(document).map_err(|e| ParseError::Encoding(e.to_string()))?;
    let mut de = serde_json::Deserializer::from_str(text);
    let module: ReKoModule = match serde_path_to_error::deserialize(&mut de) {
        Ok(m) => m,
        Err(err) => {
            let path = err.path().to_string();
            return Err(classify_json_error(err.into_inner(), Some(path)));
        }
    };
    de.end().map_err(|e| classify_json_error(e, None))?;

    for (section, ids) in [
        ("nodes", module.nodes.iter().map(|n| n.id.as_str()).collect::<Vec<_>>()),
        ("findings", module.findings.iter().map(|f| f.id.as_str()).collect()),
        ("constraints", module.constraints.iter().map(|c| c.id.as_str()).collect()),
    ] {
        if let Some((idx, id)) = first_duplicate(&ids) {
            return Err(ParseError::DuplicateId {
                path: format!("{section}[{idx}]"),
                id: id.to_string(),
            });
        }
    }
    Ok(module)
}

fn classify_json_error(err: serde_json::Error, path: Option<String>) -> ParseError {
    use serde_json::error::Category;
    match err.classify() {
        Category::Eof => ParseError::Syntax {
            line: err.line(),
            column: err.column(),
            message: "unexpected end of input".into(),
        },
        Category::Syntax | Category::Io => ParseError::Syntax {
            line: err.line(),
            column: err.column(),
            message: strip_position(&err),
        },
        Category::Data => ParseError::Field {
            path: path.unwrap_or_else(|| ".".into()),
            message: strip_position(&err),
        },
    }
}

fn strip_position(err: &serde_json::Error) -> String {
    let s = err.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

fn first_duplicate<'a>(ids: &[&'a str]) -> Option<(usize, &'a str)> {
    let mut seen = BTreeSet::new();
    ids.iter()
        .enumerate()
        .find(|(_, id)| !seen.insert(**id))
        .map(|(i, id)| (i, *id))
}

/// Recursively rebuilds every JSON object with its keys in sorted order.
pub fn sort_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Serializes any value as compact JSON with sorted object keys.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&sort_keys(v)).expect("json value serializes")
}

/// Serializes any value as indented JSON with sorted object keys.
pub fn to_sorted_json_pretty<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string_pretty(&sort_keys(v)).expect("json value serializes")
}

impl ReKoModule {
    /// Returns a copy with every array in canonical order.
    pub fn normalized(&self) -> ReKoModule {
        let mut m = self.clone();
        m.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        m.findings.sort_by(|a, b| a.id.cmp(&b.id));
        m.links
            .sort_by(|a, b| (&a.node_id, &a.finding_id).cmp(&(&b.node_id, &b.finding_id)));
        m.triggers.sort_by(|a, b| {
            (&a.node_id, &a.finding_id, a.state).cmp(&(&b.node_id, &b.finding_id, b.state))
        });
        m.constraints.sort_by(|a, b| a.id.cmp(&b.id));
        m
    }

    /// Normalized serialization: sorted keys, arrays sorted by id,
    /// shortest round-trip number rendering.
    pub fn to_normalized_json(&self) -> String {
        let mut s = to_sorted_json_pretty(&self.normalized());
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    fn error(&mut self, code: &str, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Issue {
            code: code.into(),
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, code: &str, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Issue {
            code: code.into(),
            path: path.into(),
            message: message.into(),
        });
    }

    fn probability(&mut self, path: String, p: f64) {
        if !(0.0..=1.0).contains(&p) {
            self.error("OUT_OF_RANGE", path, format!("probability {p} is outside [0, 1]"));
        } else if !(PROB_FLOOR..=PROB_CEIL).contains(&p) {
            let clamped = clamp_lossy(p);
            self.warn("CLAMPED", path, format!("value {p} clamped to {clamped}"));
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.errors {
            writeln!(f, "error {} at {}: {}", i.code, i.path, i.message)?;
        }
        for i in &self.warnings {
            writeln!(f, "warning {} at {}: {}", i.code, i.path, i.message)?;
        }
        Ok(())
    }
}

/// Checks every structural and numeric invariant of a module.
///
/// Violations become report entries; this never fails.
pub fn validate(module: &ReKoModule) -> ValidationReport {
    let mut r = ValidationReport::default();

    if module.reko_version != REKO_VERSION {
        r.error(
            "UNSUPPORTED_VERSION",
            "reko_version",
            format!("expected {REKO_VERSION:?}, found {:?}", module.reko_version),
        );
    }
    if module.id.trim().is_empty() {
        r.error("EMPTY_ID", "id", "module id is empty");
    }
    for key in module.extra.keys() {
        r.warn("UNKNOWN_KEY", key.clone(), format!("unrecognised top-level key {key:?} preserved"));
    }

    let mut node_index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in module.nodes.iter().enumerate() {
        if n.id.trim().is_empty() {
            r.error("EMPTY_ID", format!("nodes[{i}].id"), "node id is empty");
        }
        if node_index.contains_key(n.id.as_str()) {
            r.error("DUPLICATE_ID", format!("nodes[{i}]"), format!("node id {:?} repeated", n.id));
        } else {
            node_index.insert(n.id.as_str(), i);
        }
    }

    let mut finding_index: HashMap<&str, usize> = HashMap::new();
    for (i, f) in module.findings.iter().enumerate() {
        if f.id.trim().is_empty() {
            r.error("EMPTY_ID", format!("findings[{i}].id"), "finding id is empty");
        }
        if finding_index.contains_key(f.id.as_str()) {
            r.error(
                "DUPLICATE_ID",
                format!("findings[{i}]"),
                format!("finding id {:?} repeated", f.id),
            );
        } else {
            finding_index.insert(f.id.as_str(), i);
        }
    }

    let linked_nodes: BTreeSet<&str> = module.links.iter().map(|l| l.node_id.as_str()).collect();

    // parents, leaf rule, priors
    let mut parent_of: Vec<Option<usize>> = vec![None; module.nodes.len()];
    for (i, n) in module.nodes.iter().enumerate() {
        if let Some(p) = &n.parent {
            match node_index.get(p.as_str()) {
                Some(&pi) => {
                    parent_of[i] = Some(pi);
                    if module.nodes[pi].kind == NodeKind::Disorder {
                        r.error(
                            "DISORDER_NOT_LEAF",
                            format!("nodes[{i}].parent"),
                            format!("disorder {p:?} cannot have children"),
                        );
                    }
                }
                None => r.error(
                    "DANGLING_REF",
                    format!("nodes[{i}].parent"),
                    format!("unknown parent node {p:?}"),
                ),
            }
        }
        match (n.kind, n.prior) {
            (_, Some(p)) => r.probability(format!("nodes[{i}].prior"), p),
            (NodeKind::Disorder, None) => r.error(
                "MISSING_PRIOR",
                format!("nodes[{i}].prior"),
                format!("disorder {:?} has no prior", n.id),
            ),
            (NodeKind::Category, None) if linked_nodes.contains(n.id.as_str()) => r.error(
                "MISSING_PRIOR",
                format!("nodes[{i}].prior"),
                format!("category {:?} carries links but has no prior", n.id),
            ),
            _ => {}
        }
    }
    report_cycles(&module.nodes, &parent_of, &mut r);

    if !module.nodes.iter().any(|n| n.kind == NodeKind::Disorder) {
        r.error("NO_DISORDER", "nodes", "module defines no disorder node");
    }

    for (i, f) in module.findings.iter().enumerate() {
        if !(f.cost > 0.0 && f.cost.is_finite()) {
            r.error(
                "INVALID_COST",
                format!("findings[{i}].cost"),
                format!("cost must be positive and finite, got {}", f.cost),
            );
        }
        r.probability(format!("findings[{i}].leak"), f.leak);
    }

    let mut seen_links = BTreeSet::new();
    for (i, l) in module.links.iter().enumerate() {
        if !node_index.contains_key(l.node_id.as_str()) {
            r.error(
                "DANGLING_REF",
                format!("links[{i}].node"),
                format!("unknown node {:?}", l.node_id),
            );
        }
        if !finding_index.contains_key(l.finding_id.as_str()) {
            r.error(
                "DANGLING_REF",
                format!("links[{i}].finding"),
                format!("unknown finding {:?}", l.finding_id),
            );
        }
        if !seen_links.insert((l.node_id.as_str(), l.finding_id.as_str())) {
            r.error(
                "DUPLICATE_LINK",
                format!("links[{i}]"),
                format!("second link between {:?} and {:?}", l.node_id, l.finding_id),
            );
        }
        r.probability(format!("links[{i}].sensitivity"), l.sensitivity);
    }

    for (i, t) in module.triggers.iter().enumerate() {
        if !node_index.contains_key(t.node_id.as_str()) {
            r.error(
                "DANGLING_REF",
                format!("triggers[{i}].node"),
                format!("unknown node {:?}", t.node_id),
            );
        }
        if !finding_index.contains_key(t.finding_id.as_str()) {
            r.error(
                "DANGLING_REF",
                format!("triggers[{i}].finding"),
                format!("unknown finding {:?}", t.finding_id),
            );
        }
    }

    let mut constraint_ids = BTreeSet::new();
    for (i, c) in module.constraints.iter().enumerate() {
        if c.id.trim().is_empty() {
            r.error("EMPTY_ID", format!("constraints[{i}].id"), "constraint id is empty");
        }
        if !constraint_ids.insert(c.id.as_str()) {
            r.error(
                "DUPLICATE_ID",
                format!("constraints[{i}]"),
                format!("constraint id {:?} repeated", c.id),
            );
        }
        if !node_index.contains_key(c.subject_node.as_str()) {
            r.error(
                "DANGLING_REF",
                format!("constraints[{i}].node"),
                format!("unknown node {:?}", c.subject_node),
            );
        }
        if c.message.trim().is_empty() {
            r.error("EMPTY_MESSAGE", format!("constraints[{i}].message"), "constraint message is empty");
        }
        match &c.rule {
            ConstraintRule::Excludes { when } => {
                if when.attribute.trim().is_empty() {
                    r.error(
                        "PREDICATE_TYPE",
                        format!("constraints[{i}].when.attribute"),
                        "attribute name is empty",
                    );
                }
                if when.op.is_ordering() && when.value.as_number().is_none() {
                    r.error(
                        "PREDICATE_TYPE",
                        format!("constraints[{i}].when.value"),
                        format!("operator {:?} needs a numeric value", when.op),
                    );
                }
            }
            ConstraintRule::Requires { finding, .. } => {
                if !finding_index.contains_key(finding.as_str()) {
                    r.error(
                        "DANGLING_REF",
                        format!("constraints[{i}].finding"),
                        format!("unknown finding {finding:?}"),
                    );
                }
            }
        }
    }

    if let Some(cfg) = &module.config {
        if let Err(e) = EngineConfig::resolve(Some(cfg), &ConfigOverrides::default()) {
            r.error("CONFIG_ERROR", "config", e.0);
        }
    }

    let linked_findings: BTreeSet<&str> =
        module.links.iter().map(|l| l.finding_id.as_str()).collect();
    for (i, f) in module.findings.iter().enumerate() {
        if !linked_findings.contains(f.id.as_str()) {
            r.warn(
                "UNLINKED_FINDING",
                format!("findings[{i}]"),
                format!("finding {:?} is not linked to any node", f.id),
            );
        }
    }
    r
}

fn report_cycles(nodes: &[TaxonomyNode], parent_of: &[Option<usize>], r: &mut ValidationReport) {
    // 0 = unvisited, 1 = on the current walk, 2 = finished
    let mut mark = vec![0u8; nodes.len()];
    for start in 0..nodes.len() {
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            match mark[i] {
                0 => {
                    mark[i] = 1;
                    path.push(i);
                    cur = parent_of[i];
                }
                1 => {
                    let pos = path.iter().position(|&p| p == i).unwrap();
                    let members = &path[pos..];
                    let first = *members.iter().min().unwrap();
                    let mut ids: Vec<&str> = members.iter().map(|&m| nodes[m].id.as_str()).collect();
                    ids.sort();
                    r.error(
                        "CYCLE",
                        format!("nodes[{first}].parent"),
                        format!("parent references form a cycle through {}", ids.join(", ")),
                    );
                    break;
                }
                _ => break,
            }
        }
        for p in path {
            mark[p] = 2;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FindingIx(pub usize);

/// A taxonomy node with clamped probabilities and resolved references.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub name: String,
    pub kind: NodeKind,
    pub parent: Option<NodeIx>,
    /// Sorted by id.
    pub children: Vec<NodeIx>,
    pub prior: Option<f64>,
    /// Clamped sensitivities keyed by finding, in finding-id order.
    pub links: BTreeMap<FindingIx, f64>,
    pub triggers: Vec<(FindingIx, FindingState)>,
}

impl Node {
    pub fn is_link_free_category(&self) -> bool {
        self.kind == NodeKind::Category && self.links.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Finding {
    pub id: String,
    pub name: String,
    pub cost: f64,
    pub leak: f64,
    /// Nodes carrying a link to this finding, in node-id order.
    pub linked_nodes: Vec<NodeIx>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("module failed validation:\n{0}")]
pub struct InvalidModule(pub ValidationReport);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Invalid(#[from] InvalidModule),
}

impl LoadError {
    pub fn code(&self) -> &'static str {
        match self {
            LoadError::Parse(p) => p.code(),
            LoadError::Invalid(_) => "INVALID_MODULE",
        }
    }
}

/// A validated module compiled for inference. Immutable; share it behind
/// an `Arc` across sessions.
///
/// Nodes and findings are stored sorted by id, so index order is id order.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    module: ReKoModule,
    report: ValidationReport,
    nodes: Vec<Node>,
    findings: Vec<Finding>,
    node_index: HashMap<String, NodeIx>,
    finding_index: HashMap<String, FindingIx>,
    roots: Vec<NodeIx>,
    disorders: Vec<NodeIx>,
    constraints: Vec<Constraint>,
}

impl KnowledgeBase {
    pub fn new(module: ReKoModule) -> Result<Self, InvalidModule> {
        let report = validate(&module);
        if !report.is_clean() {
            return Err(InvalidModule(report));
        }

        let mut node_defs: Vec<&TaxonomyNode> = module.nodes.iter().collect();
        node_defs.sort_by(|a, b| a.id.cmp(&b.id));
        let node_index: HashMap<String, NodeIx> = node_defs
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), NodeIx(i)))
            .collect();

        let mut finding_defs: Vec<&FindingDef> = module.findings.iter().collect();
        finding_defs.sort_by(|a, b| a.id.cmp(&b.id));
        let finding_index: HashMap<String, FindingIx> = finding_defs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), FindingIx(i)))
            .collect();

        let mut nodes: Vec<Node> = node_defs
            .iter()
            .map(|n| Node {
                id: n.id.clone(),
                name: n.name.clone(),
                kind: n.kind,
                parent: n.parent.as_ref().map(|p| node_index[p]),
                children: Vec::new(),
                prior: n.prior.map(clamp_lossy),
                links: BTreeMap::new(),
                triggers: Vec::new(),
            })
            .collect();
        let mut findings: Vec<Finding> = finding_defs
            .iter()
            .map(|f| Finding {
                id: f.id.clone(),
                name: f.name.clone(),
                cost: f.cost,
                leak: clamp_lossy(f.leak),
                linked_nodes: Vec::new(),
            })
            .collect();

        for i in 0..nodes.len() {
            if let Some(NodeIx(p)) = nodes[i].parent {
                nodes[p].children.push(NodeIx(i));
            }
        }
        for l in &module.links {
            let n = node_index[&l.node_id];
            let f = finding_index[&l.finding_id];
            nodes[n.0].links.insert(f, clamp_lossy(l.sensitivity));
            findings[f.0].linked_nodes.push(n);
        }
        for f in &mut findings {
            f.linked_nodes.sort();
        }
        for t in &module.triggers {
            let n = node_index[&t.node_id];
            let f = finding_index[&t.finding_id];
            nodes[n.0].triggers.push((f, t.state));
        }
        for n in &mut nodes {
            n.triggers.sort();
            n.triggers.dedup();
        }

        let roots = (0..nodes.len())
            .filter(|&i| nodes[i].parent.is_none())
            .map(NodeIx)
            .collect();
        let disorders = (0..nodes.len())
            .filter(|&i| nodes[i].kind == NodeKind::Disorder)
            .map(NodeIx)
            .collect();
        let mut constraints = module.constraints.clone();
        constraints.sort_by(|a, b| a.id.cmp(&b.id));

        Ok(Self {
            module,
            report,
            nodes,
            findings,
            node_index,
            finding_index,
            roots,
            disorders,
            constraints,
        })
    }

    /// Parses, validates and compiles a module document.
    pub fn load(document: &[u8]) -> Result<Self, LoadError> {
        let module = parse_module(document)?;
        Ok(Self::new(module)?)
    }

    pub fn module(&self) -> &ReKoModule {
        &self.module
    }

    pub fn id(&self) -> &str {
        &self.module.id
    }

    pub fn version(&self) -> &str {
        &self.module.version
    }

    /// Warnings produced when the module was accepted.
    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn config_overrides(&self) -> Option<&ConfigOverrides> {
        self.module.config.as_ref()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix.0]
    }

    pub fn finding(&self, ix: FindingIx) -> &Finding {
        &self.findings[ix.0]
    }

    pub fn node_ix(&self, id: &str) -> Option<NodeIx> {
        self.node_index.get(id).copied()
    }

    pub fn finding_ix(&self, id: &str) -> Option<FindingIx> {
        self.finding_index.get(id).copied()
    }

    pub fn roots(&self) -> &[NodeIx] {
        &self.roots
    }

    /// Disorder leaves in id order.
    pub fn disorders(&self) -> &[NodeIx] {
        &self.disorders
    }

    /// Constraints in id order.
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Clamped sensitivity of the (node, finding) link, if one exists.
    pub fn sensitivity(&self, node: NodeIx, finding: FindingIx) -> Option<f64> {
        self.nodes[node.0].links.get(&finding).copied()
    }

    /// Disorder leaves at or below `node` (the node itself for a disorder).
    pub fn descendant_disorders(&self, node: NodeIx) -> Vec<NodeIx> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            let entry = &self.nodes[n.0];
            match entry.kind {
                NodeKind::Disorder => out.push(n),
                NodeKind::Category => stack.extend(entry.children.iter().copied()),
            }
        }
        out.sort();
        out
    }
}
