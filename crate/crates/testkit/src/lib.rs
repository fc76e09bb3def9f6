//! Fixtures and independent oracles for the test suites.
//!
//! Nothing here calls into the engine's arithmetic. The oracles read raw
//! parameters from the module document and enumerate joint assignments
//! directly, so agreement with the engine is meaningful.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rekodx_core::evidence::{EvidenceState, FindingState};
use rekodx_core::model::{parse_module, validate, NodeKind, ReKoModule};
use serde_json::{json, Value};

pub fn bundled_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../modules")
}

pub fn bundled_path(name: &str) -> PathBuf {
    bundled_dir().join(name)
}

/// Every `*.json` module shipped in the modules directory, by file name.
pub fn bundled() -> Vec<(String, ReKoModule)> {
    let mut out: Vec<(String, ReKoModule)> = std::fs::read_dir(bundled_dir())
        .expect("modules directory")
        .filter_map(|e| {
            let path = e.ok()?.path();
            (path.extension()? == "json").then_some(path)
        })
        .map(|path| {
            let bytes = std::fs::read(&path).unwrap();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, parse_module(&bytes).unwrap())
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn load_bundled(name: &str) -> ReKoModule {
    parse_module(&std::fs::read(bundled_path(name)).unwrap()).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_disorders: usize,
    pub max_findings: usize,
    pub categories: bool,
    pub triggers: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_disorders: 6,
            max_findings: 8,
            categories: true,
            triggers: true,
        }
    }
}

/// A random module with no validation errors. Warnings (clamped values,
/// unlinked findings) are allowed on purpose.
pub fn random_module<R: Rng>(rng: &mut R, shape: Shape) -> ReKoModule {
    let n_dis = rng.gen_range(1..=shape.max_disorders);
    let n_find = rng.gen_range(1..=shape.max_findings);
    let n_cat = if shape.categories { rng.gen_range(0..=3) } else { 0 };

    let mut nodes = Vec::new();
    let mut linkable = Vec::new();
    for c in 0..n_cat {
        let id = format!("cat{c}");
        let mut node = json!({"id": id, "name": format!("Category {c}"), "kind": "category"});
        if c > 0 && rng.gen_bool(0.5) {
            node["parent"] = json!(format!("cat{}", rng.gen_range(0..c)));
        }
        if rng.gen_bool(0.4) {
            node["prior"] = json!(rng.gen_range(0.02..0.6));
            linkable.push(id);
        }
        nodes.push(node);
    }
    for d in 0..n_dis {
        let id = format!("d{d}");
        let mut node = json!({"id": id, "name": format!("Disorder {d}"), "kind": "disorder",
                              "prior": rng.gen_range(0.01..0.5)});
        if n_cat > 0 && rng.gen_bool(0.7) {
            node["parent"] = json!(format!("cat{}", rng.gen_range(0..n_cat)));
        }
        nodes.push(node);
        linkable.push(id);
    }

    let costs = [0.5, 1.0, 1.0, 2.0, 3.0];
    let mut leaks = Vec::new();
    let findings: Vec<Value> = (0..n_find)
        .map(|f| {
            let leak = if rng.gen_bool(0.05) { 1e-7 } else { rng.gen_range(0.001..0.3) };
            leaks.push(leak);
            json!({"id": format!("f{f:02}"), "name": format!("Finding {f}"),
                   "cost": *costs.choose(rng).unwrap(), "leak": leak})
        })
        .collect();

    let mut links = Vec::new();
    for node in &linkable {
        for (f, &leak) in leaks.iter().enumerate() {
            if rng.gen_bool(0.4) {
                let s = if rng.gen_bool(0.1) { leak } else { rng.gen_range(0.02..0.98) };
                links.push(json!({"node": node, "finding": format!("f{f:02}"), "sensitivity": s}));
            }
        }
    }

    let mut triggers = Vec::new();
    if shape.triggers {
        for _ in 0..rng.gen_range(0..=2) {
            let state = if rng.gen_bool(0.5) { "present" } else { "absent" };
            triggers.push(json!({
                "finding": format!("f{:02}", rng.gen_range(0..n_find)),
                "state": state,
                "node": nodes.choose(rng).unwrap()["id"],
            }));
        }
    }

    let doc = json!({
        "reko_version": "1.0", "id": "random", "name": "Random fixture", "version": "1",
        "domain": "test", "nodes": nodes, "findings": findings, "links": links,
        "triggers": triggers,
    });
    let module = parse_module(doc.to_string().as_bytes()).expect("fixture parses");
    let report = validate(&module);
    assert!(report.errors.is_empty(), "fixture invalid: {report}");
    module
}

/// Observes each finding with probability `p_observe`, in a random state.
pub fn random_evidence<R: Rng>(rng: &mut R, module: &ReKoModule, p_observe: f64) -> EvidenceState {
    let mut ev = EvidenceState::default();
    for f in &module.findings {
        if rng.gen_bool(p_observe) {
            let st = if rng.gen_bool(0.5) { FindingState::Present } else { FindingState::Absent };
            ev.finding_states.insert(f.id.clone(), st);
        }
    }
    ev
}

fn clamp(p: f64) -> f64 {
    p.clamp(1e-6, 1.0 - 1e-6)
}

/// Raw per-node parameters: clamped prior plus, per finding id, the
/// probability of "present" under each class of the node's model.
struct NodeModel {
    prior: f64,
    present_given: BTreeMap<String, (f64, f64)>,
}

fn node_model(module: &ReKoModule, node: &str) -> Option<NodeModel> {
    let prior = clamp(module.nodes.iter().find(|n| n.id == node)?.prior?);
    let mut present_given = BTreeMap::new();
    for f in &module.findings {
        let leak = clamp(f.leak);
        let s = module
            .links
            .iter()
            .find(|l| l.node_id == node && l.finding_id == f.id)
            .map(|l| clamp(l.sensitivity))
            .unwrap_or(leak);
        present_given.insert(f.id.clone(), (s, leak));
    }
    Some(NodeModel { prior, present_given })
}

/// Joint weights P(node = 1, e) and P(node = 0, e), summing the full joint
/// over every assignment of the unobserved findings.
fn joint_weights(m: &NodeModel, ev: &EvidenceState) -> (f64, f64) {
    let params: Vec<(f64, f64, Option<FindingState>)> = m
        .present_given
        .iter()
        .map(|(id, &(s, l))| (s, l, ev.state(id)))
        .collect();
    let hidden = params.iter().filter(|p| p.2.is_none()).count();
    assert!(hidden <= 20, "enumeration too large");
    let mut w = [0.0, 0.0];
    for mask in 0u32..(1 << hidden) {
        let mut term = [m.prior, 1.0 - m.prior];
        let mut bit = 0;
        for &(s, l, state) in &params {
            let present = match state {
                Some(st) => st == FindingState::Present,
                None => {
                    bit += 1;
                    mask & (1 << (bit - 1)) != 0
                }
            };
            if present {
                term[0] *= s;
                term[1] *= l;
            } else {
                term[0] *= 1.0 - s;
                term[1] *= 1.0 - l;
            }
        }
        w[0] += term[0];
        w[1] += term[1];
    }
    (w[0], w[1])
}

/// Posterior of `node` by full-joint enumeration under the per-node
/// two-class model. `None` for nodes without a prior.
pub fn joint_posterior(module: &ReKoModule, node: &str, ev: &EvidenceState) -> Option<f64> {
    let m = node_model(module, node)?;
    let (w1, w0) = joint_weights(&m, ev);
    Some(w1 / (w1 + w0))
}

pub fn entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    h(p) + h(1.0 - p)
}

/// Expected entropy reduction for `node` from observing `finding`,
/// enumerating both outcomes explicitly.
pub fn enumerated_gain(module: &ReKoModule, node: &str, finding: &str, ev: &EvidenceState) -> f64 {
    let m = node_model(module, node).expect("node with prior");
    let (w1, w0) = joint_weights(&m, ev);
    let before = entropy(w1 / (w1 + w0));
    let mut after = 0.0;
    for state in [FindingState::Present, FindingState::Absent] {
        let mut ext = ev.clone();
        ext.finding_states.insert(finding.to_string(), state);
        let (x1, x0) = joint_weights(&m, &ext);
        let p_outcome = (x1 + x0) / (w1 + w0);
        after += p_outcome * entropy(x1 / (x1 + x0));
    }
    before - after
}

pub fn disorder_ids(module: &ReKoModule) -> Vec<String> {
    let mut ids: Vec<String> = module
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Disorder)
        .map(|n| n.id.clone())
        .collect();
    ids.sort();
    ids
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

/// Compares `actual` with a pinned golden file. With `REKODX_BLESS=1`
/// set, the file is (re)written instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("REKODX_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("golden file {} unreadable ({e}); run with REKODX_BLESS=1", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from golden\n--- expected\n{expected}\n--- actual\n{actual}"))
    }
}

/// Adds constraints, given as JSON values, to a module.
pub fn with_constraints(module: &ReKoModule, constraints: Vec<Value>) -> ReKoModule {
    let mut doc = serde_json::to_value(module).unwrap();
    doc["constraints"].as_array_mut().unwrap().extend(constraints);
    parse_module(doc.to_string().as_bytes()).unwrap()
}
