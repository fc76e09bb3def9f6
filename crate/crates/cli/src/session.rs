//! Interactive terminal loop over one diagnostic session.

use std::io::{BufRead, Write};

use anyhow::Result;
use rekodx_core::cycle::{Session, StepStatus};
use rekodx_core::evidence::FindingState;
use rekodx_core::guard::{check_differential, Severity};
use rekodx_core::reasoning::{explain, prior};

const HELP: &str = "\
commands:
  <finding> present|absent   record a finding (also +/-, yes/no)
  next                       show the recommended findings
  diff                       show the guarded differential
  why <node>                 explain a node's posterior
  findings                   list findings not yet observed
  help                       this text
  quit                       end the session";

pub fn run(mut session: Session, input: impl BufRead, mut out: impl Write, top: usize) -> Result<Session> {
    let kb = session.knowledge_base().clone();
    writeln!(
        out,
        "session on {} {} ({} disorders, {} findings); type 'help' for commands",
        kb.id(),
        kb.version(),
        kb.disorders().len(),
        kb.findings().len()
    )?;
    show_differential(&session, &mut out, top)?;
    show_next(&session, &mut out)?;

    for line in input.lines() {
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => continue,
            ["quit" | "exit" | "q"] => break,
            ["help" | "?"] => writeln!(out, "{HELP}")?,
            ["next"] => show_next(&session, &mut out)?,
            ["diff"] => show_differential(&session, &mut out, top)?,
            ["findings"] => {
                for f in kb.findings() {
                    if session.evidence().state(&f.id).is_none() {
                        writeln!(out, "  {:<28} {} (cost {})", f.id, f.name, f.cost)?;
                    }
                }
            }
            ["why", node] => match explain(&kb, node, session.evidence()) {
                Ok(entries) => {
                    let p0 = prior(&kb, node)?;
                    writeln!(
                        out,
                        "{node}: prior {p0:.4} -> posterior {:.4}",
                        session.posterior(node).unwrap_or(p0)
                    )?;
                    for e in entries {
                        writeln!(out, "  {:<28} {:<8} log LR {:+.4}", e.finding_id, e.state, e.log_lr)?;
                    }
                }
                Err(e) => writeln!(out, "error: {e}")?,
            },
            [finding, state] => match state.parse::<FindingState>() {
                Ok(state) => match session.ingest_finding(finding, state) {
                    Ok(()) => {
                        show_differential(&session, &mut out, top)?;
                        show_next(&session, &mut out)?;
                    }
                    Err(e) => writeln!(out, "error: {e}")?,
                },
                Err(e) => writeln!(out, "error: {e}")?,
            },
            _ => writeln!(out, "unrecognised input; type 'help'")?,
        }
        out.flush()?;
    }
    Ok(session)
}

fn show_differential(session: &Session, out: &mut impl Write, top: usize) -> Result<()> {
    let kb = session.knowledge_base();
    let ranking = session.ranking();
    let guarded = check_differential(kb, session.evidence(), &ranking);
    writeln!(out, "differential:")?;
    for (i, r) in guarded.ranking.iter().take(top).enumerate() {
        let status = match session.resolution(&r.node_id) {
            Some(res) => format!("{res:?}").to_lowercase(),
            None if session.is_active(&r.node_id) => "active".into(),
            None => "inactive".into(),
        };
        writeln!(out, "  {:>2}. {:<28} {:.4}  {status}", i + 1, r.node_id, r.posterior)?;
    }
    for v in &guarded.verdicts {
        let tag = match v.outcome {
            Severity::Veto => "VETO",
            Severity::Warn => "warn",
        };
        writeln!(out, "  [{tag}] {}: {}", v.node_id, v.message)?;
    }
    Ok(())
}

fn show_next(session: &Session, out: &mut impl Write) -> Result<()> {
    match session.step_status() {
        StepStatus::Done(reason) => writeln!(out, "done: {}", serde_json::to_value(reason)?.as_str().unwrap_or("?"))?,
        StepStatus::Continue => {
            if let Some(g) = session.goal() {
                writeln!(out, "goal: {} ({:?})", g.node_id, g.mode)?;
            }
            for r in session.rank_candidates(3) {
                writeln!(
                    out,
                    "  next: {:<28} gain {:.4}  cost {}  score {:.4}",
                    r.finding_id, r.gain, r.cost, r.score
                )?;
            }
        }
    }
    Ok(())
}
