use std::fmt::Write;

use super::{Session, TicketStatus};

/// One row per trained round.
pub fn metrics_csv(session: &Session) -> String {
    let mut out = String::from(
        "round,mode,arity,groups,patches,extra_samples,fine_accuracy,coarse_accuracy,final_global_loss,final_local_loss\n",
    );
    let mode = session.config().mode;
    for m in session.metrics() {
        let last = |v: &[f64]| v.last().map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            m.round,
            mode,
            m.arity,
            m.groups,
            m.patches_used,
            m.extra_samples,
            m.fine_accuracy,
            m.coarse_accuracy,
            last(&m.global_losses),
            last(&m.local_losses),
        )
        .expect("writing to a String");
    }
    out
}

/// Human-readable run summary.
pub fn summary(session: &Session) -> String {
    let cfg = session.config();
    let manifest = session.dataset().manifest();
    let name = |c: usize| manifest.class_name(c).unwrap_or("?").to_string();
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "dataset: {}", manifest.name).unwrap();
    writeln!(w, "mode: {}  k: {}  b: {}  seed: {}", cfg.mode, cfg.k, cfg.b, cfg.seed).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "round  fine     coarse   arity  groups  patches").unwrap();
    for m in session.metrics() {
        writeln!(
            w,
            "{:<5}  {:<7.4}  {:<7.4}  {:<5}  {:<6}  {}",
            m.round, m.fine_accuracy, m.coarse_accuracy, m.arity, m.groups, m.patches_used
        )
        .unwrap();
    }
    if let (Some(first), Some(last)) = (session.metrics().first(), session.metrics().last()) {
        writeln!(
            w,
            "\nfine accuracy {:.4} -> {:.4} ({:+.2} points)",
            first.fine_accuracy,
            last.fine_accuracy,
            100.0 * (last.fine_accuracy - first.fine_accuracy)
        )
        .unwrap();
    }

    writeln!(w, "\ngroups formed:").unwrap();
    if session.trained_arch().groups().is_empty() {
        writeln!(w, "  none").unwrap();
    }
    for g in session.trained_arch().groups() {
        let members: Vec<String> = g.members.iter().map(|&c| name(c)).collect();
        writeln!(w, "  {{{}}}", members.join(", ")).unwrap();
    }

    writeln!(w, "\nexplanations:").unwrap();
    if session.explanations().is_empty() {
        writeln!(w, "  none").unwrap();
    }
    let seg = |s: &u32| session.parser().lexicon().segment_name(*s).unwrap_or("?").to_string();
    for e in session.explanations() {
        let (p, q) = e.report.pair;
        let parsed: Vec<String> = e.report.segments.iter().map(seg).collect();
        let grounded: Vec<String> = e.grounded_segments.iter().map(seg).collect();
        write!(w, "  round {}: ({}, {}) segments [{}]", e.round, name(p), name(q), parsed.join(", ")).unwrap();
        if grounded != parsed {
            write!(w, " grounded as [{}]", grounded.join(", ")).unwrap();
        }
        writeln!(w, ", {} patches", e.report.patches_created).unwrap();
    }
    let skipped = session.tickets().iter().filter(|t| t.status == TicketStatus::Skipped).count();
    if skipped > 0 {
        writeln!(w, "\nskipped tickets in the last round: {skipped}").unwrap();
    }
    let total: usize = session.explanations().iter().map(|e| e.report.patches_created).sum();
    writeln!(w, "\npatches created: {total}").unwrap();
    if session.stopped_early() {
        writeln!(w, "stopped early: no class pairs left to query").unwrap();
    }
    out
}
