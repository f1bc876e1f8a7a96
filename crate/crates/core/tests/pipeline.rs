mod common;

use stsc::detect::{self, required_edges};
use stsc::metrics;
use stsc::model::{CommGraph, Pattern};

#[test]
fn silent_windows_flag_every_required_edge() {
    let m = common::mendix();
    let roster = m.manifest.model.analysis_roster();
    let graphs: Vec<_> = m.graphs.iter().map(|g| CommGraph::empty(g.window, roster.clone())).collect();
    let series = metrics::build_series(&graphs);
    let findings = detect::run_all(&graphs, &series, &m.manifest.model, &[], &m.manifest.detect).unwrap();
    let required = required_edges(&m.manifest.model);
    for g in &graphs {
        let missing = findings
            .iter()
            .filter(|f| f.pattern == Pattern::ConwayMissingLink && f.window == stsc::model::FindingWindow::Span(g.window))
            .count();
        assert_eq!(missing, required.len());
    }
    assert!(findings.iter().all(|f| f.pattern == Pattern::ConwayMissingLink || f.pattern.family() == "bcm"));
}

#[test]
fn mismatched_series_is_rejected() {
    let m = common::mendix();
    let series = metrics::build_series(&m.graphs[..2]);
    let err = detect::run_all(&m.graphs, &series, &m.manifest.model, &m.changes, &m.manifest.detect).unwrap_err();
    assert!(matches!(err, detect::DetectError::WindowMismatch { .. }));
}

#[test]
fn week_one_betweenness_leaders() {
    let m = common::mendix();
    let series = metrics::build_series(&m.graphs);
    let recs = series.records_for(0);
    let top: Vec<_> = detect::rank_by_betweenness(&recs).iter().take(3).map(|r| r.actor.to_string()).collect();
    assert_eq!(top, ["micka", "jonve", "vla"]);
}
