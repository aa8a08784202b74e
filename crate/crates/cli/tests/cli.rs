use std::path::Path;
use std::process::{Command, Output};

fn bcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcast")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_two_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["generate", "--n", "2", "--edge-prob", "1.0", "-o", "g.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("g.txt")).unwrap();
    assert!(text.lines().any(|l| l.trim() == "0 1"), "{text}");
}

#[test]
fn generate_reference_graph() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["generate", "--n", "100", "--edge-prob", "0.1", "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("nodes: 100") && out.contains("connected: true"), "{out}");
    let g = bcast_consensus::graph::Graph::read_edge_list(&dir.path().join("graph.txt")).unwrap();
    assert_eq!(g.node_count(), 100);
    assert!(g.is_connected());
}

#[test]
fn generate_failure_exits_nonzero_with_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["generate", "--n", "3", "--edge-prob", "0", "--max-retries", "5"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error: invalid-parameter:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let o = bcast(dir.path(), &["generate", "--n", "3", "--edge-prob", "1e-9", "--max-retries", "10"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error: generation-failure:"), "{err}");
    assert!(!dir.path().join("graph.txt").exists());
}

fn path3(dir: &Path) {
    std::fs::write(dir.join("path3.txt"), "0 1\n1 2\n").unwrap();
}

#[test]
fn optimize_path3_full_budget() {
    let dir = tempfile::tempdir().unwrap();
    path3(dir.path());
    let o = bcast(
        dir.path(),
        &["optimize-p", "--graph", "path3.txt", "-k", "3", "--spsa-iterations", "20", "-o", "opt"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let p = bcast_consensus::centrality::ProbabilityVector::read(&dir.path().join("opt/spsa_probabilities.txt")).unwrap();
    assert!(p.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12), "{p:?}");
    let best: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("best_objective: ")).unwrap().parse().unwrap();
    assert!((best - 2.0 / 3.0).abs() < 1e-10, "{best}");
}

#[test]
fn budget_above_node_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    path3(dir.path());
    let o = bcast(dir.path(), &["optimize-p", "--graph", "path3.txt", "-k", "4"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: budget-exceeds-nodes:"), "{}", stderr(&o));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["run", "--n", "30", "--edge-prob", "0.3", "-k", "10", "--method", "degree", "--realizations", "1", "-o", out]
    };
    assert!(bcast(dir.path(), &args("a")).status.success());
    assert!(bcast(dir.path(), &args("b")).status.success());
    for f in ["degree_realizations.csv", "degree_aggregated.csv", "degree_summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    path3(dir.path());
    std::fs::write(dir.path().join("cfg.txt"), "graph_file=path3.txt\nk=2\nmethod=uniform\nrealizations=1\noutput=fromfile\n")
        .unwrap();
    let o = bcast(dir.path(), &["run", "--config", "cfg.txt", "--method", "full", "--log-schedule", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("fromfile/full_aggregated.csv").exists());
    let log = std::fs::read_to_string(dir.path().join("fromfile/schedule.txt")).unwrap();
    assert_eq!(log, "0: 111\n1: 111\n2: 111\n");
    let manifest = std::fs::read_to_string(dir.path().join("fromfile/full_manifest.txt")).unwrap();
    assert!(manifest.contains("method=full") && manifest.contains("k=2"), "{manifest}");
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["verify", "--set", "no_such_key=1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn verify_reports_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["verify", "--n", "20", "--edge-prob", "0.3", "--method", "betweenness", "-k", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("condition_2_column_sums_one: true"), "{out}");
    assert!(out.contains("[expected method=betweenness]"), "{out}");
}

#[test]
fn reproduce_fig2_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["reproduce", "fig2", "--realizations", "2", "-o", "figs"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["fig2_full.csv", "fig2_betweenness_uncorrected.csv", "fig2_betweenness_corrected.csv", "fig2_manifest.txt"] {
        assert!(dir.path().join("figs").join(f).exists(), "{f}");
    }
    let corrected = std::fs::read_to_string(dir.path().join("figs/fig2_betweenness_corrected.csv")).unwrap();
    let last = corrected.lines().last().unwrap();
    let rmse: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(rmse < 1e-3, "{last}");
}

#[test]
fn unknown_figure_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcast(dir.path(), &["reproduce", "fig9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: invalid-parameter:"), "{}", stderr(&o));
}
