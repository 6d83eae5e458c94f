//! Orchestration: stage isolation, replay, validation and the command-line tool.

use std::path::{Path, PathBuf};
use std::process::Command;

use subsense::pipeline::{
    cluster_command, evaluate_command, read_jsonl, run_pipeline, substitute_command, BackendSpec,
    ClusterRecord, GeneratorKind, Injection, RunConfig,
};
use subsense::synthetic::sense_fixture;

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: RunConfig,
}

fn setup(generator: GeneratorKind, injection: Injection) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let f = sense_fixture(3, 2, 6, 5);
    f.dataset.write_jsonl(&root.join("data.jsonl")).unwrap();
    std::fs::write(root.join("mock.json"), serde_json::to_string(&f.mock).unwrap()).unwrap();
    let mut cfg = RunConfig::new(
        root.join("data.jsonl"),
        generator,
        injection,
        BackendSpec::Mock { config: root.join("mock.json") },
    );
    cfg.mask_counts = [1].into();
    Setup { _dir: dir, root, cfg }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn stages_run_separately_match_the_full_run() {
    let s = setup(GeneratorKind::Concat, Injection::Sdp);
    let run = s.root.join("run");
    let report = run_pipeline(&s.cfg, &run).unwrap();
    for f in ["substitutes.jsonl", "clusters.jsonl", "report.json", "report.txt", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let subs = s.root.join("subs.jsonl");
    let clusters = s.root.join("clusters.jsonl");
    substitute_command(&s.cfg, &subs).unwrap();
    cluster_command(&s.cfg, &subs, &clusters).unwrap();
    let separate = evaluate_command(&s.cfg, &clusters).unwrap();
    assert_eq!(read(&subs), read(&run.join("substitutes.jsonl")));
    assert_eq!(read(&clusters), read(&run.join("clusters.jsonl")));
    assert_eq!(separate, report);

    // Re-evaluating the stored dump reproduces the report byte for byte.
    let stored = evaluate_command(&s.cfg, &run.join("clusters.jsonl")).unwrap();
    let json = serde_json::to_string_pretty(&stored).unwrap() + "\n";
    assert_eq!(json, read(&run.join("report.json")));
}

#[test]
fn cache_replay_gives_identical_reports() {
    let mut s = setup(GeneratorKind::Wcm, Injection::None);
    let cache = s.root.join("cache.jsonl");
    let mock = BackendSpec::Mock { config: s.root.join("mock.json") };
    s.cfg.backend = BackendSpec::Cache { path: cache.clone(), inner: Some(Box::new(mock)) };
    let a = run_pipeline(&s.cfg, &s.root.join("a")).unwrap();
    let b = run_pipeline(&s.cfg, &s.root.join("b")).unwrap();
    assert_eq!(read(&s.root.join("a/report.json")), read(&s.root.join("b/report.json")));
    assert_eq!(read(&s.root.join("a/manifest.json")), read(&s.root.join("b/manifest.json")));
    assert_eq!(a, b);

    s.cfg.backend = BackendSpec::Cache { path: cache, inner: None };
    let replay = run_pipeline(&s.cfg, &s.root.join("c")).unwrap();
    assert_eq!(replay.per_word, a.per_word);
    assert_eq!(read(&s.root.join("a/substitutes.jsonl")), read(&s.root.join("c/substitutes.jsonl")));
}

#[test]
fn invalid_config_fails_before_any_work() {
    let mut s = setup(GeneratorKind::Concat, Injection::Embs);
    let run = s.root.join("never");
    let e = run_pipeline(&s.cfg, &run).unwrap_err();
    assert_eq!((e.stage, e.exit_code()), ("config", 1));
    assert!(!run.exists());
    s.cfg.injection = Injection::None;
    s.cfg.c_min = 1;
    assert_eq!(run_pipeline(&s.cfg, &run).unwrap_err().exit_code(), 1);
}

#[test]
fn embedding_rerank_run() {
    let mut s = setup(GeneratorKind::Concat, Injection::Embs);
    let mut table = String::new();
    let mut rows = Vec::new();
    for word in ["bank", "bass", "crane"] {
        rows.push(format!("{word} 1 1 0"));
        for sense in 0..2 {
            for j in 0..8 {
                let v = if sense == 0 { "1 0.2 0" } else { "0.2 1 0" };
                rows.push(format!("{word}{sense}x{j} {v}"));
            }
        }
    }
    table.push_str(&format!("{} 3\n{}\n", rows.len(), rows.join("\n")));
    std::fs::write(s.root.join("emb.txt"), table).unwrap();
    s.cfg.embeddings = Some(s.root.join("emb.txt"));
    let report = run_pipeline(&s.cfg, &s.root.join("run")).unwrap();
    let subs: Vec<subsense::substgen::SubstituteRecord> = read_jsonl(&s.root.join("run/substitutes.jsonl")).unwrap();
    assert!(subs.iter().all(|r| r.candidates.len() <= 20 && r.generator == "concat+embs"));
    assert_eq!(report.weighted["ari"], 1.0);
}

#[test]
fn baseline_run_with_unscripted_positions_is_flagged_not_fatal() {
    let s = setup(GeneratorKind::Baseline, Injection::None);
    let report = run_pipeline(&s.cfg, &s.root.join("run")).unwrap();
    assert_eq!(report.per_word.len(), 3);
    let clusters: Vec<ClusterRecord> = read_jsonl(&s.root.join("run/clusters.jsonl")).unwrap();
    assert!(clusters.iter().all(|c| c.cuts.is_empty() || !c.flags.is_empty() || c.selected_c >= 2));
}

#[test]
fn single_instance_words_are_flagged() {
    let s = setup(GeneratorKind::Concat, Injection::None);
    let mut text = read(&s.root.join("data.jsonl"));
    text.push_str(r#"{"instance_id":"lone.1","target_lemma":"lone","language":"en","context":"a lone word","target_span":[2,6],"gold_sense":"x"}"#);
    text.push('\n');
    std::fs::write(s.root.join("data.jsonl"), text).unwrap();
    let report = run_pipeline(&s.cfg, &s.root.join("run")).unwrap();
    let clusters: Vec<ClusterRecord> = read_jsonl(&s.root.join("run/clusters.jsonl")).unwrap();
    let lone = clusters.iter().find(|c| c.word == "lone").unwrap();
    assert_eq!(lone.flags, ["single_instance"]);
    assert!(report.per_word.iter().all(|w| w.word != "lone"));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_subsense")).args(args).output().unwrap()
}

#[test]
fn command_line_stages_and_exit_codes() {
    let s = setup(GeneratorKind::Concat, Injection::Sdp);
    let cfg = s.root.join("config.json");
    std::fs::write(&cfg, serde_json::to_string_pretty(&s.cfg).unwrap()).unwrap();
    let p = |x: &str| s.root.join(x).to_string_lossy().into_owned();
    let c = cfg.to_string_lossy().into_owned();

    let out = cli(&["run", "--config", &c, "--out", &p("run"), "--set", "workers=4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[weighted]"));

    assert!(cli(&["substitute", "--config", &c, "--out", &p("s.jsonl")]).status.success());
    assert!(cli(&["cluster", "--config", &c, "--substitutes", &p("s.jsonl"), "--out", &p("c.jsonl")]).status.success());
    assert!(cli(&["evaluate", "--config", &c, "--clusters", &p("c.jsonl"), "--out", &p("ev"), "--set", "workers=4"]).status.success());
    assert_eq!(read(&s.root.join("ev/report.json")), read(&s.root.join("run/report.json")));

    let rel = cli(&["analyze", "discriminative", "--config", &c, "--substitutes", &p("s.jsonl"), "--top-n", "3"]);
    assert!(rel.status.success());
    let script = cli(&["analyze", "script", "--substitutes", &p("s.jsonl"), "--script", "cyrillic"]);
    assert_eq!(String::from_utf8_lossy(&script.stdout).trim(), "0.000000");

    assert_eq!(cli(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--config", &p("missing.json"), "--out", &p("x")]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--config", &c, "--out", &p("x"), "--set", "k=0"]).status.code(), Some(1));
    assert_eq!(
        cli(&["run", "--config", &c, "--out", &p("x"), "--set", "dataset=\"nope.jsonl\""]).status.code(),
        Some(2)
    );
    let unreachable = r#"backend={"kind":"sidecar","address":"127.0.0.1:1"}"#;
    assert_eq!(cli(&["run", "--config", &c, "--out", &p("x"), "--set", unreachable]).status.code(), Some(3));
}

#[test]
fn wcm_prep_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.jsonl");
    let mut text = String::new();
    for i in 0..50 {
        text.push_str(&format!(
            "{{\"tokens\":[{{\"surface\":\"a{i}\",\"begins_word\":true}},{{\"surface\":\"b\",\"begins_word\":false}},{{\"surface\":\"c\",\"begins_word\":true}}]}}\n"
        ));
    }
    std::fs::write(&input, text).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = cli(&["wcm-prep", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "9"]);
        assert!(o.status.success());
        read(&out)
    };
    assert_eq!(run("x.jsonl"), run("y.jsonl"));
    assert_eq!(cli(&["wcm-prep", "--input", "a", "--output", "b", "--mask-rate", "2"]).status.code(), Some(1));
}
