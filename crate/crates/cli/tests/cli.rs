use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tcr-sparse"));
    c.env_remove("TCR_SPARSE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_dataset(path: &Path, per_class: usize) {
    let motifs = [("Breast", "WHCM"), ("Colorectal", "YFKP"), ("Liver", "QDRW"), ("Urothelial", "NEGT")];
    let filler = "ACDEFGHIKLMNPQRSTVWY".as_bytes();
    let mut text = String::from("id,sequence,label\n");
    let mut n = 0usize;
    for (label, motif) in motifs {
        for i in 0..per_class {
            let len = 4 + i % 9;
            let prefix: String = (0..len).map(|j| filler[(n * 7 + j * 3) % 20] as char).collect();
            text.push_str(&format!("s{n},{prefix}{motif},{label}\n"));
            n += 1;
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn missing_input_is_a_data_error() {
    let o = run(&["stats", "--input", "/definitely/not/here.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not/here.csv"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["stats"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let o = bin()
        .env("TCR_SPARSE_THREADS", "many")
        .args(["stats", "--input", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stats_counts_match_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    std::fs::write(
        &input,
        "id,sequence,label\n\
         a,CASSL,Breast\nb,CASSLGG,Breast\nc,CAW,Breast\n\
         d,CASRDT,Liver\ne,CASRD,Liver\nf,CATSRDGG,Liver\ng,CASS,Liver\n\
         h,CSARGQ,Urothelial\ni,CSAR,Urothelial\nj,CSARGQTY,Urothelial\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["stats", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"], 10);
    assert_eq!(stats["classes"]["Breast"]["count"], 3);
    assert_eq!(stats["classes"]["Liver"]["count"], 4);
    assert_eq!(stats["classes"]["Liver"]["min_len"], 4);
    assert_eq!(stats["classes"]["Urothelial"]["max_len"], 8);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("6.0000"), "{table}");
}

#[test]
fn embed_header_and_byte_identical_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("two.csv");
    std::fs::write(&input, "id,sequence,label\na,CASSLG,Breast\nb,CASRD,Liver\n").unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--k", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let txt = std::fs::read(out.join("embedding.txt")).unwrap();
        let json = std::fs::read(out.join("embedding.json")).unwrap();
        outputs.push((txt, json));
    }
    let header = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(header.lines().next().unwrap(), "2 194481 5");
    assert_eq!(outputs[0], outputs[1]);
    let sidecar: serde_json::Value = serde_json::from_slice(&outputs[0].1).unwrap();
    assert_eq!(sidecar["spec"]["kmer"]["k"], 4);
    assert_eq!(sidecar["spec"]["mode"], "bag-of-kmers");
    assert!(sidecar["alphabet_hash"].is_string());
}

#[test]
fn positional_overflow_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("d.csv");
    std::fs::write(&input, "id,sequence,label\nshort1,CASS,Breast\ntoo_long_7,CASSLGGTE,Liver\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--mode", "positional-concat", "--k", "3", "--max-len", "6",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too_long_7"), "{}", stderr(&o));
}

#[test]
fn step_commands_chain_and_reject_mixed_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    write_dataset(&dir.path().join("d.csv"), 12);

    for (name, k) in [("e4", "4"), ("e3", "3")] {
        let o = run(&["embed", "--input", &p("d.csv"), "--out", &p(name), "--k", k]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = run(&["select", "--embedding", &p("e4"), "--out", &p("sel"), "--alpha", "0.01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["train", "--embedding", &p("e4"), "--lasso", &p("sel/lasso.json"), "--out", &p("m"), "--classifiers", "knn,dt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "evaluate", "--embedding", &p("e4"), "--lasso", &p("sel/lasso.json"),
        "--models", &p("m/models.json"), "--out", &p("ev"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_runs"], 1);
    assert!(report["classifiers"]["knn"]["mean"]["accuracy"].is_number());

    let o = run(&["train", "--embedding", &p("e3"), "--lasso", &p("sel/lasso.json"), "--out", &p("m3")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("provenance"), "{}", stderr(&o));
}

#[test]
fn pipeline_is_deterministic_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    write_dataset(&dir.path().join("d.csv"), 15);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"n_runs": 3, "classifiers": ["knn", "nb"], "embedding": {"kmer": {"k": 3, "gap": 0}}}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let o = run(&[
            "pipeline", "--config", &p("cfg.json"), "--input", &p("d.csv"), "--out", &p(name),
            "--n-runs", "2", "--domain-knowledge",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("WARNING: domain-knowledge"), "{}", stderr(&o));
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(p(&format!("{name}/report.json"))).unwrap()).unwrap();
        assert!(Path::new(&p(&format!("{name}/lasso.json"))).exists());
        tcr_sparse::pipeline::strip_timing(&mut v);
        reports.push(v);
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0]["n_runs"], 2);
    assert_eq!(reports[0]["embedding"]["kmer"]["k"], 3);
    let names: Vec<&String> = reports[0]["classifiers"].as_object().unwrap().keys().collect();
    assert_eq!(names, ["knn", "nb"]);
    assert_eq!(reports[0]["domain_knowledge_leakage"], true);
}

#[test]
fn project_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    write_dataset(&dir.path().join("d.csv"), 10);
    let o = run(&["embed", "--input", &p("d.csv"), "--out", &p("e"), "--k", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["project", "--embedding", &p("e"), "--out", &p("t"), "--perplexity", "5", "--iterations", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(p("t/tsne.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("id,x,y,label"));
    assert_eq!(csv.lines().count(), 41);
    assert!(std::fs::read_to_string(p("t/tsne.svg")).unwrap().starts_with("<svg"));
}
