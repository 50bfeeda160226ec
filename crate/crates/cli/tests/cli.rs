use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dacs::simulator::gen_gaussian_mixture;
use dacs::{FeatureMatrix, Seed};
use dacs_cli::embedding::{read_embeddings, EmbeddingFile, Format};
use serde_json::Value;
use tempfile::TempDir;

fn dacs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dacs"))
        .args(args)
        .env_remove("DACS_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn mixture(n_per: usize, d: usize, seed: u64) -> FeatureMatrix {
    gen_gaussian_mixture(4, n_per, d, 1.0, 3.0, Seed(seed))
        .unwrap()
        .features
        .normalize_rows()
        .unwrap()
}

fn write_emb(dir: &Path, name: &str, x: &FeatureMatrix) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, EmbeddingFile::from_matrix(x).to_bytes()).unwrap();
    path
}

fn write_text(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn labeled_file(dir: &Path, ids: impl IntoIterator<Item = usize>) -> PathBuf {
    let text: String = ids.into_iter().map(|i| format!("{i}\n")).collect();
    write_text(dir, "labeled.txt", &text)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn embedding_file_round_trip_is_bitwise() {
    let tmp = TempDir::new().unwrap();
    let x = mixture(10, 6, 3);
    let file = EmbeddingFile::from_matrix(&x);
    let path = write_emb(tmp.path(), "x.bin", &x);
    let back = read_embeddings(&path, Format::Binary).unwrap();
    let again = EmbeddingFile::from_matrix(&back);
    assert_eq!(again, file);
    let bits = |m: &FeatureMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&file.to_matrix().unwrap()));
}

#[test]
fn select_returns_unique_unlabeled_indices() {
    let tmp = TempDir::new().unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &mixture(25, 16, 1));
    let labeled = labeled_file(tmp.path(), 0..10);
    let out = tmp.path().join("sel.json");
    let o = dacs(&[
        "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "5",
        "--strategy", "dacs", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    let sel: Vec<u64> = v["selected"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(sel.len(), 5);
    assert_eq!(sel.iter().collect::<HashSet<_>>().len(), 5);
    assert!(sel.iter().all(|&i| (10..100).contains(&i)));
    assert!(v["per_cluster"].is_array());
    assert!(v["diagnostics"]["max_similarity"].is_array());
    assert_eq!(v["config_echo"]["acquisition"]["budget"], 5);
}

#[test]
fn coreset_matches_dacs_with_one_break() {
    let tmp = TempDir::new().unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &mixture(25, 16, 2));
    let labeled = labeled_file(tmp.path(), [3, 40, 77]);
    let cfg = write_text(tmp.path(), "one.cfg", "n_breaks = 1\n");
    let run = |strategy: &str, extra: &[&str]| {
        let out = tmp.path().join(format!("{strategy}.json"));
        let mut args = vec![
            "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "8",
            "--strategy", strategy, "--out", p(&out),
        ];
        args.extend_from_slice(extra);
        let o = dacs(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        read_json(&out)
    };
    let dacs_one = run("dacs", &["--config", p(&cfg)]);
    let coreset = run("coreset", &[]);
    for key in ["selected", "per_cluster", "diagnostics"] {
        assert_eq!(dacs_one[key], coreset[key], "{key}");
    }
}

#[test]
fn truncated_payload_exits_2_with_sizes() {
    let tmp = TempDir::new().unwrap();
    let mut bytes = EmbeddingFile::from_matrix(&mixture(5, 4, 1)).to_bytes();
    bytes.truncate(bytes.len() - 6);
    let emb = write_text(tmp.path(), "bad.bin", "");
    std::fs::write(&emb, &bytes).unwrap();
    let labeled = labeled_file(tmp.path(), [0]);
    let o = dacs(&[
        "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "2",
        "--strategy", "coreset", "--out", p(&tmp.path().join("o.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("expected 320 bytes") && err.contains("got 314"), "{err}");
}

#[test]
fn budget_beyond_pool_exits_2() {
    let tmp = TempDir::new().unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &mixture(5, 4, 1));
    let labeled = labeled_file(tmp.path(), 0..15);
    let out = tmp.path().join("o.json");
    let o = dacs(&[
        "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "6",
        "--strategy", "dacs", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exceeds the 5 unlabeled"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn labeled_parse_error_names_line() {
    let tmp = TempDir::new().unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &mixture(5, 4, 1));
    let labeled = write_text(tmp.path(), "l.txt", "1\nx2\n");
    let o = dacs(&[
        "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "1",
        "--strategy", "dacs", "--out", p(&tmp.path().join("o.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn combined_needs_scores() {
    let tmp = TempDir::new().unwrap();
    let x = mixture(10, 8, 4);
    let emb = write_emb(tmp.path(), "x.bin", &x);
    let labeled = labeled_file(tmp.path(), [0, 1]);
    let out = tmp.path().join("o.json");
    let base = [
        "select", "--embeddings", p(&emb), "--labeled", p(&labeled), "--budget", "4",
        "--strategy", "combined", "--out", p(&out),
    ];
    let o = dacs(&base);
    assert_eq!(o.status.code(), Some(2));

    let scores: String = (0..x.n()).map(|i| format!("{}\n", (i % 7) as f64 / 7.0)).collect();
    let scores = write_text(tmp.path(), "s.txt", &scores);
    let mut args = base.to_vec();
    args.extend(["--scores", p(&scores)]);
    let o = dacs(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&out)["selected"].as_array().unwrap().len(), 4);
}

#[test]
fn csv_embeddings_accepted() {
    let tmp = TempDir::new().unwrap();
    let x = mixture(6, 3, 5);
    let emb = write_text(tmp.path(), "x.csv", &EmbeddingFile::from_matrix(&x).to_csv());
    let labeled = labeled_file(tmp.path(), [0]);
    let out = tmp.path().join("o.json");
    let o = dacs(&[
        "select", "--embeddings", p(&emb), "--format", "csv", "--labeled", p(&labeled),
        "--budget", "3", "--strategy", "coreset", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn exact_density_of_coincident_points_is_zero() {
    let tmp = TempDir::new().unwrap();
    let x = FeatureMatrix::from_rows(&vec![vec![0.6, 0.8]; 3]).unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &x);
    let out = tmp.path().join("d.csv");
    let o = dacs(&["density", "--embeddings", p(&emb), "--mode", "exact", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,density,convention");
    for (i, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], i.to_string());
        assert!(f[1].parse::<f64>().unwrap().abs() < 1e-12, "{line}");
        assert_eq!(f[2], "distance");
    }
    assert_eq!(lines.len(), 4);
}

#[test]
fn lsh_density_is_reproducible_and_compared() {
    let tmp = TempDir::new().unwrap();
    let emb = write_emb(tmp.path(), "x.bin", &mixture(100, 16, 6));
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = dacs(&[
            "density", "--embeddings", p(&emb), "--mode", "lsh", "--buckets", "20", "--compare",
            "--out", p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (std::fs::read(&out).unwrap(), stderr(&o))
    };
    let (a, err) = run("a.csv");
    let (b, _) = run("b.csv");
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().lines().nth(1).unwrap().ends_with(",similarity"));
    assert!(err.contains("spearman"), "{err}");
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "n_classes = 3\nper_class = 40\ndim = 6\nseparation = 3\nepochs = 6\nbatch_size = 16\n\
         init_labeled = 6\nbudget = 6\nn_buckets = 10\nreduced_dim = 4\nstrategies = dacs, random\n{extra}"
    );
    write_text(dir, "run.cfg", &text)
}

fn strip_timings(path: &Path) -> Value {
    let mut v = read_json(path);
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn simulate_writes_reports_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), "cycles = 2\ntrials = 3\n");
    let out = tmp.path().join("out");
    let o = dacs(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for strategy in ["dacs", "random"] {
        for seed in 0..3 {
            assert!(out.join(format!("{strategy}-seed{seed}.json")).exists());
        }
    }
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cycle,frac,acc,info,div,strategy,seed"));
    assert_eq!(lines.count(), 2 * 3 * 3);
    assert!(out.join("config.json").exists());
    assert!(std::fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn simulate_zero_cycles_has_only_cycle_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), "cycles = 0\ntrials = 1\n");
    let out = tmp.path().join("out");
    let o = dacs(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out.join("dacs-seed0.json"));
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0]["cycle"], 0);
}

#[test]
fn simulate_is_deterministic_modulo_timings() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), "cycles = 1\ntrials = 1\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        assert!(dacs(&["simulate", "--config", p(&cfg), "--out", p(out)]).status.success());
    }
    for name in ["dacs-seed0.json", "random-seed0.json"] {
        assert_eq!(strip_timings(&a.join(name)), strip_timings(&b.join(name)));
    }
    assert_eq!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn seed_env_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), "cycles = 0\ntrials = 1\nseed = 4\n");
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_dacs"))
        .args(["simulate", "--config", p(&cfg), "--out", p(&out)])
        .env("DACS_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("dacs-seed11.json").exists());
    assert!(!out.join("dacs-seed4.json").exists());
}

#[test]
fn divergence_exits_3_and_keeps_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path(), "cycles = 1\ntrials = 1\nlearning_rate = 1e300\n");
    let out = tmp.path().join("out");
    let o = dacs(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let v = read_json(&out.join("dacs-seed0.json"));
    assert_eq!(v["status"]["status"], "diverged", "{}", v["status"]);
    assert!(out.join("summary.csv").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_text(tmp.path(), "bad.cfg", "cycles = 1\nbuckets = 4\n");
    let o = dacs(&["simulate", "--config", p(&cfg), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2: unknown key 'buckets'"), "{}", stderr(&o));
}
