use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny model so the tests stay fast
op_embedding_dim = 4
node_embedding_dim = 4
hidden_dim = 8
gcn_dims = [8, 8]
backward_gcn_dims = [8, 8]
mlp_dims = [16]
op_update_mlp_dims = [8]
supp_embedder_dims = [8]
nn_emb_dim = 8
epochs = 3
transfer_epochs = 2
";

fn flan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = flan(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(w.path("small.cfg"), SMALL).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn bench(&self, name: &str, archs: usize, seed: u64, space: u32) -> String {
        let out = self.p(name);
        ok(&[
            "gen-bench",
            "--num-archs",
            &archs.to_string(),
            "--seed",
            &seed.to_string(),
            "--space-id",
            &space.to_string(),
            "--out",
            &out,
        ]);
        out
    }
}

fn field(json: &str, key: &str) -> f64 {
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    v[key].as_f64().unwrap_or_else(|| panic!("no `{key}` in {json}"))
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn gen_bench_is_deterministic() {
    let w = Work::new();
    let a = w.bench("a.jsonl", 200, 7, 0);
    let b = w.bench("b.jsonl", 200, 7, 0);
    let c = w.bench("c.jsonl", 200, 8, 0);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with(r#"{"format":"flan-bench/1""#));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn train_then_eval_reproduces_tau() {
    let w = Work::new();
    let bench = w.bench("b.jsonl", 120, 3, 0);
    let (cfg, ckpt) = (w.p("small.cfg"), w.p("m.ckpt"));
    let trained = ok(&["train", "--bench", &bench, "--train-count", "40", "--seed", "4", "--config", &cfg, "--out", &ckpt]);
    let report = w.p("eval.jsonl");
    ok(&["eval", "--checkpoint", &ckpt, "--bench", &bench, "--out", &report]);
    let evaluated = String::from_utf8(read(&report)).unwrap();
    assert_eq!(field(&trained, "kendall_tau").to_bits(), field(&evaluated, "kendall_tau").to_bits());
    assert_eq!(field(&evaluated, "test_count"), 80.0);

    let again = w.p("m2.ckpt");
    ok(&["train", "--bench", &bench, "--train-count", "40", "--seed", "4", "--config", &cfg, "--out", &again]);
    assert_eq!(read(&ckpt), read(&again));
}

#[test]
fn eval_needs_two_held_out_archs() {
    let w = Work::new();
    let bench = w.bench("b.jsonl", 40, 3, 0);
    let ckpt = w.p("m.ckpt");
    ok(&["train", "--bench", &bench, "--train-count", "10", "--config", &w.p("small.cfg"), "--out", &ckpt]);
    let mut lines: Vec<String> = String::from_utf8(read(&bench)).unwrap().lines().take(2).map(String::from).collect();
    lines[0] = lines[0].replace(r#""name":""#, r#""name":"one-"#);
    let one = w.path("one.jsonl");
    std::fs::write(&one, lines.join("\n")).unwrap();
    let err = fails(&["eval", "--checkpoint", &ckpt, "--bench", one.to_str().unwrap()]);
    assert!(err.contains("at least 2"), "{err}");
}

#[test]
fn encode_feeds_train_as_supplemental() {
    let w = Work::new();
    let bench = w.bench("b.jsonl", 100, 5, 0);
    for kind in ["adjacency", "path", "score", "zcp"] {
        let out = w.p(&format!("{kind}.jsonl"));
        ok(&["encode", "--bench", &bench, "--kind", kind, "--out", &out]);
        let text = String::from_utf8(read(&out)).unwrap();
        assert!(text.starts_with(r#"{"format":"flan-supp/1""#), "{kind}");
        assert_eq!(text.lines().count(), 101, "{kind}");
    }
    let zcp = w.p("zcp.jsonl");
    let ckpt = w.p("m.ckpt");
    let report = ok(&[
        "train", "--bench", &bench, "--train-count", "30", "--supp", &zcp, "--config", &w.p("small.cfg"), "--out", &ckpt,
    ]);
    assert!(field(&report, "kendall_tau").is_finite());
    let evaluated = ok(&["eval", "--checkpoint", &ckpt, "--bench", &bench, "--supp", &zcp]);
    assert_eq!(field(&report, "kendall_tau"), field(&evaluated, "kendall_tau"));
    // the supplemental input is part of the model
    fails(&["eval", "--checkpoint", &ckpt, "--bench", &bench]);
}

#[test]
fn transfer_zero_shot_and_fine_tuned() {
    let w = Work::new();
    let src = w.bench("a.jsonl", 80, 1, 0);
    let dst = w.bench("b.jsonl", 80, 2, 1);
    let cfg = w.p("small.cfg");
    let ckpt = w.p("a.ckpt");
    ok(&["train", "--bench", &src, "--train-count", "40", "--config", &cfg, "--out", &ckpt]);
    let zero = ok(&["transfer", "--checkpoint", &ckpt, "--bench", &dst, "--samples", "0", "--config", &cfg, "--out", &w.p("z.ckpt")]);
    assert_eq!(field(&zero, "test_count"), 80.0);
    let tuned = ok(&["transfer", "--checkpoint", &ckpt, "--bench", &dst, "--samples", "16", "--config", &cfg, "--out", &w.p("t.ckpt")]);
    assert_eq!(field(&tuned, "test_count"), 64.0);
    let evaluated = ok(&["eval", "--checkpoint", &w.p("t.ckpt"), "--bench", &dst]);
    assert_eq!(field(&tuned, "kendall_tau"), field(&evaluated, "kendall_tau"));
}

#[test]
fn search_writes_a_deterministic_trace() {
    let w = Work::new();
    let bench = w.bench("b.jsonl", 150, 9, 0);
    let cfg = w.p("small.cfg");
    let run = |out: &str, predictor: &str| {
        ok(&[
            "search", "--bench", &bench, "--predictor", predictor, "--budget-per-iter", "6", "--max-iters", "2", "--seed", "3",
            "--config", &cfg, "--out", out,
        ])
    };
    let (t1, t2) = (w.p("t1.csv"), w.p("t2.csv"));
    let summary = run(&t1, "flan");
    run(&t2, "flan");
    assert_eq!(read(&t1), read(&t2));
    let trace = String::from_utf8(read(&t1)).unwrap();
    assert_eq!(trace.lines().next(), Some("iter,pool_size,phase,arch_id,true_acc,pred_score,best_so_far"));
    assert_eq!(trace.lines().count(), 1 + 18);
    assert_eq!(field(&summary, "evaluated"), 18.0);

    let oracle = run(&w.p("o.csv"), "oracle");
    let best = String::from_utf8(read(&bench))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| field(l, "acc"))
        .fold(f64::MIN, f64::max);
    assert_eq!(field(&oracle, "best_acc"), best);

    let ckpt = w.p("m.ckpt");
    ok(&["train", "--bench", &bench, "--train-count", "20", "--config", &cfg, "--out", &ckpt]);
    let from_ckpt = ok(&[
        "search", "--bench", &bench, "--checkpoint", &ckpt, "--budget-per-iter", "4", "--max-iters", "1", "--config", &cfg,
        "--out", &w.p("c.csv"),
    ]);
    assert_eq!(field(&from_ckpt, "evaluated"), 8.0);
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let w = Work::new();
    let err = fails(&["gen-bench", "--bogus", "--out", &w.p("x")]);
    assert!(err.contains("--bogus"), "{err}");
    let err = fails(&["eval", "--checkpoint", &w.p("none.ckpt"), "--bench", &w.p("none.jsonl")]);
    assert!(err.starts_with("flan: error:"), "{err}");
    let bench = w.bench("b.jsonl", 30, 1, 0);
    std::fs::write(w.path("bad.cfg"), "epochs = 2\nwarp_speed = 9\n").unwrap();
    let err = fails(&["train", "--bench", &bench, "--train-count", "10", "--config", &w.p("bad.cfg"), "--out", &w.p("m")]);
    assert!(err.contains(":2:") && err.contains("warp_speed"), "{err}");
    let err = fails(&["search", "--bench", &bench, "--budget-per-iter", "3", "--out", &w.p("t.csv")]);
    assert!(err.contains("even"), "{err}");
    let err = fails(&["gen-bench", "--num-nodes", "3", "--num-archs", "100", "--out", &w.p("x")]);
    assert!(err.starts_with("flan: error:"), "{err}");
}
