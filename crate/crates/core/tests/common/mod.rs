//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Everything here is written as plain loops over the
//! textbook formulas, without reusing library internals.
#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One compared quantity.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub got: f64,
    pub want: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            got,
            want,
            tol,
        }
    }

    /// Exact comparison, bit for bit apart from signed zero.
    pub fn exact(name: impl Into<String>, got: f64, want: f64) -> Self {
        Self::new(name, got, want, 0.0)
    }

    pub fn passed(&self) -> bool {
        if self.tol == 0.0 {
            self.got == self.want
        } else {
            (self.got - self.want).abs() <= self.tol
        }
    }
}

pub fn failures(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{}: got {:e}, want {:e} (tol {:e})", c.name, c.got, c.want, c.tol))
        .collect()
}

pub fn assert_all(checks: &[Check]) {
    let bad = failures(checks);
    assert!(bad.is_empty(), "{} of {} checks failed:\n{}", bad.len(), checks.len(), bad.join("\n"));
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub mod cli {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    pub fn awe<I, S>(args: I) -> Output
    where
        I: IntoIterator<Item = S>,
        S: AsRef<std::ffi::OsStr>,
    {
        Command::new(env!("CARGO_BIN_EXE_awe")).args(args).output().expect("spawn awe")
    }

    /// Runs and insists on success, returning stdout.
    pub fn awe_ok<I, S>(args: I) -> String
    where
        I: IntoIterator<Item = S>,
        S: AsRef<std::ffi::OsStr>,
    {
        let out = awe(args);
        assert!(
            out.status.success(),
            "exit {:?}\nstdout:\n{}\nstderr:\n{}",
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Relative path → contents of every file under `root`.
    pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
                }
            }
        }
        out
    }

    /// gen-synth, train, embed and eval-wd under `dir` with a JSON config.
    pub fn pipeline(dir: &Path, config: &str) {
        let cfg = dir.join("config.json");
        std::fs::write(&cfg, config).unwrap();
        let p = |s: &str| dir.join(s).display().to_string();
        let cfg = cfg.display().to_string();
        awe_ok(["gen-synth", "--config", &cfg, "--out-dir", &p("corpus")]);
        awe_ok(["train", "--config", &cfg, "--manifest", &p("corpus/train.jsonl"), "--out", &p("model")]);
        awe_ok(["embed", "--model", &p("model"), "--manifest", &p("corpus/test.jsonl"), "--out", &p("test.emb")]);
        awe_ok([
            "eval-wd",
            "--embeddings",
            &p("test.emb"),
            "--manifests",
            &p("corpus/train.jsonl"),
            &p("corpus/test.jsonl"),
            "--out",
            &p("wd.json"),
            "--trials-dir",
            &p("trials"),
        ]);
    }
}
