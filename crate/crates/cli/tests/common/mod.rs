#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A private copy of the toy fixture, so tests can write artifacts.
pub struct Toy {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
}

impl Toy {
    pub fn new() -> Self {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("toy");
        std::fs::create_dir(&root).unwrap();
        for entry in std::fs::read_dir(&src).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), root.join(entry.file_name())).unwrap();
        }
        Self { _dir: dir, root }
    }

    /// Copy with the dense index already built.
    pub fn indexed() -> Self {
        let toy = Self::new();
        let out = toy.run(&["index"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        toy
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> String {
        self.path("config.toml").to_string_lossy().into_owned()
    }

    /// Runs `chainrag <sub> --config <toy config> <rest...>`.
    pub fn run(&self, args: &[&str]) -> Output {
        let config = self.config();
        let mut full = vec![args[0], "--config", &config];
        full.extend_from_slice(&args[1..]);
        chainrag(&full)
    }
}

pub fn chainrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainrag"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
