//! Drives the `siat` binary: a server child process and one-shot client
//! invocations.

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_siat");

pub struct ServerProc {
    child: Child,
    pub url: String,
    /// Printed only when the data directory was fresh.
    pub root_token: Option<String>,
}

impl ServerProc {
    pub fn start(data_dir: &Path) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve", "--port", "0"])
            .env("SIAT_DATA_DIR", data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn siat serve");
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let mut root_token = None;
        let url = loop {
            let line = lines
                .next()
                .expect("server exited before listening")
                .expect("read server output");
            if let Some(t) = line.strip_prefix("root token: ") {
                root_token = Some(t.trim().to_string());
            } else if let Some(u) = line.strip_prefix("listening on ") {
                break u.trim().to_string();
            }
        };
        Self { child, url, root_token }
    }

    /// Kills the process without a graceful shutdown.
    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServerProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        self.stdout.trim().to_string()
    }
}

/// Runs one client command against `url` with `token`.
pub fn siat(url: &str, token: Option<&str>, args: &[&str]) -> Outcome {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("SIAT_SERVER", url).env_remove("SIAT_TOKEN");
    if let Some(t) = token {
        cmd.env("SIAT_TOKEN", t);
    }
    let out = cmd.output().expect("run siat");
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}
