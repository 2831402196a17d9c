#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_selfscope");

const SOCIAL: &[&str] = &["we", "us", "friends", "together", "family", "talked", "laughed", "shared"];
const SOLO: &[&str] = &["walked", "rain", "street", "morning", "coffee", "window", "quiet", "alone"];
const COMMON: &[&str] = &["i", "my", "me", "felt", "today", "then", "the", "a", "after", "he", "she", "his"];

fn sentence(rng: &mut ChaCha8Rng, pool: &[&str], len: usize) -> String {
    let words: Vec<&str> = (0..len)
        .map(|_| if rng.gen_bool(0.6) { pool[rng.gen_range(0..pool.len())] } else { COMMON[rng.gen_range(0..COMMON.len())] })
        .collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s + "."
}

/// Writes `instances.jsonl`, `manifest.toml` and two annotators' label
/// files into `dir`. Every tenth instance is labelled differently by `b`.
pub fn write_inputs(dir: &Path, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut instances = String::new();
    let (mut a, mut b) = (String::new(), String::new());
    for i in 0..n {
        let label = i % 2 == 0;
        let pool = if label { SOCIAL } else { SOLO };
        let text = format!("{} {}", sentence(&mut rng, pool, 10), sentence(&mut rng, pool, 6));
        instances += &format!("{{\"id\":\"d{i:03}\",\"text\":\"{text}\"}}\n");
        let v = |x: bool| if x { "present" } else { "absent" };
        a += &format!("{{\"instance_id\":\"d{i:03}\",\"path\":\"SS\",\"value\":\"{}\"}}\n", v(label));
        let other = if i % 10 == 5 { !label } else { label };
        b += &format!("{{\"instance_id\":\"d{i:03}\",\"path\":\"SS\",\"value\":\"{}\"}}\n", v(other));
    }
    std::fs::write(dir.join("instances.jsonl"), instances).unwrap();
    std::fs::write(dir.join("ann_a.jsonl"), a).unwrap();
    std::fs::write(dir.join("ann_b.jsonl"), b).unwrap();
    std::fs::write(
        dir.join("manifest.toml"),
        "dataset_id = \"diary\"\nlanguage = \"en\"\nunit_level = \"document\"\n",
    )
    .unwrap();
}

pub fn run(project: &Path, args: &[&str]) -> Output {
    let out = Command::new(BIN).arg("--project").arg(project).args(args).output().unwrap();
    out
}

pub fn ok(project: &Path, args: &[&str]) -> String {
    let out = run(project, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A project with one imported dataset of `n` documents and two annotators.
pub fn project(dir: &Path, n: usize) -> std::path::PathBuf {
    write_inputs(dir, n);
    let p = dir.join("project");
    let s = |f: &str| dir.join(f).to_string_lossy().into_owned();
    ok(&p, &["corpus", "import", &s("instances.jsonl"), "--manifest", &s("manifest.toml")]);
    ok(&p, &["annotate", "import", &s("ann_a.jsonl"), "--annotator", "ann_a"]);
    ok(&p, &["annotate", "import", &s("ann_b.jsonl"), "--annotator", "ann_b"]);
    p
}

pub struct Server {
    pub child: Child,
    pub addr: SocketAddr,
}

impl Server {
    pub fn start(project: &Path) -> Server {
        let mut child = Command::new(BIN)
            .arg("--project")
            .arg(project)
            .args(["serve", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on http://").expect(&line).parse().unwrap();
        Server { child, addr }
    }

    pub fn request(&self, method: &str, target: &str, annotator: Option<&str>, body: &str) -> (u16, String) {
        let mut stream = TcpStream::connect(self.addr).unwrap();
        let header = annotator.map(|a| format!("X-Annotator: {a}\r\n")).unwrap_or_default();
        write!(
            stream,
            "{method} {target} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n{header}Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        let mut raw = String::new();
        stream.read_to_string(&mut raw).unwrap();
        let status = raw[9..12].parse().unwrap();
        let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
        (status, body)
    }

    /// Simulates a crash: SIGKILL, no shutdown hooks.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
