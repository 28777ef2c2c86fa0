#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weaksup::corpus::{save_documents, save_embeddings, ClassCatalog};
use weaksup::synthetic::{generate, SyntheticConfig};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_weaksup"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn weaksup")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

pub fn toy_path(name: &str) -> String {
    toy().join(name).to_string_lossy().into_owned()
}

/// Writes a synthetic corpus as text documents plus rules that reproduce its
/// weak-label matrix: source `j` voting class `c` leaves the token `s{j}c{c}`.
pub fn write_text_corpus(dir: &Path, seed: u64, n: usize) -> PathBuf {
    let c = generate(&SyntheticConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap();
    let mut docs = c.documents.clone();
    for (i, d) in docs.iter_mut().enumerate() {
        let mut words = vec![format!("doc{i}")];
        for (j, &v) in c.weak_labels.row(i).iter().enumerate() {
            if v >= 0 {
                words.push(format!("s{j}c{v}"));
            }
        }
        d.text = words.join(" ");
    }
    let catalog = ClassCatalog::new(["NEG", "POS"]).unwrap();
    save_documents(dir.join("docs.jsonl"), &docs, &catalog).unwrap();
    save_embeddings(dir.join("embeddings.wse"), &c.embeddings).unwrap();
    let mut rules = String::new();
    for j in 0..c.weak_labels.k() {
        for (cls, name) in ["NEG", "POS"].iter().enumerate() {
            rules.push_str(&format!(
                "rule s{j}_{name} : HAS([\"s{j}c{cls}\"]) => {name}\n"
            ));
        }
    }
    std::fs::write(dir.join("rules.txt"), rules).unwrap();
    let conf = format!(
        "docs = {}\nembeddings = {}\nrules = {}\nclasses = NEG,POS\nseed = {seed}\n",
        dir.join("docs.jsonl").display(),
        dir.join("embeddings.wse").display(),
        dir.join("rules.txt").display()
    );
    let conf_path = dir.join("run.conf");
    std::fs::write(&conf_path, conf).unwrap();
    conf_path
}
