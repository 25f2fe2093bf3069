#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{TimeZone, Utc};
use toxi_core::corpus::{scrub_pii, RawRecord};
use toxi_core::{FourWayDecision, ToxicityClass};
use toxi_service::{AnnotationStore, StoreConfig, SystemClock};

pub const SALT: &str = "5eed0fa11ce0ffee";

pub fn toxi(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toxi"))
        .arg("--data")
        .arg(data)
        .args(args)
        .env("TOXI_LLM_BASE_URL", "mock://lexicon")
        .env("TOXI_SALT", SALT)
        .env_remove("TOXI_DATA")
        .output()
        .expect("toxi binary runs")
}

/// Runs `toxi` and fails with its stderr unless it exits 0.
pub fn toxi_ok(data: &Path, args: &[&str]) -> Result<String, String> {
    let out = toxi(data, args);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if out.status.success() {
        Ok(stdout)
    } else {
        Err(format!(
            "`toxi {}` exited {:?}: {}{}",
            args.join(" "),
            out.status.code(),
            stdout,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// 50 French forum comments: 15 toxic, 35 not, two of which use a lexicon
/// word without being toxic.
pub fn toy_corpus() -> Vec<(RawRecord, ToxicityClass)> {
    let toxic = [
        "Quel connard ce {}, franchement il fallait le dire",
        "Espèce d'abruti de {}, tu n'as rien compris du tout",
        "Ce {} est un vrai crétin sans la moindre cervelle",
        "Dégage d'ici avec ton {}, personne ne veut de toi",
        "Ferme ta gueule sur le {}, tu racontes n'importe quoi",
    ];
    let clean = [
        "Merci pour le partage sur le {}, très instructif",
        "Je ne suis pas d'accord sur le {} mais l'argument se tient",
        "Quelqu'un a des nouvelles du {} pour ce week-end ?",
        "Bonne analyse du {}, j'ajouterais juste un point sur le contexte",
        "Le débat sur le {} mérite mieux que des slogans",
    ];
    let subjects = ["match", "concert", "budget", "chantier", "festival", "vote", "marché"];
    let mut out = Vec::new();
    for t in toxic {
        for s in &subjects[..3] {
            out.push((t.replace("{}", s), ToxicityClass::Toxic));
        }
    }
    for t in clean {
        for s in subjects {
            out.push((t.replace("{}", s), ToxicityClass::NonToxic));
        }
    }
    out[15].0 = "Ce match était stupide à regarder mais je le conseille quand même".into();
    out[16].0 = "Le film est un peu stupide mais franchement très drôle à voir".into();
    out.into_iter()
        .enumerate()
        .map(|(i, (text, label))| {
            let raw = RawRecord {
                source_id: format!("forum-{i:03}"),
                author: format!("user{}", i % 9),
                text,
                timestamp: Utc.with_ymd_and_hms(2020 + (i % 4) as i32, 1 + (i % 12) as u32, 1 + (i % 27) as u32, 12, 0, 0).unwrap(),
                forum: "general".into(),
            };
            (raw, label)
        })
        .collect()
}

pub fn write_raw(path: &Path, corpus: &[(RawRecord, ToxicityClass)]) {
    let lines: Vec<String> = corpus.iter().map(|(r, _)| serde_json::to_string(r).unwrap()).collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Plays the human reviewer: every queued item gets the gold decision.
pub fn review_queue(data: &Path, corpus: &[(RawRecord, ToxicityClass)]) -> Result<usize, String> {
    let gold: HashMap<String, ToxicityClass> = corpus.iter().map(|(r, l)| (scrub_pii(&r.text).0, *l)).collect();
    let mut store = AnnotationStore::open(&data.join("store"), std::sync::Arc::new(SystemClock), StoreConfig::default())
        .map_err(|e| e.to_string())?;
    store.register_annotator("reviewer").map_err(|e| e.to_string())?;
    let mut reviewed = 0;
    while let Some(item) = store.next_item("reviewer").map_err(|e| e.to_string())? {
        let decision = match gold.get(&item.comment.text) {
            Some(ToxicityClass::Toxic) => FourWayDecision::Yes,
            Some(ToxicityClass::NonToxic) => FourWayDecision::No,
            None => return Err(format!("queued text not in fixture: {}", item.comment.text)),
        };
        store.submit_label(item.id(), "reviewer", decision).map_err(|e| e.to_string())?;
        reviewed += 1;
    }
    Ok(reviewed)
}

pub struct ToyRun {
    pub data: PathBuf,
    pub reviewed: usize,
    pub report: String,
    pub checkpoint: PathBuf,
    pub log: Vec<String>,
}

/// ingest → preannotate → review → split → train → eval → report.
pub fn toy_pipeline(root: &Path) -> Result<ToyRun, String> {
    let data = root.join("data");
    let corpus = toy_corpus();
    let raw = root.join("raw.jsonl");
    write_raw(&raw, &corpus);
    let d = data.as_path();
    let mut log = Vec::new();
    log.push(toxi_ok(d, &["ingest", "--in", raw.to_str().unwrap()])?);
    log.push(toxi_ok(d, &["preannotate", "--max-concurrency", "2"])?);
    let reviewed = review_queue(d, &corpus)?;
    log.push(toxi_ok(d, &["--seed", "3", "split", "--bench-per-class", "5"])?);
    log.push(toxi_ok(d, &["--seed", "3", "train", "--code", "rec", "--epochs", "2", "--lr", "0.01"])?);
    let checkpoint = data.join("runs").join("rec-dynamic-s3");
    let ckpt = format!("checkpoint:{}", checkpoint.display());
    log.push(toxi_ok(d, &["--seed", "3", "eval", "--adapter", &ckpt])?);
    log.push(toxi_ok(d, &["--seed", "3", "eval", "--adapter", "lexicon", "--mode", "few_shot", "--k", "4"])?);
    log.push(toxi_ok(d, &["eval", "--adapter", "oracle"])?);
    let report = toxi_ok(d, &["report"])?;
    Ok(ToyRun { data, reviewed, report, checkpoint, log })
}
