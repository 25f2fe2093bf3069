//! Training records, prompt/completion formatting, class balancing, batch
//! ordering and a synthetic CoT corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toxi_core::cot::prompts::CONCLUSION_QUESTION;
use toxi_core::cot::{CotAnnotation, Tone};
use toxi_core::taxonomy::{DataOrdering, TrainTarget};
use toxi_core::{ImplicitCategory, ToxicityClass, ToxicityVector};

use crate::tokenizer::EOS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("empty dataset")]
    Empty,
    #[error("oversampling needs both classes, only {0} present")]
    SingleClass(ToxicityClass),
    #[error("record {0} has no annotation but the target is cot")]
    MissingAnnotation(String),
}

/// One labeled comment ready for fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub text: String,
    pub label: ToxicityClass,
    #[serde(default)]
    pub annotation: Option<CotAnnotation>,
}

/// Prompt shared by every target.
pub fn format_prompt(text: &str) -> String {
    format!("Message : « {} »\n", toxi_core::text::single_line(text))
}

/// Prompt for the binary target, which ends with the conclusion question.
pub fn format_binary_prompt(text: &str) -> String {
    format!("{}{CONCLUSION_QUESTION}\n", format_prompt(text))
}

/// (prompt, completion) for one record. The gold label always replaces the
/// annotation's own decision.
pub fn format_example(record: &SftRecord, target: TrainTarget) -> Result<(String, String), DataError> {
    match target {
        TrainTarget::Cot => {
            let mut a = record
                .annotation
                .clone()
                .ok_or_else(|| DataError::MissingAnnotation(record.id.clone()))?;
            a.decision = record.label;
            a.raw_steps.clear();
            Ok((format_prompt(&record.text), format!("{}{EOS}", a.render())))
        }
        TrainTarget::Binary => Ok((format_binary_prompt(&record.text), format!("{}{EOS}", record.label.answer_fr()))),
    }
}

/// Returns all originals followed by minority-class items drawn with
/// replacement until both classes have the same count.
pub fn oversample<T: Clone>(items: &[T], class_of: impl Fn(&T) -> ToxicityClass, seed: u64) -> Result<Vec<T>, DataError> {
    if items.is_empty() {
        return Err(DataError::Empty);
    }
    let toxic: Vec<&T> = items.iter().filter(|t| class_of(t).is_toxic()).collect();
    let clean: Vec<&T> = items.iter().filter(|t| !class_of(t).is_toxic()).collect();
    if toxic.is_empty() {
        return Err(DataError::SingleClass(ToxicityClass::NonToxic));
    }
    if clean.is_empty() {
        return Err(DataError::SingleClass(ToxicityClass::Toxic));
    }
    let (minority, deficit) = if toxic.len() < clean.len() {
        (&toxic, clean.len() - toxic.len())
    } else {
        (&clean, toxic.len() - clean.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = items.to_vec();
    out.extend((0..deficit).map(|_| minority[rng.gen_range(0..minority.len())].clone()));
    Ok(out)
}

/// Stratified seeded hold-out: `fraction` of each class (at least one item
/// when the class has two or more) goes to the dev set.
pub fn carve_dev(records: &[SftRecord], fraction: f64, seed: u64) -> (Vec<SftRecord>, Vec<SftRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xde5e_5eed_u64);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for class in [ToxicityClass::Toxic, ToxicityClass::NonToxic] {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == class).collect();
        idx.shuffle(&mut rng);
        let mut k = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && k == 0 && idx.len() >= 2 {
            k = 1;
        }
        let (d, t) = idx.split_at(k.min(idx.len()));
        dev.extend(d.iter().copied());
        train.extend(t.iter().copied());
    }
    train.sort_unstable();
    dev.sort_unstable();
    (
        train.into_iter().map(|i| records[i].clone()).collect(),
        dev.into_iter().map(|i| records[i].clone()).collect(),
    )
}

/// Curriculum difficulty: confident examples (score far from the
/// auto-label threshold) first, then shorter completions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyKey {
    /// |score - 3.5|; `None` sorts as hardest.
    pub confidence: Option<f64>,
    pub length: usize,
}

pub const SCORE_BOUNDARY: f64 = 3.5;

impl DifficultyKey {
    pub fn new(score: Option<u8>, length: usize) -> Self {
        DifficultyKey { confidence: score.map(|s| (f64::from(s) - SCORE_BOUNDARY).abs()), length }
    }
}

/// Visiting order of `keys` for one epoch. Random ordering reshuffles every
/// epoch from (seed, epoch); curriculum ordering ignores both.
pub fn order_batches(keys: &[DifficultyKey], strategy: DataOrdering, seed: u64, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    match strategy {
        DataOrdering::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(epoch));
            order.shuffle(&mut rng);
        }
        DataOrdering::Ordered => {
            let conf = |k: &DifficultyKey| k.confidence.unwrap_or(f64::NEG_INFINITY);
            order.sort_by(|&a, &b| {
                conf(&keys[b])
                    .total_cmp(&conf(&keys[a]))
                    .then(keys[a].length.cmp(&keys[b].length))
                    .then(a.cmp(&b))
            });
        }
    }
    order
}

const SUBJECTS: [&str; 12] = [
    "le match", "la réforme", "ce film", "le gouvernement", "la météo", "ton article", "cette vidéo",
    "le concert", "la série", "le forum", "cette recette", "la conférence",
];
const NEUTRAL: [&str; 12] = [
    "était vraiment intéressant", "mérite une discussion", "me semble discutable", "a bien commencé",
    "manque de détails", "était long mais utile", "reste flou pour moi", "change tout",
    "se regarde sans effort", "a déjà été évoqué hier", "ne me convainc pas", "m'a fait réfléchir",
];
const INSULTS: [&str; 10] = [
    "crétin", "abruti", "imbécile", "connard", "idiot", "débile", "ordure", "minable", "bouffon", "nul",
];
const ATTACKS: [&str; 6] = [
    "espèce de", "tu es un vrai", "quel", "ferme-la sale", "va te cacher", "dégage",
];

/// Synthetic corpus of `n` annotated comments. Toxic comments contain an
/// insult; non-toxic ones never do. Scores follow the label (6-9 toxic,
/// 0-3 otherwise) so the auto-label threshold separates them.
pub fn synthetic_corpus(n: usize, toxic_fraction: f64, seed: u64) -> Vec<SftRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_toxic = (n as f64 * toxic_fraction).round() as usize;
    let mut labels: Vec<ToxicityClass> = (0..n)
        .map(|i| if i < n_toxic { ToxicityClass::Toxic } else { ToxicityClass::NonToxic })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let subject = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
            let remark = NEUTRAL[rng.gen_range(0..NEUTRAL.len())];
            let (text, annotation) = if label.is_toxic() {
                let insult = INSULTS[rng.gen_range(0..INSULTS.len())];
                let attack = ATTACKS[rng.gen_range(0..ATTACKS.len())];
                let text = if rng.gen_bool(0.5) {
                    format!("{subject} {remark}, {attack} {insult} !")
                } else {
                    format!("{attack} {insult}, {subject} {remark}.")
                };
                let severity = rng.gen_range(1..=3u8);
                let mut v = [0u8; 6];
                v[1] = severity;
                v[0] = rng.gen_range(0..=1);
                let a = CotAnnotation {
                    summary: format!("L'auteur parle de {subject} et insulte son interlocuteur."),
                    tones: vec![
                        Tone { name: "Agressif".into(), confidence: rng.gen_range(60..=95) },
                        Tone { name: "Méprisant".into(), confidence: rng.gen_range(30..=70) },
                    ],
                    taxonomy: Some(vector(v)),
                    implicit: Vec::new(),
                    doubts: "Aucun doute sur l'insulte directe.".into(),
                    score: rng.gen_range(6..=9),
                    justification: format!("Le mot « {insult} » vise directement une personne."),
                    decision: label,
                    raw_steps: Vec::new(),
                };
                (text, a)
            } else {
                let text = if rng.gen_bool(0.5) {
                    format!("{subject} {remark}.")
                } else {
                    let other = NEUTRAL[rng.gen_range(0..NEUTRAL.len())];
                    format!("{subject} {remark}, et {other}.")
                };
                let a = CotAnnotation {
                    summary: format!("L'auteur donne son avis sur {subject}."),
                    tones: vec![Tone { name: "Neutre".into(), confidence: rng.gen_range(60..=95) }],
                    taxonomy: Some(ToxicityVector::CLEAR),
                    implicit: if rng.gen_bool(0.1) { vec![ImplicitCategory::ALL[0]] } else { Vec::new() },
                    doubts: "Le ton pourrait paraître sec.".into(),
                    score: rng.gen_range(0..=3),
                    justification: "Aucune attaque ni propos haineux.".into(),
                    decision: label,
                    raw_steps: Vec::new(),
                };
                (text, a)
            };
            SftRecord { id: format!("syn-{i:04}"), text, label, annotation: Some(annotation) }
        })
        .collect()
}

fn vector(v: [u8; 6]) -> ToxicityVector {
    toxi_core::taxonomy::validate_vector(v.map(i64::from)).expect("synthetic vector in range")
}
