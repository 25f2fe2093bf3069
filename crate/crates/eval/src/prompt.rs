//! In-context-learning prompts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toxi_core::cot::prompts::TOXICITY_DEFINITION;
use toxi_core::text::single_line;
use toxi_core::ToxicityClass;

/// Bumped whenever the wording of any prompt changes.
pub const ICL_PROMPT_VERSION: &str = "icl-v1";

const SIMPLE_INSTRUCTION: &str = "Ce message est-il toxique ? Réponds uniquement par oui ou non.";
const DETAILED_INSTRUCTION: &str =
    "Tu es un modérateur de contenus francophones. Dis si le message ci-dessous est toxique selon la définition suivante.";
const ANSWER_INSTRUCTION: &str = "Réponds uniquement par oui ou non.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("few-shot needs an even k of at least 2, got {0}")]
    OddK(usize),
    #[error("exemplar pool has {available} {class} items, {needed} needed")]
    PoolTooSmall { class: ToxicityClass, needed: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroSimple,
    ZeroDetailed,
    OneShotToxic,
    OneShotNonToxic,
    FewShot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroSimple => "zero_simple",
            PromptMode::ZeroDetailed => "zero_detailed",
            PromptMode::OneShotToxic => "one_shot_toxic",
            PromptMode::OneShotNonToxic => "one_shot_non_toxic",
            PromptMode::FewShot => "few_shot",
        }
    }
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            PromptMode::ZeroSimple,
            PromptMode::ZeroDetailed,
            PromptMode::OneShotToxic,
            PromptMode::OneShotNonToxic,
            PromptMode::FewShot,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown prompt mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: PromptMode,
    /// Exemplar count for few-shot prompts.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    4
}

impl PromptConfig {
    pub fn new(mode: PromptMode) -> Self {
        PromptConfig { mode, k: default_k(), seed: 0 }
    }

    pub fn few_shot(k: usize, seed: u64) -> Self {
        PromptConfig { mode: PromptMode::FewShot, k, seed }
    }

    /// Short label used in reports, e.g. `4-shot`.
    pub fn label(&self) -> String {
        match self.mode {
            PromptMode::ZeroSimple => "0-shot simple".into(),
            PromptMode::ZeroDetailed => "0-shot".into(),
            PromptMode::OneShotToxic => "1-shot toxic".into(),
            PromptMode::OneShotNonToxic => "1-shot non-tox.".into(),
            PromptMode::FewShot => format!("{}-shot", self.k),
        }
    }

    /// Stable digest of the prompt template and configuration.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(ICL_PROMPT_VERSION);
        h.update(SIMPLE_INSTRUCTION);
        h.update(DETAILED_INSTRUCTION);
        h.update(TOXICITY_DEFINITION);
        h.update(self.mode.as_str());
        if self.mode == PromptMode::FewShot {
            h.update(self.k.to_le_bytes());
        }
        if self.mode != PromptMode::ZeroSimple && self.mode != PromptMode::ZeroDetailed {
            h.update(self.seed.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// A labeled comment from the train split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub text: String,
    pub label: ToxicityClass,
}

fn pick<'a>(pool: &'a [Exemplar], class: ToxicityClass, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&'a Exemplar>, PromptError> {
    let mut candidates: Vec<&Exemplar> = pool.iter().filter(|e| e.label == class).collect();
    if candidates.len() < n {
        return Err(PromptError::PoolTooSmall { class, needed: n, available: candidates.len() });
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    candidates.shuffle(rng);
    candidates.truncate(n);
    Ok(candidates)
}

/// Exemplars of a configuration, in prompt order. Selection depends only on
/// the pool contents, the mode, k and the seed.
pub fn select_exemplars<'a>(cfg: &PromptConfig, pool: &'a [Exemplar]) -> Result<Vec<&'a Exemplar>, PromptError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.mode {
        PromptMode::ZeroSimple | PromptMode::ZeroDetailed => Ok(Vec::new()),
        PromptMode::OneShotToxic => pick(pool, ToxicityClass::Toxic, 1, &mut rng),
        PromptMode::OneShotNonToxic => pick(pool, ToxicityClass::NonToxic, 1, &mut rng),
        PromptMode::FewShot => {
            if cfg.k < 2 || cfg.k % 2 == 1 {
                return Err(PromptError::OddK(cfg.k));
            }
            let toxic = pick(pool, ToxicityClass::Toxic, cfg.k / 2, &mut rng)?;
            let clean = pick(pool, ToxicityClass::NonToxic, cfg.k / 2, &mut rng)?;
            Ok(toxic.into_iter().zip(clean).flat_map(|(t, c)| [t, c]).collect())
        }
    }
}

/// Full prompt for one comment. The comment to classify is always the last
/// quoted text.
pub fn build_icl_prompt(cfg: &PromptConfig, comment: &str, pool: &[Exemplar]) -> Result<String, PromptError> {
    let exemplars = select_exemplars(cfg, pool)?;
    let mut p = String::new();
    if cfg.mode == PromptMode::ZeroSimple {
        p.push_str(SIMPLE_INSTRUCTION);
        p.push('\n');
    } else {
        p.push_str(DETAILED_INSTRUCTION);
        p.push_str("\nDéfinition : ");
        p.push_str(TOXICITY_DEFINITION);
        p.push('\n');
        p.push_str(ANSWER_INSTRUCTION);
        p.push('\n');
    }
    if !exemplars.is_empty() {
        p.push_str(if exemplars.len() == 1 { "\nExemple :\n" } else { "\nExemples :\n" });
        for e in exemplars {
            p.push_str(&format!("Message : « {} »\nRéponse : {}\n", single_line(&e.text), e.label.answer_fr()));
        }
    }
    p.push_str(&format!("\nMessage : « {} »\nRéponse :", single_line(comment)));
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ToxicityClass::*;

    fn pool(toxic: usize, clean: usize) -> Vec<Exemplar> {
        (0..toxic)
            .map(|i| Exemplar { id: format!("t{i}"), text: format!("insulte {i}"), label: Toxic })
            .chain((0..clean).map(|i| Exemplar { id: format!("n{i}"), text: format!("avis {i}"), label: NonToxic }))
            .collect()
    }

    #[test]
    fn zero_shot_variants() {
        let simple = build_icl_prompt(&PromptConfig::new(PromptMode::ZeroSimple), "salut", &[]).unwrap();
        assert!(!simple.contains(TOXICITY_DEFINITION));
        assert!(simple.ends_with("« salut »\nRéponse :"));
        let detailed = build_icl_prompt(&PromptConfig::new(PromptMode::ZeroDetailed), "salut", &[]).unwrap();
        assert!(detailed.contains(TOXICITY_DEFINITION));
    }

    #[test]
    fn one_shot_uses_the_named_class() {
        let p = pool(3, 3);
        let t = build_icl_prompt(&PromptConfig::new(PromptMode::OneShotToxic), "x", &p).unwrap();
        assert!(t.contains("insulte") && !t.contains("avis") && t.contains("Réponse : oui"));
        let n = build_icl_prompt(&PromptConfig::new(PromptMode::OneShotNonToxic), "x", &p).unwrap();
        assert!(n.contains("avis") && !n.contains("insulte"));
        assert_eq!(
            build_icl_prompt(&PromptConfig::new(PromptMode::OneShotToxic), "x", &pool(0, 3)),
            Err(PromptError::PoolTooSmall { class: Toxic, needed: 1, available: 0 })
        );
    }

    #[test]
    fn few_shot_is_balanced_interleaved_and_seeded() {
        let p = pool(20, 50);
        for k in [4, 10] {
            let cfg = PromptConfig::few_shot(k, 3);
            let ex = select_exemplars(&cfg, &p).unwrap();
            assert_eq!(ex.len(), k);
            assert_eq!(ex.iter().filter(|e| e.label == Toxic).count(), k / 2);
            assert!(ex.iter().step_by(2).all(|e| e.label == Toxic));
            let again = select_exemplars(&cfg, &p).unwrap();
            assert_eq!(ex, again);
            let mut shuffled = p.clone();
            shuffled.reverse();
            assert_eq!(
                select_exemplars(&cfg, &shuffled).unwrap().iter().map(|e| &e.id).collect::<Vec<_>>(),
                ex.iter().map(|e| &e.id).collect::<Vec<_>>()
            );
        }
        assert_eq!(select_exemplars(&PromptConfig::few_shot(3, 0), &p), Err(PromptError::OddK(3)));
        assert!(matches!(
            select_exemplars(&PromptConfig::few_shot(10, 0), &pool(4, 50)),
            Err(PromptError::PoolTooSmall { needed: 5, available: 4, .. })
        ));
    }

    #[test]
    fn hashes_distinguish_configurations() {
        let a = PromptConfig::few_shot(4, 1).hash();
        assert_eq!(a, PromptConfig::few_shot(4, 1).hash());
        assert_ne!(a, PromptConfig::few_shot(10, 1).hash());
        assert_ne!(a, PromptConfig::few_shot(4, 2).hash());
        assert_eq!(
            PromptConfig { mode: PromptMode::ZeroSimple, k: 4, seed: 1 }.hash(),
            PromptConfig { mode: PromptMode::ZeroSimple, k: 10, seed: 9 }.hash()
        );
        assert_eq!("few_shot".parse::<PromptMode>(), Ok(PromptMode::FewShot));
    }
}
