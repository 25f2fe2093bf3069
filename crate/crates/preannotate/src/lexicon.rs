//! Offline stand-in for an LLM endpoint, driven by a small insult lexicon.
//!
//! It recognises chain-step prompts and answers each step in the canonical
//! labeled format; any other prompt gets a bare `Oui.` / `Non.`.

use std::sync::OnceLock;

use regex::Regex;
use toxi_core::cot::prompts::{
    CONCLUSION_QUESTION, LABEL_DOUBTS, LABEL_IMPLICIT, LABEL_JUSTIFICATION, LABEL_SCORE,
    LABEL_SUMMARY, LABEL_TONES, LABEL_VECTOR,
};
use toxi_core::text::fold;

use crate::client::{ChatClient, ChatRequest, ClientError};

const DEFAULT_LEXICON: &[&str] = &[
    "connard", "conne", "debile", "idiot", "cretin", "abruti", "ordure", "salope", "batard",
    "encule", "degage", "creve", "nazi", "gueule", "stupide", "minable", "raclure", "dechet",
    "vermine", "parasite", "tuer", "pourriture", "sous-homme", "merde",
];

#[derive(Debug, Clone)]
pub struct LexiconClient {
    words: Vec<String>,
}

impl Default for LexiconClient {
    fn default() -> Self {
        LexiconClient::new(DEFAULT_LEXICON.iter().copied())
    }
}

/// The comment quoted in a prompt: the chain's « … » block, else the last
/// guillemet-quoted span, else the whole prompt.
pub fn extract_comment(prompt: &str) -> &str {
    const CHAIN_MARKER: &str = "Message à analyser :\n« ";
    if let Some(start) = prompt.find(CHAIN_MARKER).map(|i| i + CHAIN_MARKER.len()) {
        if let Some(len) = prompt[start..].find(" »\n") {
            return &prompt[start..start + len];
        }
    }
    if let Some(open) = prompt.rfind('«') {
        let start = open + '«'.len_utf8();
        if let Some(len) = prompt[start..].find('»') {
            return prompt[start..start + len].trim();
        }
    }
    prompt
}

fn step_index(prompt: &str) -> Option<usize> {
    static R: OnceLock<Regex> = OnceLock::new();
    let r = R.get_or_init(|| Regex::new(r"Étape ([1-6])/6").unwrap());
    r.captures_iter(prompt)
        .last()
        .and_then(|c| c[1].parse::<usize>().ok())
}

impl LexiconClient {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        LexiconClient { words: words.into_iter().map(fold).collect() }
    }

    /// Number of lexicon entries occurring as whole tokens of `text`.
    pub fn hits(&self, text: &str) -> usize {
        let folded = fold(text);
        let tokens: Vec<&str> = folded
            .split(|c: char| !(c.is_alphanumeric() || c == '-'))
            .filter(|t| !t.is_empty())
            .collect();
        self.words
            .iter()
            .filter(|w| tokens.iter().any(|t| t == w || t.starts_with(w.as_str()) && t.len() <= w.len() + 1))
            .count()
    }

    pub fn score(&self, text: &str) -> u8 {
        match self.hits(text) {
            0 => 1,
            1 => 5,
            2 => 7,
            _ => 9,
        }
    }

    fn step_answer(&self, step: usize, comment: &str) -> String {
        let hits = self.hits(comment);
        let score = self.score(comment);
        let toxic = hits > 0;
        let sev = hits.min(3);
        match step {
            1 => format!(
                "{LABEL_SUMMARY} : Message de {} mots{}.",
                comment.split_whitespace().count(),
                if toxic { " contenant des termes injurieux" } else { " sans terme injurieux" }
            ),
            2 => {
                let tones = if toxic { "Agressif (80%), Méprisant (60%)" } else { "Neutre (90%)" };
                format!("{LABEL_TONES} : {tones}")
            }
            3 => format!("{LABEL_VECTOR} : (0,0,0,0,{sev},{sev})"),
            4 => format!("{LABEL_IMPLICIT} : aucune"),
            5 => format!(
                "{LABEL_DOUBTS} : {}",
                if toxic { "Le terme pourrait être employé sur le ton de la plaisanterie." } else { "Aucun doute notable." }
            ),
            _ => format!(
                "{LABEL_SCORE} : {score}/10\n{LABEL_JUSTIFICATION} : {} terme(s) du lexique détecté(s).\n{CONCLUSION_QUESTION}\n{}",
                hits,
                if toxic { "oui" } else { "non" }
            ),
        }
    }
}

impl ChatClient for LexiconClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let comment = extract_comment(&request.prompt);
        Ok(match step_index(&request.prompt) {
            Some(step) => self.step_answer(step, comment),
            None if self.hits(comment) > 0 => "Oui.".to_string(),
            None => "Non.".to_string(),
        })
    }

    fn model_id(&self) -> String {
        "lexicon-mock".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use toxi_core::cot::{build_cot_chain, parse_step_completion};
    use toxi_core::ToxicityClass;

    fn run_chain(client: &LexiconClient, text: &str) -> Vec<String> {
        let chain = build_cot_chain(text);
        let mut done = Vec::new();
        for k in 0..6 {
            let p = chain.prompt(k, &done);
            assert_eq!(extract_comment(&p), text);
            done.push(client.complete(&ChatRequest::new("x", p)).unwrap());
        }
        done
    }

    #[test]
    fn chain_answers_parse() {
        let c = LexiconClient::default();
        let a = parse_step_completion(&run_chain(&c, "Quel connard ce type, un vrai abruti")).unwrap();
        assert_eq!((a.score, a.decision), (7, ToxicityClass::Toxic));
        assert_eq!(a.taxonomy.unwrap().components(), [0, 0, 0, 0, 2, 2]);
        let a = parse_step_completion(&run_chain(&c, "Merci pour le partage, très instructif")).unwrap();
        assert_eq!((a.score, a.decision), (1, ToxicityClass::NonToxic));
    }

    #[test]
    fn plain_prompts_get_binary_answers() {
        let c = LexiconClient::default();
        let ask = |t: &str| c.complete(&ChatRequest::new("x", format!("Ce message est-il toxique ? « {t} »"))).unwrap();
        assert_eq!(ask("espèce de crétin"), "Oui.");
        assert_eq!(ask("bonne journée à tous"), "Non.");
    }

    #[test]
    fn accent_insensitive() {
        let c = LexiconClient::default();
        assert_eq!(c.hits("DÉBILE"), 1);
        assert_eq!(c.hits("débiles"), 1);
        assert_eq!(c.hits("idiotie totale"), 0);
    }
}
