//! French prompt assets for the six-step annotation chain.
//!
//! Every step prompt carries the toxicity definition, the comment and the
//! completions of all earlier steps, so the model always sees its own
//! reasoning so far.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::taxonomy::ImplicitCategory;

/// Bumped whenever any template text below changes.
pub const PROMPT_VERSION: &str = "cot-fr-v1";

/// Toxicity definition given to every annotating or evaluated model.
pub const TOXICITY_DEFINITION: &str = "Un contenu est toxique lorsque des personnes ou des groupes peuvent le juger blessant, déplacé ou offensant, et en être touchés sur le plan émotionnel ou psychologique. Cela recouvre notamment le discours de haine, le contenu sexuel explicite, les remarques dénigrantes, le langage déshumanisant, les menaces et toute expression qui entretient un climat hostile, dans le but de mettre le lecteur mal à l'aise, de l'exclure ou de l'insécuriser.";

pub const CONCLUSION_QUESTION: &str = "En conclusion, ce message est-il toxique ?";
pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

pub const LABEL_SUMMARY: &str = "Résumé";
pub const LABEL_TONES: &str = "Tons identifiés";
pub const LABEL_VECTOR: &str = "Vecteur de toxicité (S,H,V,R,A,I)";
pub const LABEL_IMPLICIT: &str = "Catégories implicites";
pub const LABEL_DOUBTS: &str = "Doutes";
pub const LABEL_SCORE: &str = "Score de toxicité";
pub const LABEL_JUSTIFICATION: &str = "Justification";

const TAXONOMY_FR: &str = "\
- S (sexuel) : 0 aucune allusion, 1 référence neutre, 2 contenu érotique ou explicite, 3 actes sexuels illégaux ou immoraux
- H (haine) : 0 aucune référence identitaire, 1 référence neutre à une identité, 2 discours stéréotypé ou méprisant envers une identité, 3 haine explicite ou appel à la violence contre un groupe
- V (violence) : 0 aucune, 1 référence neutre, 2 menace, incitation ou glorification, 3 description crue d'actes violents
- R (registre) : 0 aucun sujet sensible, 1 humour noir, satire ou tabou, 2 religion ou croyances, 3 complotisme ou extrémisme
- A (agressivité) : 0 aucune, 1 vulgarité, sarcasme ou moquerie légère, 2 ton hautain ou méprisant, 3 déshumanisation ou harcèlement ciblé
- I (intention) : 0 neutre ou factuelle, 1 dérision légère, 2 ambiguë ou volontairement choquante, 3 volonté claire de nuire";

/// The six chain steps in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStep {
    Summary,
    Tones,
    Taxonomy,
    ImplicitCategories,
    Doubts,
    Verdict,
}

impl ChainStep {
    pub const ALL: [ChainStep; 6] = [
        ChainStep::Summary,
        ChainStep::Tones,
        ChainStep::Taxonomy,
        ChainStep::ImplicitCategories,
        ChainStep::Doubts,
        ChainStep::Verdict,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ChainStep::Summary => LABEL_SUMMARY,
            ChainStep::Tones => LABEL_TONES,
            ChainStep::Taxonomy => LABEL_VECTOR,
            ChainStep::ImplicitCategories => LABEL_IMPLICIT,
            ChainStep::Doubts => LABEL_DOUBTS,
            ChainStep::Verdict => "Verdict",
        }
    }

    fn instruction(self) -> String {
        match self {
            ChainStep::Summary => format!(
                "Résume le message en une ou deux phrases neutres : de quoi parle l'auteur et à qui s'adresse-t-il ? Réponds sous la forme « {LABEL_SUMMARY} : ... »."
            ),
            ChainStep::Tones => format!(
                "Identifie les tons du message avec un pourcentage de confiance pour chacun. Réponds sous la forme « {LABEL_TONES} : Ton1 (80%), Ton2 (60%) »."
            ),
            ChainStep::Taxonomy => format!(
                "Évalue chaque dimension de la grille suivante sur une échelle de 0 à 3 :\n{TAXONOMY_FR}\nRéponds sous la forme « {LABEL_VECTOR} : (S,H,V,R,A,I) » avec six entiers."
            ),
            ChainStep::ImplicitCategories => {
                let mut s = String::from(
                    "Indique quelles stratégies de toxicité implicite sont présentes parmi la liste suivante, ou « aucune » :\n",
                );
                for c in ImplicitCategory::ALL {
                    let _ = writeln!(s, "- {} : {}", c.label_fr(), c.gloss_fr());
                }
                let _ = write!(s, "Réponds sous la forme « {LABEL_IMPLICIT} : Catégorie1, Catégorie2 ».");
                s
            }
            ChainStep::Doubts => format!(
                "Exprime les doutes ou interprétations alternatives qui pourraient changer ton jugement. Réponds sous la forme « {LABEL_DOUBTS} : ... »."
            ),
            ChainStep::Verdict => format!(
                "Attribue un score de toxicité entier de 0 à 10, justifie-le, puis conclus par oui ou non. Réponds exactement sous la forme :\n{LABEL_SCORE} : N/10\n{LABEL_JUSTIFICATION} : ...\n{CONCLUSION_QUESTION}\noui|non"
            ),
        }
    }
}

/// The ordered prompt chain for one comment.
#[derive(Debug, Clone)]
pub struct CotChain {
    comment: String,
}

/// Builds the six-step chain for `comment_text`.
pub fn build_cot_chain(comment_text: &str) -> CotChain {
    CotChain {
        comment: comment_text.to_string(),
    }
}

impl CotChain {
    pub fn steps(&self) -> &'static [ChainStep; 6] {
        &ChainStep::ALL
    }

    /// Prompt for step `index` (0-based). `previous` holds the completions of
    /// steps `0..index`, which are embedded verbatim in order.
    pub fn prompt(&self, index: usize, previous: &[String]) -> String {
        assert!(index < ChainStep::ALL.len(), "chain has six steps");
        assert_eq!(previous.len(), index, "step {index} needs exactly {index} prior completions");
        let step = ChainStep::ALL[index];
        let mut p = String::new();
        let _ = writeln!(
            p,
            "Tu es un annotateur expert en modération de contenus francophones.\nDéfinition de la toxicité : {TOXICITY_DEFINITION}\n"
        );
        let _ = writeln!(p, "Message à analyser :\n« {} »\n", self.comment);
        if !previous.is_empty() {
            let _ = writeln!(p, "Raisonnement précédent :");
            for (s, completion) in ChainStep::ALL.iter().zip(previous) {
                let _ = writeln!(p, "[{}]\n{}", s.title(), completion);
            }
            p.push('\n');
        }
        let _ = write!(
            p,
            "Étape {}/{} ({}) : {}",
            index + 1,
            ChainStep::ALL.len(),
            step.title(),
            step.instruction()
        );
        p
    }
}

/// Hex SHA-256 of the full template set, so results can cite the exact
/// prompt assets they were produced with.
pub fn prompt_set_hash() -> String {
    let mut h = Sha256::new();
    h.update(PROMPT_VERSION);
    h.update(TOXICITY_DEFINITION);
    for step in ChainStep::ALL {
        h.update(step.instruction());
    }
    hex::encode(h.finalize())
}
