//! Shared domain vocabulary.
//!
//! Every enum here serializes to a lower_snake_case name; those names are the
//! canonical spelling used by the JSONL files, the HTTP API and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::fold;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("experiment code must be 3 characters, got {0}")]
    CodeLength(usize),
    #[error("invalid experiment code letter {found:?} at position {position} (expected one of {expected})")]
    CodeLetter {
        /// 1-based position of the offending letter.
        position: usize,
        found: char,
        expected: &'static str,
    },
    #[error("unknown implicit-toxicity category {0:?}")]
    UnknownCategory(String),
    #[error("unknown value {value:?} for {kind}")]
    UnknownValue { kind: &'static str, value: String },
    #[error("auto_rule labels can only be non_toxic")]
    AutoRuleToxic,
}

/// Binary toxicity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToxicityClass {
    NonToxic,
    Toxic,
}

impl ToxicityClass {
    pub const ALL: [ToxicityClass; 2] = [ToxicityClass::NonToxic, ToxicityClass::Toxic];

    pub fn as_str(self) -> &'static str {
        match self {
            ToxicityClass::Toxic => "toxic",
            ToxicityClass::NonToxic => "non_toxic",
        }
    }

    pub fn is_toxic(self) -> bool {
        self == ToxicityClass::Toxic
    }

    /// Canonical French answer token used at the end of a CoT.
    pub fn answer_fr(self) -> &'static str {
        match self {
            ToxicityClass::Toxic => "oui",
            ToxicityClass::NonToxic => "non",
        }
    }
}

impl fmt::Display for ToxicityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToxicityClass {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "toxic" => Ok(ToxicityClass::Toxic),
            "non_toxic" => Ok(ToxicityClass::NonToxic),
            other => Err(TaxonomyError::UnknownValue {
                kind: "toxicity class",
                value: other.to_string(),
            }),
        }
    }
}

/// Where a final label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AutoRule,
    Human,
    WeakSignal,
}

/// A binary label together with its provenance.
///
/// The auto-label rule only ever produces `non_toxic`, so a `Label` with
/// provenance [`Provenance::AutoRule`] and class `toxic` cannot be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLabel")]
pub struct Label {
    value: ToxicityClass,
    provenance: Provenance,
}

#[derive(Deserialize)]
struct RawLabel {
    value: ToxicityClass,
    provenance: Provenance,
}

impl TryFrom<RawLabel> for Label {
    type Error = TaxonomyError;

    fn try_from(raw: RawLabel) -> Result<Self, Self::Error> {
        Label::new(raw.value, raw.provenance)
    }
}

impl Label {
    pub fn new(value: ToxicityClass, provenance: Provenance) -> Result<Self, TaxonomyError> {
        if provenance == Provenance::AutoRule && value == ToxicityClass::Toxic {
            return Err(TaxonomyError::AutoRuleToxic);
        }
        Ok(Label { value, provenance })
    }

    pub fn auto_non_toxic() -> Self {
        Label {
            value: ToxicityClass::NonToxic,
            provenance: Provenance::AutoRule,
        }
    }

    pub fn human(value: ToxicityClass) -> Self {
        Label {
            value,
            provenance: Provenance::Human,
        }
    }

    pub fn value(&self) -> ToxicityClass {
        self.value
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// Annotator response scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourWayDecision {
    Yes,
    MaybeYes,
    MaybeNo,
    No,
}

impl FourWayDecision {
    pub const ALL: [FourWayDecision; 4] = [
        FourWayDecision::Yes,
        FourWayDecision::MaybeYes,
        FourWayDecision::MaybeNo,
        FourWayDecision::No,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FourWayDecision::Yes => "yes",
            FourWayDecision::MaybeYes => "maybe_yes",
            FourWayDecision::MaybeNo => "maybe_no",
            FourWayDecision::No => "no",
        }
    }

    pub fn is_grouped_yes(self) -> bool {
        matches!(self, FourWayDecision::Yes | FourWayDecision::MaybeYes)
    }

    pub fn is_grouped_no(self) -> bool {
        !self.is_grouped_yes()
    }

    /// Binary class on the side the annotator leans towards.
    pub fn grouped(self) -> ToxicityClass {
        if self.is_grouped_yes() {
            ToxicityClass::Toxic
        } else {
            ToxicityClass::NonToxic
        }
    }
}

impl FromStr for FourWayDecision {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FourWayDecision::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| TaxonomyError::UnknownValue {
                kind: "four-way decision",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for FourWayDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Final human label for a single four-way response.
pub fn map_four_way_to_binary(decision: FourWayDecision) -> Label {
    Label::human(decision.grouped())
}

/// One axis of the severity vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    #[serde(rename = "S")]
    Sexual,
    #[serde(rename = "H")]
    Hatred,
    #[serde(rename = "V")]
    Violence,
    #[serde(rename = "R")]
    Register,
    #[serde(rename = "A")]
    Aggressivity,
    #[serde(rename = "I")]
    Intent,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Sexual,
        Dimension::Hatred,
        Dimension::Violence,
        Dimension::Register,
        Dimension::Aggressivity,
        Dimension::Intent,
    ];

    pub fn letter(self) -> char {
        match self {
            Dimension::Sexual => 'S',
            Dimension::Hatred => 'H',
            Dimension::Violence => 'V',
            Dimension::Register => 'R',
            Dimension::Aggressivity => 'A',
            Dimension::Intent => 'I',
        }
    }
}

pub const MAX_SEVERITY: u8 = 3;

/// Six-dimension severity vector (S, H, V, R, A, I), each component 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "[i64; 6]", into = "[u8; 6]")]
pub struct ToxicityVector([u8; 6]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("severity {value} on dimension {} is outside 0..=3", dimension.letter())]
pub struct Violation {
    pub dimension: Dimension,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid toxicity vector: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct VectorViolations(pub Vec<Violation>);

/// Accepts exactly the 4^6 lattice points; reports every out-of-range
/// dimension otherwise.
pub fn validate_vector(components: [i64; 6]) -> Result<ToxicityVector, VectorViolations> {
    let violations: Vec<Violation> = Dimension::ALL
        .iter()
        .zip(components)
        .filter(|(_, v)| !(0..=MAX_SEVERITY as i64).contains(v))
        .map(|(d, v)| Violation {
            dimension: *d,
            value: v,
        })
        .collect();
    if !violations.is_empty() {
        return Err(VectorViolations(violations));
    }
    let mut out = [0u8; 6];
    for (slot, v) in out.iter_mut().zip(components) {
        *slot = v as u8;
    }
    Ok(ToxicityVector(out))
}

impl TryFrom<[i64; 6]> for ToxicityVector {
    type Error = VectorViolations;

    fn try_from(value: [i64; 6]) -> Result<Self, Self::Error> {
        validate_vector(value)
    }
}

impl From<ToxicityVector> for [u8; 6] {
    fn from(v: ToxicityVector) -> Self {
        v.0
    }
}

impl ToxicityVector {
    pub const CLEAR: ToxicityVector = ToxicityVector([0; 6]);

    pub fn get(&self, dimension: Dimension) -> u8 {
        self.0[dimension as usize]
    }

    pub fn components(&self) -> [u8; 6] {
        self.0
    }

    /// The all-zero vector is the only "clear non-toxic" point.
    pub fn is_clear(&self) -> bool {
        self.0 == [0; 6]
    }
}

impl fmt::Display for ToxicityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.0;
        write!(f, "({},{},{},{},{},{})", c[0], c[1], c[2], c[3], c[4], c[5])
    }
}

/// Rhetorical strategies that carry toxicity implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitCategory {
    ExplicitCriticism,
    QuotingWithoutEndorsement,
    AmbiguousMention,
    QuotingWithEndorsement,
    WeaponizedHumor,
    DeceptiveBenevolence,
    Microaggression,
    DogWhistle,
    PseudoRationalManipulation,
    UnresolvableAmbiguity,
    ToxicInversion,
    ToxicMisrepresentation,
    Normalization,
    PassiveMockery,
    VisualToxicity,
}

impl ImplicitCategory {
    pub const ALL: [ImplicitCategory; 15] = [
        ImplicitCategory::ExplicitCriticism,
        ImplicitCategory::QuotingWithoutEndorsement,
        ImplicitCategory::AmbiguousMention,
        ImplicitCategory::QuotingWithEndorsement,
        ImplicitCategory::WeaponizedHumor,
        ImplicitCategory::DeceptiveBenevolence,
        ImplicitCategory::Microaggression,
        ImplicitCategory::DogWhistle,
        ImplicitCategory::PseudoRationalManipulation,
        ImplicitCategory::UnresolvableAmbiguity,
        ImplicitCategory::ToxicInversion,
        ImplicitCategory::ToxicMisrepresentation,
        ImplicitCategory::Normalization,
        ImplicitCategory::PassiveMockery,
        ImplicitCategory::VisualToxicity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImplicitCategory::ExplicitCriticism => "explicit_criticism",
            ImplicitCategory::QuotingWithoutEndorsement => "quoting_without_endorsement",
            ImplicitCategory::AmbiguousMention => "ambiguous_mention",
            ImplicitCategory::QuotingWithEndorsement => "quoting_with_endorsement",
            ImplicitCategory::WeaponizedHumor => "weaponized_humor",
            ImplicitCategory::DeceptiveBenevolence => "deceptive_benevolence",
            ImplicitCategory::Microaggression => "microaggression",
            ImplicitCategory::DogWhistle => "dog_whistle",
            ImplicitCategory::PseudoRationalManipulation => "pseudo_rational_manipulation",
            ImplicitCategory::UnresolvableAmbiguity => "unresolvable_ambiguity",
            ImplicitCategory::ToxicInversion => "toxic_inversion",
            ImplicitCategory::ToxicMisrepresentation => "toxic_misrepresentation",
            ImplicitCategory::Normalization => "normalization",
            ImplicitCategory::PassiveMockery => "passive_mockery",
            ImplicitCategory::VisualToxicity => "visual_toxicity",
        }
    }

    /// French display name used inside the annotation prompts and CoT text.
    pub fn label_fr(self) -> &'static str {
        match self {
            ImplicitCategory::ExplicitCriticism => "Critique explicite d'une idée toxique",
            ImplicitCategory::QuotingWithoutEndorsement => "Citation sans adhésion",
            ImplicitCategory::AmbiguousMention => "Mention ambiguë",
            ImplicitCategory::QuotingWithEndorsement => "Citation avec adhésion",
            ImplicitCategory::WeaponizedHumor => "Humour instrumentalisé",
            ImplicitCategory::DeceptiveBenevolence => "Bienveillance trompeuse",
            ImplicitCategory::Microaggression => "Microagression",
            ImplicitCategory::DogWhistle => "Dog-whistle",
            ImplicitCategory::PseudoRationalManipulation => "Manipulation pseudo-rationnelle",
            ImplicitCategory::UnresolvableAmbiguity => "Ambiguïté irréductible",
            ImplicitCategory::ToxicInversion => "Inversion toxique",
            ImplicitCategory::ToxicMisrepresentation => "Caricature (homme de paille)",
            ImplicitCategory::Normalization => "Normalisation d'une idée toxique",
            ImplicitCategory::PassiveMockery => "Moquerie passive",
            ImplicitCategory::VisualToxicity => "Toxicité visuelle",
        }
    }

    /// Short French gloss shown to the annotating model.
    pub fn gloss_fr(self) -> &'static str {
        match self {
            ImplicitCategory::ExplicitCriticism => "l'auteur rejette clairement une idée toxique",
            ImplicitCategory::QuotingWithoutEndorsement => {
                "l'auteur rapporte un propos problématique sans l'approuver"
            }
            ImplicitCategory::AmbiguousMention => {
                "l'auteur rapporte un propos problématique sans position claire"
            }
            ImplicitCategory::QuotingWithEndorsement => {
                "l'auteur rapporte un propos toxique en l'approuvant"
            }
            ImplicitCategory::WeaponizedHumor => {
                "l'humour ou l'ironie porte un message haineux sans marqueur satirique"
            }
            ImplicitCategory::DeceptiveBenevolence => {
                "une idée haineuse est présentée sous une forme polie ou bienveillante"
            }
            ImplicitCategory::Microaggression => {
                "un propos en apparence neutre qui stigmatise ou rabaisse"
            }
            ImplicitCategory::DogWhistle => {
                "langage codé compris par un groupe initié pour véhiculer une idéologie haineuse"
            }
            ImplicitCategory::PseudoRationalManipulation => {
                "une apparence de rigueur logique sert à normaliser une position toxique"
            }
            ImplicitCategory::UnresolvableAmbiguity => {
                "message trop vague pour en déterminer la cible ou l'intention"
            }
            ImplicitCategory::ToxicInversion => {
                "inversion des rôles d'oppresseur et d'opprimé pour nier une discrimination"
            }
            ImplicitCategory::ToxicMisrepresentation => {
                "la position adverse est exagérée pour la discréditer"
            }
            ImplicitCategory::Normalization => {
                "une idée violente ou stigmatisante est présentée comme normale"
            }
            ImplicitCategory::PassiveMockery => {
                "répétition moqueuse qui propage un discours toxique"
            }
            ImplicitCategory::VisualToxicity => {
                "emojis, memes ou formats visuels à connotation dégradante"
            }
        }
    }

    /// Looks a category up by canonical name or French label, ignoring case
    /// and accents.
    pub fn from_label(s: &str) -> Result<Self, TaxonomyError> {
        let key = fold(s.trim());
        ImplicitCategory::ALL
            .into_iter()
            .find(|c| fold(c.as_str()) == key || fold(c.label_fr()) == key)
            .ok_or_else(|| TaxonomyError::UnknownCategory(s.to_string()))
    }
}

impl fmt::Display for ImplicitCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataOrdering {
    Random,
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassBalance {
    Imbalanced,
    Oversampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainTarget {
    Cot,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    DynamicWeighted,
    Standard,
}

/// The three experiment axes, written as a code such as `rec` or `odb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExperimentCode {
    pub ordering: DataOrdering,
    pub balance: ClassBalance,
    pub target: TrainTarget,
}

impl ExperimentCode {
    pub fn all() -> impl Iterator<Item = ExperimentCode> {
        [DataOrdering::Random, DataOrdering::Ordered]
            .into_iter()
            .flat_map(|ordering| {
                [ClassBalance::Imbalanced, ClassBalance::Oversampled]
                    .into_iter()
                    .flat_map(move |balance| {
                        [TrainTarget::Cot, TrainTarget::Binary]
                            .into_iter()
                            .map(move |target| ExperimentCode {
                                ordering,
                                balance,
                                target,
                            })
                    })
            })
    }
}

impl FromStr for ExperimentCode {
    type Err = TaxonomyError;

    fn from_str(code: &str) -> Result<Self, Self::Err> {
        let letters: Vec<char> = code.chars().collect();
        if letters.len() != 3 {
            return Err(TaxonomyError::CodeLength(letters.len()));
        }
        let bad = |position: usize, expected: &'static str| TaxonomyError::CodeLetter {
            position,
            found: letters[position - 1],
            expected,
        };
        let ordering = match letters[0] {
            'r' => DataOrdering::Random,
            'o' => DataOrdering::Ordered,
            _ => return Err(bad(1, "r, o")),
        };
        let balance = match letters[1] {
            'd' => ClassBalance::Imbalanced,
            'e' => ClassBalance::Oversampled,
            _ => return Err(bad(2, "d, e")),
        };
        let target = match letters[2] {
            'c' => TrainTarget::Cot,
            'b' => TrainTarget::Binary,
            _ => return Err(bad(3, "c, b")),
        };
        Ok(ExperimentCode {
            ordering,
            balance,
            target,
        })
    }
}

impl fmt::Display for ExperimentCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.ordering {
            DataOrdering::Random => 'r',
            DataOrdering::Ordered => 'o',
        };
        let b = match self.balance {
            ClassBalance::Imbalanced => 'd',
            ClassBalance::Oversampled => 'e',
        };
        let t = match self.target {
            TrainTarget::Cot => 'c',
            TrainTarget::Binary => 'b',
        };
        write!(f, "{o}{b}{t}")
    }
}

impl Serialize for ExperimentCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExperimentCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_experiment_code(code: &str) -> Result<ExperimentConfig, TaxonomyError> {
    Ok(ExperimentConfig::from_code(code.parse()?))
}

/// Fine-tuning configuration: the three code axes plus optimizer, loss mode
/// and the dynamic-loss weight schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub code: ExperimentCode,
    pub optimizer: String,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub lambda_init: (f64, f64),
    pub lambda_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::from_code(ExperimentCode {
            ordering: DataOrdering::Random,
            balance: ClassBalance::Oversampled,
            target: TrainTarget::Cot,
        })
    }
}

impl ExperimentConfig {
    pub fn from_code(code: ExperimentCode) -> Self {
        ExperimentConfig {
            code,
            optimizer: "adam".to_string(),
            loss_mode: LossMode::DynamicWeighted,
            seed: 0,
            lambda_init: (1.0, 1.0),
            lambda_ratio: 2.0,
        }
    }

    /// Weight schedule parameters, or `None` in standard-loss mode where
    /// they do not apply.
    pub fn lambda(&self) -> Option<((f64, f64), f64)> {
        match self.loss_mode {
            LossMode::DynamicWeighted => Some((self.lambda_init, self.lambda_ratio)),
            LossMode::Standard => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clear_vector_is_valid() {
        let v = validate_vector([0, 0, 0, 0, 0, 0]).unwrap();
        assert!(v.is_clear());
        assert_eq!(v, ToxicityVector::CLEAR);
    }

    #[test]
    fn mixed_vector_is_valid() {
        let v = validate_vector([1, 3, 0, 0, 2, 3]).unwrap();
        assert_eq!(v.components(), [1, 3, 0, 0, 2, 3]);
        assert_eq!(v.get(Dimension::Aggressivity), 2);
        assert!(!v.is_clear());
    }

    #[test]
    fn out_of_range_names_dimension() {
        let err = validate_vector([0, 4, 0, 0, 0, 0]).unwrap_err();
        assert_eq!(
            err.0,
            vec![Violation {
                dimension: Dimension::Hatred,
                value: 4
            }]
        );
        let err = validate_vector([-1, 0, 0, 9, 0, 0]).unwrap_err();
        let dims: Vec<_> = err.0.iter().map(|v| v.dimension).collect();
        assert_eq!(dims, vec![Dimension::Sexual, Dimension::Register]);
    }

    #[test]
    fn vector_serde_rejects_out_of_range() {
        let v: ToxicityVector = serde_json::from_str("[1,3,0,0,2,3]").unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "[1,3,0,0,2,3]");
        assert!(serde_json::from_str::<ToxicityVector>("[0,4,0,0,0,0]").is_err());
    }

    #[test]
    fn experiment_codes_from_examples() {
        let odc: ExperimentCode = "odc".parse().unwrap();
        assert_eq!(odc.ordering, DataOrdering::Ordered);
        assert_eq!(odc.balance, ClassBalance::Imbalanced);
        assert_eq!(odc.target, TrainTarget::Cot);

        let rec = parse_experiment_code("rec").unwrap();
        assert_eq!(rec.code.ordering, DataOrdering::Random);
        assert_eq!(rec.code.balance, ClassBalance::Oversampled);
        assert_eq!(rec.code.target, TrainTarget::Cot);
    }

    #[test]
    fn bad_codes_name_position() {
        assert_eq!(
            "xec".parse::<ExperimentCode>().unwrap_err(),
            TaxonomyError::CodeLetter {
                position: 1,
                found: 'x',
                expected: "r, o"
            }
        );
        assert!(matches!(
            "rxc".parse::<ExperimentCode>(),
            Err(TaxonomyError::CodeLetter { position: 2, .. })
        ));
        assert!(matches!(
            "rez".parse::<ExperimentCode>(),
            Err(TaxonomyError::CodeLetter { position: 3, .. })
        ));
        assert_eq!(
            "reco".parse::<ExperimentCode>().unwrap_err(),
            TaxonomyError::CodeLength(4)
        );
        assert_eq!("".parse::<ExperimentCode>().unwrap_err(), TaxonomyError::CodeLength(0));
    }

    #[test]
    fn every_code_round_trips() {
        let codes: Vec<_> = ExperimentCode::all().collect();
        assert_eq!(codes.len(), 8);
        for code in codes {
            let text = code.to_string();
            assert_eq!(text.parse::<ExperimentCode>().unwrap(), code);
            assert_eq!(text.parse::<ExperimentCode>().unwrap().to_string(), text);
        }
    }

    #[test]
    fn lambda_ignored_in_standard_mode() {
        let mut cfg = parse_experiment_code("rec").unwrap();
        assert_eq!(cfg.lambda(), Some(((1.0, 1.0), 2.0)));
        cfg.loss_mode = LossMode::Standard;
        assert_eq!(cfg.lambda(), None);
    }

    #[test]
    fn four_way_mapping() {
        use FourWayDecision::*;
        assert_eq!(map_four_way_to_binary(Yes).value(), ToxicityClass::Toxic);
        assert_eq!(map_four_way_to_binary(MaybeYes).value(), ToxicityClass::Toxic);
        assert_eq!(map_four_way_to_binary(MaybeNo).value(), ToxicityClass::NonToxic);
        assert_eq!(map_four_way_to_binary(No).value(), ToxicityClass::NonToxic);
        for d in FourWayDecision::ALL {
            assert_eq!(map_four_way_to_binary(d).provenance(), Provenance::Human);
            assert_ne!(d.is_grouped_yes(), d.is_grouped_no());
        }
        let image: std::collections::HashSet<_> = FourWayDecision::ALL
            .into_iter()
            .map(|d| map_four_way_to_binary(d).value())
            .collect();
        assert_eq!(image.len(), 2);
    }

    #[test]
    fn auto_rule_cannot_be_toxic() {
        assert_eq!(
            Label::new(ToxicityClass::Toxic, Provenance::AutoRule),
            Err(TaxonomyError::AutoRuleToxic)
        );
        let json = r#"{"value":"toxic","provenance":"auto_rule"}"#;
        assert!(serde_json::from_str::<Label>(json).is_err());
        let ok: Label = serde_json::from_str(r#"{"value":"non_toxic","provenance":"auto_rule"}"#).unwrap();
        assert_eq!(ok, Label::auto_non_toxic());
    }

    #[test]
    fn implicit_categories_closed_set() {
        assert_eq!(ImplicitCategory::ALL.len(), 15);
        let names: std::collections::HashSet<_> =
            ImplicitCategory::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(names.len(), 15);
        for c in ImplicitCategory::ALL {
            assert_eq!(ImplicitCategory::from_label(c.as_str()).unwrap(), c);
            assert_eq!(ImplicitCategory::from_label(c.label_fr()).unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert_eq!(
            ImplicitCategory::from_label("MICROAGRESSION").unwrap(),
            ImplicitCategory::Microaggression
        );
        assert!(ImplicitCategory::from_label("sarcasme").is_err());
    }

    #[test]
    fn canonical_enum_names() {
        assert_eq!(serde_json::to_string(&ToxicityClass::NonToxic).unwrap(), "\"non_toxic\"");
        assert_eq!(serde_json::to_string(&FourWayDecision::MaybeYes).unwrap(), "\"maybe_yes\"");
        assert_eq!(serde_json::to_string(&Provenance::AutoRule).unwrap(), "\"auto_rule\"");
        assert_eq!(serde_json::to_string(&LossMode::DynamicWeighted).unwrap(), "\"dynamic_weighted\"");
    }

    proptest! {
        #[test]
        fn validate_accepts_exactly_the_lattice(c in proptest::array::uniform6(-3i64..7)) {
            let in_range = c.iter().all(|v| (0..=3).contains(v));
            let result = validate_vector(c);
            prop_assert_eq!(result.is_ok(), in_range);
            if let Err(v) = result {
                let expected = c.iter().filter(|v| !(0..=3).contains(*v)).count();
                prop_assert_eq!(v.0.len(), expected);
            }
        }
    }
}
