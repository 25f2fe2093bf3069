//! Benchmark evaluation: ICL prompts, model adapters, cached runs, result
//! tables, misclassification listings and cross-lingual subsets.

pub mod adapter;
pub mod misclass;
pub mod prompt;
pub mod report;
pub mod run;
pub mod translate;

pub use adapter::{
    AdapterError, AdapterKind, AdapterOutput, ChatAdapter, CheckpointAdapter, ConstantAdapter, EvalInput,
    ModelAdapter, ModerationAdapter, ModerationScorer, OpenAiModeration, OracleAdapter,
};
pub use misclass::{misclassification_report, MisclassificationReport, Misclassified, FN_HEADING, FP_HEADING};
pub use prompt::{build_icl_prompt, select_exemplars, Exemplar, PromptConfig, PromptError, PromptMode, ICL_PROMPT_VERSION};
pub use report::{render_results, results_table, row_label, RESULT_HEADERS};
pub use run::{assemble, cache_key, run_benchmark, BenchItem, EvalError, EvalItem, EvalResult, InvalidPolicy, RunSpec, RunStats};
pub use translate::{looks_like_target, translate_subset, translation_prompt, Direction, TranslatedItem, TranslationOutcome};
