use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use proptest::prelude::*;
use toxi_core::cot::{parse_decision, Decision};
use toxi_core::ToxicityClass::{self, NonToxic, Toxic};
use toxi_eval::*;
use toxi_preannotate::{ChatClient, ChatRequest, ClientError, LexiconClient, RetryPolicy};

fn bench(toxic: usize, clean: usize) -> Vec<BenchItem> {
    (0..toxic)
        .map(|i| BenchItem { id: format!("t{i:03}"), text: format!("espèce de crétin numéro {i}"), label: Toxic })
        .chain((0..clean).map(|i| BenchItem {
            id: format!("n{i:03}"),
            text: format!("merci pour le partage numéro {i}"),
            label: NonToxic,
        }))
        .collect()
}

fn pool() -> Vec<Exemplar> {
    (0..6)
        .map(|i| Exemplar {
            id: format!("p{i}"),
            text: if i % 2 == 0 { format!("t'es qu'un idiot {i}") } else { format!("bonne journée {i}") },
            label: if i % 2 == 0 { Toxic } else { NonToxic },
        })
        .collect()
}

/// Counts invocations and fails on ids listed in `fail`.
struct Counting<A> {
    inner: A,
    calls: AtomicUsize,
    fail: Mutex<Vec<String>>,
}

impl<A> Counting<A> {
    fn new(inner: A) -> Self {
        Counting { inner, calls: AtomicUsize::new(0), fail: Mutex::new(Vec::new()) }
    }
}

impl<A: ModelAdapter> ModelAdapter for Counting<A> {
    fn name(&self) -> String {
        self.inner.name()
    }
    fn kind(&self) -> AdapterKind {
        self.inner.kind()
    }
    fn uses_prompt(&self) -> bool {
        self.inner.uses_prompt()
    }
    fn invoke(&self, input: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail.lock().unwrap().iter().any(|f| f == input.id) {
            return Err(AdapterError::Client(ClientError::Transport("connection reset".into())));
        }
        self.inner.invoke(input)
    }
}

fn spec() -> RunSpec {
    RunSpec::new(PromptConfig::new(PromptMode::ZeroSimple))
}

#[test]
fn oracle_scores_perfectly() {
    let b = bench(5, 5);
    let oracle = OracleAdapter::from_items(b.iter().map(|i| (i.id.as_str(), i.label)));
    let (r, _) = run_benchmark(&oracle, &b, &pool(), &spec(), None).unwrap();
    assert_eq!(r.report.accuracy, 1.0);
    assert_eq!(r.items.len(), b.len());
    assert_eq!(r.invalid, 0);
}

#[test]
fn constant_yes_on_balanced_set() {
    let b = bench(7, 7);
    let (r, _) = run_benchmark(&ConstantAdapter(Toxic), &b, &pool(), &spec(), None).unwrap();
    assert_eq!(r.report.toxic.recall, 1.0);
    assert_eq!(r.report.accuracy, 0.5);
    assert_eq!(r.report.non_toxic.recall, 0.0);
}

#[test]
fn rerun_hits_cache_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let b = bench(4, 4);
    let adapter = Counting::new(ChatAdapter::new(LexiconClient::default(), RetryPolicy::immediate(1)));
    let cfg = RunSpec::new(PromptConfig::few_shot(4, 3));
    let (first, s1) = run_benchmark(&adapter, &b, &pool(), &cfg, Some(&cache)).unwrap();
    assert_eq!(s1.invoked, 8);
    assert_eq!(adapter.calls.load(Ordering::SeqCst), 8);
    let (second, s2) = run_benchmark(&adapter, &b, &pool(), &cfg, Some(&cache)).unwrap();
    assert_eq!(s2, RunStats { invoked: 0, cached: 8, failed: 0 });
    assert_eq!(adapter.calls.load(Ordering::SeqCst), 8);
    assert_eq!(first.to_json(), second.to_json());

    let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
    first.write(&p1).unwrap();
    second.write(&p2).unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());

    // A different prompt configuration is a different cache key.
    let other = RunSpec::new(PromptConfig::new(PromptMode::ZeroDetailed));
    let (_, s3) = run_benchmark(&adapter, &b, &pool(), &other, Some(&cache)).unwrap();
    assert_eq!(s3.invoked, 8);
}

#[test]
fn lexicon_chat_adapter_reads_the_target_comment() {
    let b = bench(3, 3);
    let adapter = ChatAdapter::new(LexiconClient::default(), RetryPolicy::immediate(1));
    for cfg in [PromptConfig::new(PromptMode::ZeroDetailed), PromptConfig::few_shot(4, 9)] {
        let (r, _) = run_benchmark(&adapter, &b, &pool(), &RunSpec::new(cfg), None).unwrap();
        assert_eq!(r.report.accuracy, 1.0, "{}", r.prompt.label());
    }
}

#[test]
fn failures_are_invalid_and_retried_next_run() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.jsonl");
    let b = bench(3, 3);
    let adapter = Counting::new(ConstantAdapter(Toxic));
    adapter.fail.lock().unwrap().push("t001".into());
    let (r, s) = run_benchmark(&adapter, &b, &pool(), &spec(), Some(&cache)).unwrap();
    assert_eq!(s.failed, 1);
    assert_eq!(r.items.len(), 6);
    let failed = r.items.iter().find(|i| i.id == "t001").unwrap();
    assert!(!failed.valid);
    assert_eq!(failed.predicted, NonToxic);
    assert!(failed.error.as_deref().unwrap().contains("connection reset"));
    assert_eq!(r.invalid, 1);
    assert!((r.invalid_rate - 1.0 / 6.0).abs() < 1e-12);

    adapter.fail.lock().unwrap().clear();
    let (r2, s2) = run_benchmark(&adapter, &b, &pool(), &spec(), Some(&cache)).unwrap();
    assert_eq!((s2.invoked, s2.cached), (1, 5));
    assert_eq!(r2.invalid, 0);
}

struct Babble;

impl ModelAdapter for Babble {
    fn name(&self) -> String {
        "babble".into()
    }
    fn kind(&self) -> AdapterKind {
        AdapterKind::Reference
    }
    fn invoke(&self, _: &EvalInput<'_>) -> Result<AdapterOutput, AdapterError> {
        Ok(AdapterOutput::text("Je ne peux pas répondre."))
    }
}

#[test]
fn invalid_policy_is_configurable() {
    let b = bench(2, 2);
    let mut cfg = spec();
    let (r, _) = run_benchmark(&Babble, &b, &pool(), &cfg, None).unwrap();
    assert!(r.items.iter().all(|i| !i.valid && i.predicted == NonToxic));
    assert_eq!(r.invalid_rate, 1.0);
    cfg.invalid_policy = InvalidPolicy::AsToxic;
    let (r, _) = run_benchmark(&Babble, &b, &pool(), &cfg, None).unwrap();
    assert!(r.items.iter().all(|i| i.predicted == Toxic));
}

#[test]
fn duplicate_ids_and_small_pool_are_errors() {
    let mut b = bench(1, 1);
    b.push(b[0].clone());
    assert!(matches!(
        run_benchmark(&ConstantAdapter(Toxic), &b, &pool(), &spec(), None),
        Err(EvalError::DuplicateId(_))
    ));
    let adapter = ChatAdapter::new(LexiconClient::default(), RetryPolicy::immediate(1));
    let cfg = RunSpec::new(PromptConfig::few_shot(10, 0));
    assert!(matches!(run_benchmark(&adapter, &bench(1, 1), &pool(), &cfg, None), Err(EvalError::Prompt(_))));
}

#[test]
fn canonical_answers_round_trip() {
    for class in [Toxic, NonToxic] {
        assert_eq!(parse_decision(class.answer_fr()).class(), Some(class));
    }
    assert_eq!(parse_decision(""), Decision::Invalid);
}

struct FixedScores(Vec<(&'static str, f64)>);

impl ModerationScorer for FixedScores {
    fn model_id(&self) -> String {
        "fixed".into()
    }
    fn score(&self, text: &str) -> Result<f64, ClientError> {
        self.0
            .iter()
            .find(|(k, _)| text.contains(k))
            .map(|(_, s)| *s)
            .ok_or_else(|| ClientError::Protocol("no score".into()))
    }
}

#[test]
fn moderation_threshold_maps_scores() {
    let b = bench(2, 2);
    let scorer = || FixedScores(vec![("crétin numéro 0", 0.9), ("crétin numéro 1", 0.4), ("merci", 0.1)]);
    let (r, _) = run_benchmark(&ModerationAdapter::new(scorer()), &b, &pool(), &spec(), None).unwrap();
    assert_eq!(r.report.confusion.tp, 1);
    assert_eq!(r.report.confusion.fn_, 1);
    assert_eq!(r.items[0].confidence, Some(0.9));
    assert_eq!(r.prompt_hash, "-");
    let (r, _) = run_benchmark(&ModerationAdapter::with_threshold(scorer(), 0.3), &b, &pool(), &spec(), None).unwrap();
    assert_eq!(r.report.accuracy, 1.0);
}

/// Serves `count` HTTP requests with the same JSON body, returning the request bodies.
fn mock_http(body: &'static str, count: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(count) {
            let mut stream = stream.unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(end) = text.find("\r\n\r\n") {
                    let len = text[..end]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= end + 4 + len {
                        seen.push(String::from_utf8_lossy(&buf[end + 4..]).into_owned());
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
        seen
    });
    (url, handle)
}

#[test]
fn openai_moderation_takes_max_category_score() {
    let body = r#"{"results":[{"flagged":true,"category_scores":{"harassment":0.72,"hate":0.31,"violence":0.02}}]}"#;
    let (url, server) = mock_http(body, 1);
    let scorer = OpenAiModeration::new(&url, Some("k".into()), "omni-moderation-latest").unwrap();
    assert_eq!(scorer.score("va te faire voir").unwrap(), 0.72);
    let requests = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(sent["input"], "va te faire voir");
    assert_eq!(sent["model"], "omni-moderation-latest");
}

struct UpperTranslator {
    fail_on: &'static str,
}

impl ChatClient for UpperTranslator {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        if request.id.ends_with(self.fail_on) {
            return Err(ClientError::Http { status: 500, body: "boom".into() });
        }
        let text = request.prompt.rsplit("\n\n").next().unwrap();
        Ok(format!("[fr] {text}"))
    }
    fn model_id(&self) -> String {
        "upper".into()
    }
}

fn english(toxic: usize, clean: usize) -> Vec<BenchItem> {
    (0..toxic)
        .map(|i| BenchItem { id: format!("jt{i:03}"), text: format!("you are an idiot {i}"), label: Toxic })
        .chain((0..clean).map(|i| BenchItem { id: format!("jn{i:03}"), text: format!("thanks for the fix {i}"), label: NonToxic }))
        .collect()
}

#[test]
fn translated_subset_keeps_ids_and_labels() {
    let items = english(198, 198);
    let client = UpperTranslator { fail_on: "never" };
    let out = translate_subset(&items, &client, Direction::En2Fr, &RetryPolicy::immediate(1));
    assert_eq!(out.items.len(), 396);
    assert!(out.excluded.is_empty());
    for (src, t) in items.iter().zip(&out.items) {
        assert_eq!(src.id, t.id);
        assert_eq!(src.label, t.label);
        assert_eq!(src.text, t.original);
        assert_eq!(t.translated, format!("[fr] {}", src.text));
        assert!(!t.passthrough);
    }
}

#[test]
fn translation_passthrough_and_exclusion() {
    let mut items = english(2, 1);
    items.push(BenchItem { id: "fr0".into(), text: "je ne suis pas d'accord avec toi".into(), label: NonToxic });
    let client = UpperTranslator { fail_on: ":jt001" };
    let out = translate_subset(&items, &client, Direction::En2Fr, &RetryPolicy::immediate(2));
    assert_eq!(out.excluded, vec!["jt001".to_string()]);
    assert_eq!(out.items.len(), 3);
    let fr = out.items.iter().find(|t| t.id == "fr0").unwrap();
    assert!(fr.passthrough);
    assert_eq!(fr.translated, fr.original);
}

fn result_of(items: &[(ToxicityClass, ToxicityClass, Option<f64>)]) -> (EvalResult, Vec<BenchItem>) {
    let bench: Vec<BenchItem> = items
        .iter()
        .enumerate()
        .map(|(i, (g, _, _))| BenchItem { id: format!("c{i}"), text: format!("texte {i}"), label: *g })
        .collect();
    let eval_items = items
        .iter()
        .enumerate()
        .map(|(i, (g, p, c))| EvalItem {
            id: format!("c{i}"),
            gold: *g,
            predicted: *p,
            raw: p.answer_fr().into(),
            valid: true,
            confidence: *c,
            error: None,
        })
        .collect();
    (assemble("m".into(), AdapterKind::Reference, false, &spec(), eval_items).unwrap(), bench)
}

#[test]
fn misclassification_listing() {
    let (perfect, b) = result_of(&[(Toxic, Toxic, None), (NonToxic, NonToxic, None)]);
    let m = misclassification_report(&perfect, &b, 5);
    assert!(m.false_positives.is_empty() && m.false_negatives.is_empty());

    let (one_fp, b) = result_of(&[(Toxic, Toxic, None), (NonToxic, Toxic, None), (NonToxic, NonToxic, None)]);
    let m = misclassification_report(&one_fp, &b, 5);
    assert_eq!(m.false_positives.len(), 1);
    assert_eq!(m.false_positives[0].id, "c1");
    assert_eq!(m.false_positives[0].text, "texte 1");
    let text = m.render();
    let fp_at = text.find(FP_HEADING).unwrap();
    let fn_at = text.find(FN_HEADING).unwrap();
    let c1_at = text.find("- c1").unwrap();
    assert!(fp_at < c1_at && c1_at < fn_at);

    let m = misclassification_report(&one_fp, &b, 0);
    let rendered = m.render();
    assert!(rendered.contains(FP_HEADING) && rendered.contains(FN_HEADING));
    assert!(!rendered.contains("- c"));
}

#[test]
fn misclassifications_ranked_by_confidence() {
    let (r, b) = result_of(&[
        (NonToxic, Toxic, Some(0.6)),
        (NonToxic, Toxic, Some(0.95)),
        (Toxic, NonToxic, Some(0.4)),
        (Toxic, NonToxic, Some(0.05)),
        (NonToxic, Toxic, Some(0.8)),
    ]);
    let m = misclassification_report(&r, &b, 2);
    let ids = |v: &[Misclassified]| v.iter().map(|x| x.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&m.false_positives), ["c1", "c4"]);
    assert_eq!(ids(&m.false_negatives), ["c3", "c2"]);
    assert_eq!(m.total_false_positives, 3);
}

#[test]
fn results_table_layout() {
    let (r, _) = result_of(&[(Toxic, Toxic, None), (NonToxic, Toxic, None), (NonToxic, NonToxic, None), (Toxic, Toxic, None)]);
    let text = render_results(std::slice::from_ref(&r));
    let header = text.lines().next().unwrap();
    for h in RESULT_HEADERS {
        assert!(header.contains(h));
    }
    let row = text.lines().find(|l| l.starts_with("m ")).unwrap();
    // non-toxic P = 1/1, R = 1/2; toxic P = 2/3, R = 1; accuracy 3/4.
    for cell in ["1.000", ".500", ".667", ".750"] {
        assert!(row.contains(cell), "{row}");
    }
    assert!(!row.contains("0."));
}

proptest! {
    #[test]
    fn precision_times_predicted_is_tp(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80)) {
        let cls = |b: bool| if b { Toxic } else { NonToxic };
        let items: Vec<_> = pairs.iter().map(|&(g, p)| (cls(g), cls(p), None)).collect();
        let (r, _) = result_of(&items);
        let predicted_toxic = pairs.iter().filter(|(_, p)| *p).count() as f64;
        let predicted_clean = pairs.len() as f64 - predicted_toxic;
        let tp = pairs.iter().filter(|(g, p)| *g && *p).count() as f64;
        let tn = pairs.iter().filter(|(g, p)| !*g && !*p).count() as f64;
        prop_assert!((r.report.toxic.precision * predicted_toxic - tp).abs() < 1e-9);
        prop_assert!((r.report.non_toxic.precision * predicted_clean - tn).abs() < 1e-9);
        prop_assert!((r.report.accuracy * pairs.len() as f64 - (tp + tn)).abs() < 1e-9);
        prop_assert!(r.accuracy_interval.lo <= r.report.accuracy && r.report.accuracy <= r.accuracy_interval.hi);
    }
}
