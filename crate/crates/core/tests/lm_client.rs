use std::sync::Arc;
use std::time::{Duration, Instant};

use gaplab::corpus::{synth_corpus, builtin_grammar, Vocab};
use gaplab::lm_client::{
    align_subwords, score_paradigms, score_remote, ClientError, ClientOptions, MockOptions, MockScorer, WordModel,
};
use gaplab::neural_lm::{sequence_surprisal, LmConfig, LmParameters};
use gaplab::scoring::score_items;
use gaplab::stimgen::{bind_lexicon, builtin_lexicon, builtin_template};
use gaplab::Construction;

fn fixed_model() -> Arc<WordModel> {
    // log-prob depends on word length and position only
    Arc::new(|words: &[String]| words.iter().enumerate().map(|(i, w)| -0.25 * w.len() as f64 - 0.1 * i as f64).collect())
}

fn fast() -> ClientOptions {
    ClientOptions {
        backoff: Duration::from_millis(10),
        timeout: Duration::from_secs(10),
        ..ClientOptions::default()
    }
}

#[test]
fn responses_keep_input_order() {
    let mock = MockScorer::start(fixed_model(), MockOptions { delay: Duration::from_millis(5), ..Default::default() }).unwrap();
    let sentences: Vec<String> = (0..40).map(|k| format!("sentence number {k} is{}", " long".repeat(k % 7))).collect();
    let opts = ClientOptions { batch_size: 3, max_in_flight: 3, ..fast() };
    let out = score_remote(&mock.url, &sentences, &opts).unwrap();
    assert_eq!(out.len(), 40);
    for (s, r) in sentences.iter().zip(&out) {
        assert_eq!(r.tokens.concat().replace('Ġ', " "), *s);
    }
    assert_eq!(mock.requests(), 14);
    assert!(mock.peak_in_flight() <= 3);
}

#[test]
fn two_sentences_two_responses() {
    let mock = MockScorer::start(fixed_model(), MockOptions::default()).unwrap();
    let s = vec!["a b".to_string(), "ccccc d".to_string()];
    let out = score_remote(&mock.url, &s, &fast()).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1].tokens, ["cc", "ccc", "Ġd"]);
    assert_eq!(out[0].model, "mock-subword");
}

#[test]
fn unreachable_endpoint_fails_after_three_attempts() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let start = Instant::now();
    let err = score_remote(&format!("http://127.0.0.1:{port}"), &["a".to_string()], &fast()).unwrap_err();
    match err {
        ClientError::Connection { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("{other}"),
    }
    // two backoff sleeps: 10 ms then 20 ms
    assert!(start.elapsed() >= Duration::from_millis(30));
}

#[test]
fn transient_failures_are_retried() {
    let mock = MockScorer::start(fixed_model(), MockOptions { fail_first: 2, workers: 1, ..Default::default() }).unwrap();
    let out = score_remote(&mock.url, &["a b".to_string()], &fast()).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(mock.requests(), 3);

    let mock = MockScorer::start(fixed_model(), MockOptions { fail_first: 3, workers: 1, ..Default::default() }).unwrap();
    let err = score_remote(&mock.url, &["a b".to_string()], &fast()).unwrap_err();
    assert!(matches!(err, ClientError::Status { status: 503, attempts: 3, .. }), "{err}");
}

#[test]
fn protocol_mismatch_and_malformed_payloads() {
    let mock = MockScorer::start(fixed_model(), MockOptions { proto: "2".into(), ..Default::default() }).unwrap();
    let err = score_remote(&mock.url, &["a".to_string()], &fast()).unwrap_err();
    assert!(matches!(err, ClientError::ProtocolMismatch { got: Some(ref v) } if v == "2"), "{err}");
    assert_eq!(mock.requests(), 1);

    let mock = MockScorer::start(fixed_model(), MockOptions { malformed: true, ..Default::default() }).unwrap();
    match score_remote(&mock.url, &["a".to_string()], &fast()).unwrap_err() {
        ClientError::Malformed { excerpt, .. } => assert!(excerpt.starts_with("{\"model\"")),
        other => panic!("{other}"),
    }
}

#[test]
fn region_surprisal_matches_hand_sum() {
    let mock = MockScorer::start(fixed_model(), MockOptions::default()).unwrap();
    let words: Vec<String> = "the journalist said that these snacks were sold".split(' ').map(String::from).collect();
    let r = &score_remote(&mock.url, &[words.join(" ")], &fast()).unwrap()[0];
    let bits = align_subwords(&words, r).unwrap();
    // region "snacks were" = words 5..7; hand sum of fixed word log-probs
    let hand: f64 = [(6.0, 5.0), (4.0, 6.0)].iter().map(|(len, i)| 0.25 * len + 0.1 * i).sum::<f64>() / std::f64::consts::LN_2;
    assert!((bits[5] + bits[6] - hand).abs() < 1e-12);
    // aggregation preserves the sentence total
    let subword_total: f64 = r.logprobs.iter().flatten().map(|v| -v).sum::<f64>() / std::f64::consts::LN_2;
    assert!((bits.iter().sum::<f64>() - subword_total).abs() < 1e-9);
}

#[test]
fn paradigm_via_mock_equals_in_process_scoring() {
    let split = synth_corpus(&builtin_grammar(), 4000, 3).unwrap();
    let vocab = Vocab::build(&split.train, 10_000).unwrap();
    let config = LmConfig { embed_dim: 8, hidden_dim: 8, num_layers: 1, ..LmConfig::desk() };
    let params = Arc::new(LmParameters::<f32>::init(&config, vocab.len()));
    let vocab = Arc::new(vocab);
    let items = bind_lexicon(builtin_template(Construction::Clefting), builtin_lexicon(Construction::Clefting), 12, 5).unwrap();

    let direct = score_items(&items, |t| sequence_surprisal(&params, &vocab, t, false)).unwrap();
    let (p, v) = (params.clone(), vocab.clone());
    let served: Arc<WordModel> = Arc::new(move |words: &[String]| {
        let bits = sequence_surprisal(&p, &v, words, false).unwrap();
        bits.iter().map(|b| -b * std::f64::consts::LN_2).collect()
    });
    let mock = MockScorer::start(served, MockOptions::default()).unwrap();
    let (model, remote) = score_paradigms(&mock.url, &items, &fast()).unwrap();
    assert_eq!(model, "mock-subword");
    assert_eq!(direct.len(), remote.len());
    for (a, b) in direct.iter().zip(&remote) {
        assert_eq!((a.item_id, a.condition()), (b.item_id, b.condition()));
        assert!((a.region_surprisal_bits - b.region_surprisal_bits).abs() < 1e-9);
    }
}
