use std::time::Duration;

use bitalloc::evaluators::{EvalError, Evaluator, ExternalEvaluator, ExternalOptions};
use bitalloc::space::{BitConfig, LayerSpec, SearchSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = env!("CARGO_BIN_EXE_echo-evaluator");

fn space(n: usize) -> SearchSpace {
    SearchSpace::from_layers(
        (0..n)
            .map(|i| LayerSpec::new(format!("layer{i}"), 100, vec![2, 3, 4]))
            .collect(),
    )
    .unwrap()
}

fn command(flags: &[&str]) -> Vec<String> {
    std::iter::once(FIXTURE.to_string())
        .chain(flags.iter().map(|s| s.to_string()))
        .collect()
}

fn mean_bits(c: &BitConfig) -> f64 {
    c.bits().iter().map(|&b| f64::from(b)).sum::<f64>() / c.len() as f64
}

fn configs(space: &SearchSpace, n: usize, seed: u64) -> Vec<BitConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| space.random_config(&mut rng)).collect()
}

fn options(per_request: usize) -> ExternalOptions {
    ExternalOptions {
        timeout: Duration::from_secs(20),
        configs_per_request: per_request,
    }
}

#[test]
fn round_trip_and_clean_shutdown() {
    let s = space(4);
    let mut ev = ExternalEvaluator::spawn(command(&[]), &s, options(16)).unwrap();
    let batch = configs(&s, 5, 1);
    let scores = ev.evaluate_batch(&batch).unwrap();
    for (c, got) in batch.iter().zip(&scores) {
        assert_eq!(*got, mean_bits(c));
    }
    assert_eq!(ev.evaluate(&s.max_config()).unwrap(), 4.0);
    assert!(ev.evaluate_batch(&[]).unwrap().is_empty());
    ev.shutdown().unwrap();
}

#[test]
fn out_of_order_replies_are_matched_by_id() {
    let s = space(6);
    let mut ev = ExternalEvaluator::spawn(command(&["--shuffle"]), &s, options(1)).unwrap();
    let batch = configs(&s, 50, 2);
    let scores = ev.evaluate_batch(&batch).unwrap();
    assert_eq!(scores.len(), 50);
    for (c, got) in batch.iter().zip(&scores) {
        assert_eq!(*got, mean_bits(c), "{c}");
    }
    // A second batch must not see leftovers of the first.
    let again = configs(&s, 7, 3);
    let scores = ev.evaluate_batch(&again).unwrap();
    for (c, got) in again.iter().zip(&scores) {
        assert_eq!(*got, mean_bits(c));
    }
    ev.shutdown().unwrap();
}

#[test]
fn dead_process_is_restarted_once_and_batch_resent() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("died");
    let counts = dir.path().join("counts");
    let flags = [
        "--die-after",
        "2",
        "--die-marker",
        marker.to_str().unwrap(),
        "--count-file",
        counts.to_str().unwrap(),
    ];
    let s = space(3);
    let mut ev = ExternalEvaluator::spawn(command(&flags), &s, options(4)).unwrap();
    let batch = configs(&s, 10, 4);
    let scores = ev.evaluate_batch(&batch).unwrap();
    for (c, got) in batch.iter().zip(&scores) {
        assert_eq!(*got, mean_bits(c));
    }
    assert!(marker.exists());
    assert_eq!(ev.restarts(), 1);
    ev.shutdown().unwrap();
}

#[test]
fn repeated_death_is_an_error() {
    let s = space(3);
    let mut ev = ExternalEvaluator::spawn(command(&["--die-after", "1"]), &s, options(4)).unwrap();
    let err = ev.evaluate_batch(&configs(&s, 3, 5)).unwrap_err();
    assert!(matches!(err, EvalError::Exited(_)), "{err}");
    assert_eq!(ev.restarts(), 1);
}

#[test]
fn handshake_layer_mismatch() {
    let s = space(5);
    let err = ExternalEvaluator::spawn(command(&["--ready-layers", "4"]), &s, options(4))
        .err()
        .expect("mismatch must fail");
    match err {
        EvalError::Handshake(msg) => assert!(msg.contains("4 layers"), "{msg}"),
        other => panic!("{other}"),
    }
}

#[test]
fn timeout_is_reported() {
    let s = space(3);
    let opts = ExternalOptions {
        timeout: Duration::from_millis(200),
        configs_per_request: 4,
    };
    let mut ev = ExternalEvaluator::spawn(command(&["--delay-ms", "2000"]), &s, opts).unwrap();
    let err = ev.evaluate_batch(&configs(&s, 2, 6)).unwrap_err();
    assert!(matches!(err, EvalError::Timeout(_)), "{err}");
}

#[test]
fn error_response_carries_id_and_message() {
    let s = space(3);
    let mut ev = ExternalEvaluator::spawn(command(&["--error-on", "1"]), &s, options(2)).unwrap();
    let err = ev.evaluate_batch(&configs(&s, 6, 7)).unwrap_err();
    match err {
        EvalError::Remote { id, message } => {
            assert_eq!(id, Some(1));
            assert_eq!(message, "injected failure");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn garbage_reply_is_malformed() {
    let s = space(3);
    let mut ev = ExternalEvaluator::spawn(command(&["--garbage"]), &s, options(4)).unwrap();
    let err = ev.evaluate_batch(&configs(&s, 1, 8)).unwrap_err();
    assert!(matches!(err, EvalError::Malformed(_)), "{err}");
}

#[test]
fn missing_binary_fails_to_spawn() {
    let s = space(2);
    let err = ExternalEvaluator::spawn(
        vec!["/nonexistent/evaluator-binary".into()],
        &s,
        options(4),
    )
    .err()
    .unwrap();
    assert!(matches!(err, EvalError::Spawn { .. }), "{err}");
}
