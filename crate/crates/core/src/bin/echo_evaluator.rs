//! Minimal external evaluator speaking the JSON Lines protocol.
//!
//! Scores each config as the mean of its bit-widths. Flags inject faults for
//! exercising the client:
//!
//! ```text
//! --shuffle             answer buffered requests in reverse order
//! --die-after N         exit(3) on the N-th evaluate request ...
//! --die-marker PATH     ... but only if PATH does not exist yet (it is created)
//! --delay-ms N          sleep before each reply
//! --ready-layers N      claim N layers in the handshake
//! --error-on ID         reply with an error to request ID
//! --garbage             reply to evaluate requests with non-JSON
//! --count-file PATH     append one line per config evaluated
//! ```

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Duration;

use bitalloc::evaluators::protocol::{Request, Response};

#[derive(Default)]
struct Options {
    shuffle: bool,
    die_after: Option<usize>,
    die_marker: Option<PathBuf>,
    delay_ms: u64,
    ready_layers: Option<usize>,
    error_on: Option<u64>,
    garbage: bool,
    count_file: Option<PathBuf>,
}

fn parse_args() -> Options {
    let mut opts = Options::default();
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = || args.next().unwrap_or_else(|| panic!("{flag} needs a value"));
        match flag.as_str() {
            "--shuffle" => opts.shuffle = true,
            "--die-after" => opts.die_after = Some(value().parse().expect("integer")),
            "--die-marker" => opts.die_marker = Some(PathBuf::from(value())),
            "--delay-ms" => opts.delay_ms = value().parse().expect("integer"),
            "--ready-layers" => opts.ready_layers = Some(value().parse().expect("integer")),
            "--error-on" => opts.error_on = Some(value().parse().expect("integer")),
            "--garbage" => opts.garbage = true,
            "--count-file" => opts.count_file = Some(PathBuf::from(value())),
            other => panic!("unknown flag {other}"),
        }
    }
    opts
}

fn emit(out: &mut impl Write, response: &Response) {
    let line = serde_json::to_string(response).unwrap();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn main() {
    let opts = parse_args();
    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut layers = 0usize;
    let mut seen_requests = 0usize;
    let mut buffered: Vec<(u64, Vec<Vec<u8>>)> = Vec::new();

    loop {
        let line = if opts.shuffle && !buffered.is_empty() {
            match rx.recv_timeout(Duration::from_millis(30)) {
                Ok(l) => Some(l),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => return,
            }
        } else {
            match rx.recv() {
                Ok(l) => Some(l),
                Err(_) => return,
            }
        };

        let Some(line) = line else {
            // Quiet period: flush whatever was buffered, newest first.
            while let Some((id, configs)) = buffered.pop() {
                answer(&mut out, &opts, id, &configs);
            }
            continue;
        };

        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                emit(
                    &mut out,
                    &Response::Error {
                        id: None,
                        message: format!("malformed request: {e}"),
                    },
                );
                continue;
            }
        };
        match request {
            Request::Init { space, .. } => {
                layers = space.layers.len();
                let claimed = opts.ready_layers.unwrap_or(layers);
                emit(&mut out, &Response::Ready { layers: claimed });
            }
            Request::Evaluate { id, configs } => {
                seen_requests += 1;
                if let Some(n) = opts.die_after {
                    let armed = match &opts.die_marker {
                        Some(path) => !path.exists(),
                        None => true,
                    };
                    if armed && seen_requests >= n {
                        if let Some(path) = &opts.die_marker {
                            std::fs::write(path, b"died\n").unwrap();
                        }
                        std::process::exit(3);
                    }
                }
                if configs.iter().any(|c| c.len() != layers) {
                    emit(
                        &mut out,
                        &Response::Error {
                            id: Some(id),
                            message: format!("expected {layers} layers"),
                        },
                    );
                    continue;
                }
                if opts.shuffle {
                    buffered.push((id, configs));
                } else {
                    answer(&mut out, &opts, id, &configs);
                }
            }
            Request::Shutdown => {
                while let Some((id, configs)) = buffered.pop() {
                    answer(&mut out, &opts, id, &configs);
                }
                std::process::exit(0);
            }
        }
    }
}

fn answer(out: &mut impl Write, opts: &Options, id: u64, configs: &[Vec<u8>]) {
    if opts.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(opts.delay_ms));
    }
    if opts.garbage {
        writeln!(out, "this is not json").unwrap();
        out.flush().unwrap();
        return;
    }
    if opts.error_on == Some(id) {
        emit(
            out,
            &Response::Error {
                id: Some(id),
                message: "injected failure".into(),
            },
        );
        return;
    }
    if let Some(path) = &opts.count_file {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .unwrap();
        for _ in configs {
            writeln!(f, "{id}").unwrap();
        }
    }
    let scores = configs
        .iter()
        .map(|c| c.iter().map(|&b| f64::from(b)).sum::<f64>() / c.len() as f64)
        .collect();
    emit(out, &Response::Result { id, scores });
}
