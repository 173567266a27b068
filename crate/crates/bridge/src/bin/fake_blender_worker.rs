//! Fake Blender worker speaking the shim protocol on stdio.
//!
//! Accepts the same command line as Blender running the shim. The
//! `FAKE_WORKER_MODE` environment variable selects startup faults:
//! `exit` (die before the handshake), `hang` (never handshake),
//! `bad-token` (answer with the wrong token).

use std::io::{self, BufReader};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let token = args
        .iter()
        .position(|a| a == "--handshake-token")
        .and_then(|i| args.get(i + 1))
        .cloned()
        .unwrap_or_default();

    match std::env::var("FAKE_WORKER_MODE").as_deref() {
        Ok("exit") => {
            eprintln!("fake worker: refusing to start");
            std::process::exit(3);
        }
        Ok("hang") => loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        },
        _ => {}
    }
    let token = if std::env::var("FAKE_WORKER_MODE").as_deref() == Ok("bad-token") {
        format!("{token}-wrong")
    } else {
        token
    };

    let stdin = BufReader::new(io::stdin().lock());
    let stdout = io::stdout().lock();
    match meshwright_bridge::fake::serve(stdin, stdout, &token) {
        Ok(true) => {
            eprintln!("fake worker: crash requested");
            std::process::exit(101);
        }
        Ok(false) => {}
        Err(e) => {
            eprintln!("fake worker: {e}");
            std::process::exit(1);
        }
    }
}
