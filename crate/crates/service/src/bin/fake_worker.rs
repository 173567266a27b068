//! Stand-in for Blender running the worker shim, for tests and demos:
//! `meshwright-fake-worker --handshake-token TOKEN`.

use std::io::{self, BufReader};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let token =
        args.iter().position(|a| a == "--handshake-token").and_then(|i| args.get(i + 1)).cloned().unwrap_or_default();
    match meshwright_bridge::fake::serve(BufReader::new(io::stdin().lock()), io::stdout().lock(), &token) {
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
