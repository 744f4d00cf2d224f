//! Protocol worker serving the built-in rules and optimizers on stdin/stdout.

use std::io::{BufReader, BufWriter};
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = BufReader::new(std::io::stdin());
    let stdout = BufWriter::new(std::io::stdout());
    match moh_core::sandbox::serve(stdin, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("moh-native-worker: {e}");
            ExitCode::FAILURE
        }
    }
}
