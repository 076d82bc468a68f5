//! Command-line front end. Placeholder while the library comes up.

use std::process::ExitCode;

pub fn run() -> ExitCode {
    eprintln!("not yet wired");
    ExitCode::from(2)
}
