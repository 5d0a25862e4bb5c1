//! Thin wrapper over the library's command-line pipeline.

use std::process::exit;

fn main() {
    exit(textfield::cli::run(std::env::args_os()));
}
