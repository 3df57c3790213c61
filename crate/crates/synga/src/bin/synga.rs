//! `synga` command-line binary; all logic lives in [`synga::cli`].

fn main() {
    std::process::exit(synga::cli::main());
}
