fn main() {
    std::process::exit(coherence_lab::cli::run(std::env::args_os()));
}
