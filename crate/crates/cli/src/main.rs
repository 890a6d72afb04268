fn main() {
    std::process::exit(linf_isotonic_cli::run(std::env::args_os()));
}
