fn main() {
    std::process::exit(nnquad_cli::run(std::env::args_os()));
}
