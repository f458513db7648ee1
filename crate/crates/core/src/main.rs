fn main() {
    std::process::exit(msnlac::cli::run(std::env::args_os()));
}
