fn main() {
    std::process::exit(onesided_cli::run(std::env::args_os()));
}
