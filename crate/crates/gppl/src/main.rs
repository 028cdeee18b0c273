fn main() {
    std::process::exit(gppl::cli::run(std::env::args_os()));
}
