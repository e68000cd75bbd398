fn main() {
    std::process::exit(tempsurp::cli::run(std::env::args_os()));
}
